#pragma once

#include <array>
#include <cmath>

#include "instloc/fusion/params.hpp"

namespace instloc::fusion
{
/// H x W x E tensor stored as (H * W) x E, row index y * W + x.
template <typename T>
struct FeatureMap
{
  int height = 0;
  int width = 0;
  Mat<T> data;

  FeatureMap() = default;
  FeatureMap(int h, int w, int e) : height(h), width(w), data(Mat<T>::Zero(static_cast<Eigen::Index>(h) * w, e)) {}
  FeatureMap(int h, int w, Mat<T> d) : height(h), width(w), data(std::move(d))
  {
    Validate();
  }

  int Channels() const { return static_cast<int>(data.cols()); }

  void Validate() const
  {
    if (height < 1 || width < 1 || data.cols() < 1 || data.rows() != static_cast<Eigen::Index>(height) * width)
    {
      throw InputError("feature map: inconsistent shape");
    }
    if (!data.allFinite())
    {
      throw InputError("feature map: non-finite entries");
    }
  }

  bool SameShape(const FeatureMap& o) const
  {
    return height == o.height && width == o.width && data.cols() == o.data.cols();
  }
};

/// Bilinear taps of a sample point in pixel coordinates. Out-of-bounds
/// corners get index -1 and read as zero.
template <typename T>
struct BilinearTaps
{
  std::array<int, 4> index{};
  std::array<T, 4> weight{};
  std::array<T, 4> d_x{};  // d weight / d px
  std::array<T, 4> d_y{};

  BilinearTaps(T px, T py, int height, int width)
  {
    using std::floor;
    const T fx0 = floor(px);
    const T fy0 = floor(py);
    const int x0 = static_cast<int>(fx0);
    const int y0 = static_cast<int>(fy0);
    const T ax = px - fx0;
    const T ay = py - fy0;
    const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
    const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
    weight = {(1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay, ax * ay};
    d_x = {-(1 - ay), 1 - ay, -ay, ay};
    d_y = {-(1 - ax), -ax, 1 - ax, ax};
    for (int c = 0; c < 4; ++c)
    {
      const bool inside = xs[c] >= 0 && xs[c] < width && ys[c] >= 0 && ys[c] < height;
      index[c] = inside ? ys[c] * width + xs[c] : -1;
    }
  }
};

template <typename T>
struct AttentionCache
{
  Mat<T> query;
  Mat<T> value;
  Mat<T> offsets;  // N x (heads * K * 2)
  Mat<T> weights;  // N x (heads * K), softmax over K per head
  Mat<T> samples;  // (N * heads * K) x head_dim
  Mat<T> mixed;    // N x E, heads concatenated before the output projection
};

/// Multi-head deformable attention over an H x W grid. Each query position
/// predicts K offsets per head relative to its reference point; with the
/// usual normalized reference ((x + 0.5) / W, (y + 0.5) / H) and
/// half-pixel grid sampling this reduces to sampling at (x + dx, y + dy) in
/// pixels.
template <typename T>
Mat<T> DeformableAttention(const Mat<T>& query, const Mat<T>& value, int height, int width,
                           const AttentionParams<T>& p, const AttentionConfig& c, AttentionCache<T>* cache = nullptr)
{
  const int n = height * width;
  const int hd = c.HeadDim();
  AttentionCache<T> local;
  AttentionCache<T>& k = cache != nullptr ? *cache : local;
  k.query = query;
  k.value = value;
  k.offsets = p.offsets.Forward(query);
  k.weights = p.logits.Forward(query);
  k.samples = Mat<T>::Zero(static_cast<Eigen::Index>(n) * c.heads * c.points, hd);
  k.mixed = Mat<T>::Zero(n, c.dim);
  const auto e = value.cols();
  for (int q = 0; q < n; ++q)
  {
    const int x = q % width;
    const int y = q / width;
    T* mixed = k.mixed.data() + static_cast<Eigen::Index>(q) * e;
    for (int h = 0; h < c.heads; ++h)
    {
      auto logits = k.weights.row(q).segment(h * c.points, c.points);
      const T mx = logits.maxCoeff();
      logits = (logits.array() - mx).exp().matrix();
      logits /= logits.sum();
      for (int j = 0; j < c.points; ++j)
      {
        const int slot = h * c.points + j;
        const BilinearTaps<T> taps(x + k.offsets(q, 2 * slot), y + k.offsets(q, 2 * slot + 1), height, width);
        T* s = k.samples.data() + ((static_cast<Eigen::Index>(q) * c.heads + h) * c.points + j) * hd;
        for (int t = 0; t < 4; ++t)
        {
          if (taps.index[t] >= 0)
          {
            const T* v = value.data() + taps.index[t] * e + h * hd;
            for (int d = 0; d < hd; ++d)
            {
              s[d] += taps.weight[t] * v[d];
            }
          }
        }
        const T a = k.weights(q, slot);
        for (int d = 0; d < hd; ++d)
        {
          mixed[h * hd + d] += a * s[d];
        }
      }
    }
  }
  return p.output.Forward(k.mixed);
}

template <typename T>
FeatureMap<T> DeformableAttention(const FeatureMap<T>& query, const FeatureMap<T>& value, const AttentionParams<T>& p,
                                  const AttentionConfig& c)
{
  c.Validate();
  query.Validate();
  value.Validate();
  if (!query.SameShape(value) || query.Channels() != c.dim)
  {
    throw InputError("deformable attention: query and value maps must share H, W and E = " + std::to_string(c.dim));
  }
  return FeatureMap<T>(query.height, query.width,
                       DeformableAttention(query.data, value.data, query.height, query.width, p, c));
}

/// Accumulates parameter gradients and dL/dquery, dL/dvalue.
template <typename T>
void DeformableAttentionBackward(const Mat<T>& d_out, const AttentionCache<T>& k, int height, int width,
                                 const AttentionParams<T>& p, const AttentionConfig& c, AttentionParams<T>& grad,
                                 Mat<T>& d_query, Mat<T>& d_value)
{
  const int n = height * width;
  const int hd = c.HeadDim();
  const Mat<T> d_mixed = p.output.Backward(k.mixed, d_out, grad.output);
  Mat<T> d_offsets = Mat<T>::Zero(n, c.heads * c.points * 2);
  Mat<T> d_logits = Mat<T>::Zero(n, c.heads * c.points);
  const auto e = k.value.cols();
  for (int q = 0; q < n; ++q)
  {
    const int x = q % width;
    const int y = q / width;
    for (int h = 0; h < c.heads; ++h)
    {
      const T* dm = d_mixed.data() + static_cast<Eigen::Index>(q) * e + h * hd;
      T dot = 0;
      for (int j = 0; j < c.points; ++j)
      {
        const int slot = h * c.points + j;
        const T* s = k.samples.data() + ((static_cast<Eigen::Index>(q) * c.heads + h) * c.points + j) * hd;
        T dw = 0;
        for (int d = 0; d < hd; ++d)
        {
          dw += dm[d] * s[d];
        }
        d_logits(q, slot) = dw;
        dot += k.weights(q, slot) * dw;

        const T a = k.weights(q, slot);
        const BilinearTaps<T> taps(x + k.offsets(q, 2 * slot), y + k.offsets(q, 2 * slot + 1), height, width);
        for (int t = 0; t < 4; ++t)
        {
          if (taps.index[t] < 0)
          {
            continue;
          }
          const T* v = k.value.data() + taps.index[t] * e + h * hd;
          T* dv = d_value.data() + taps.index[t] * e + h * hd;
          T g = 0;
          const T aw = a * taps.weight[t];
          for (int d = 0; d < hd; ++d)
          {
            g += dm[d] * v[d];
            dv[d] += aw * dm[d];
          }
          g *= a;
          d_offsets(q, 2 * slot) += taps.d_x[t] * g;
          d_offsets(q, 2 * slot + 1) += taps.d_y[t] * g;
        }
      }
      for (int j = 0; j < c.points; ++j)
      {
        const int slot = h * c.points + j;
        d_logits(q, slot) = k.weights(q, slot) * (d_logits(q, slot) - dot);
      }
    }
  }
  d_query += p.offsets.Backward(k.query, d_offsets, grad.offsets);
  d_query += p.logits.Backward(k.query, d_logits, grad.logits);
}
}  // namespace instloc::fusion
