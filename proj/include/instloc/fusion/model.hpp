#pragma once

#include <utility>

#include "instloc/fusion/attention.hpp"

namespace instloc::fusion
{
/// Square RGB-D crop: rgb is (S*S) x 3, depth (S*S) x 1, row-major pixels.
template <typename T>
struct RgbdPatch
{
  int size = 0;
  Mat<T> rgb;
  Mat<T> depth;
};

/// Rows are tiles in raster order; columns are tile pixels in raster order
/// with channels innermost.
template <typename T>
Mat<T> Patchify(const Mat<T>& image, int size, int patch)
{
  const int grid = size / patch;
  const auto ch = static_cast<int>(image.cols());
  Mat<T> out(grid * grid, patch * patch * ch);
  for (int gy = 0; gy < grid; ++gy)
  {
    for (int gx = 0; gx < grid; ++gx)
    {
      for (int dy = 0; dy < patch; ++dy)
      {
        for (int dx = 0; dx < patch; ++dx)
        {
          const int pixel = (gy * patch + dy) * size + gx * patch + dx;
          out.row(gy * grid + gx).segment((dy * patch + dx) * ch, ch) = image.row(pixel);
        }
      }
    }
  }
  return out;
}

enum class DropoutCase
{
  kBoth,
  kRgbOnly,    // depth features zeroed
  kDepthOnly,  // RGB features zeroed
};

inline const char* DropoutCaseName(DropoutCase c)
{
  switch (c)
  {
    case DropoutCase::kRgbOnly:
      return "rgb_only";
    case DropoutCase::kDepthOnly:
      return "depth_only";
    default:
      return "both";
  }
}

struct DropoutConfig
{
  double p_rgb = 0.2;
  double p_depth = 0.2;

  void Validate() const
  {
    if (!(p_rgb >= 0.0 && p_depth >= 0.0 && p_rgb + p_depth <= 1.0))
    {
      throw ConfigError("modality dropout: need p_rgb, p_depth >= 0 and p_rgb + p_depth <= 1");
    }
  }

  /// Maps a uniform draw in [0, 1) to a case: [0, p_rgb) keeps RGB only,
  /// [p_rgb, p_rgb + p_depth) keeps depth only.
  DropoutCase Select(double u) const
  {
    Validate();
    if (u < p_rgb)
    {
      return DropoutCase::kRgbOnly;
    }
    if (u < p_rgb + p_depth)
    {
      return DropoutCase::kDepthOnly;
    }
    return DropoutCase::kBoth;
  }
};

template <typename T>
std::pair<FeatureMap<T>, FeatureMap<T>> ModalityDropout(const FeatureMap<T>& rgb, const FeatureMap<T>& depth,
                                                         const DropoutConfig& config, double u)
{
  std::pair<FeatureMap<T>, FeatureMap<T>> out{rgb, depth};
  switch (config.Select(u))
  {
    case DropoutCase::kRgbOnly:
      out.second.data.setZero();
      break;
    case DropoutCase::kDepthOnly:
      out.first.data.setZero();
      break;
    default:
      break;
  }
  return out;
}

template <typename T>
struct FuseCache
{
  int height = 0;
  int width = 0;
  Mat<T> rgb;  // encoder features after dropout
  Mat<T> depth;
  Mat<T> q_rgb, v_rgb, q_depth, v_depth;
  AttentionCache<T> r2r, d2r, d2d, r2d;
  Mat<T> f_r, f_d;
  Mat<T> columns;  // 3x3 neighborhoods of [rgb | depth], N x (9 * 2E)
  Mat<T> hidden;   // tanh activations
  Mat<T> alpha;    // N x 1
};

template <typename T>
struct FuseOutput
{
  Mat<T> embedding;  // 1 x E
  Mat<T> alpha;      // N x 1
  Mat<T> f_r;
  Mat<T> f_d;
};

/// Zero-padded 3x3 neighborhoods, neighbor-major then channel.
template <typename T>
Mat<T> Im2Col3x3(const Mat<T>& x, int height, int width)
{
  const auto ch = x.cols();
  Mat<T> col = Mat<T>::Zero(x.rows(), 9 * ch);
  for (int y = 0; y < height; ++y)
  {
    for (int xx = 0; xx < width; ++xx)
    {
      for (int t = 0; t < 9; ++t)
      {
        const int ny = y + t / 3 - 1;
        const int nx = xx + t % 3 - 1;
        if (ny >= 0 && ny < height && nx >= 0 && nx < width)
        {
          col.row(y * width + xx).segment(t * ch, ch) = x.row(ny * width + nx);
        }
      }
    }
  }
  return col;
}

template <typename T>
Mat<T> Col2Im3x3(const Mat<T>& col, int height, int width, Eigen::Index channels)
{
  Mat<T> x = Mat<T>::Zero(static_cast<Eigen::Index>(height) * width, channels);
  for (int y = 0; y < height; ++y)
  {
    for (int xx = 0; xx < width; ++xx)
    {
      for (int t = 0; t < 9; ++t)
      {
        const int ny = y + t / 3 - 1;
        const int nx = xx + t % 3 - 1;
        if (ny >= 0 && ny < height && nx >= 0 && nx < width)
        {
          x.row(ny * width + nx) += col.row(y * width + xx).segment(t * channels, channels);
        }
      }
    }
  }
  return x;
}

/// Per-position modality weight: 3x3 conv, tanh, 1x1 conv, sigmoid on the
/// concatenated encoder features. Returns N x 1.
template <typename T>
Mat<T> WeightingAlpha(const Mat<T>& rgb, const Mat<T>& depth, int height, int width, const FusionParams<T>& p,
                      Mat<T>* columns = nullptr, Mat<T>* hidden = nullptr)
{
  Mat<T> both(rgb.rows(), rgb.cols() + depth.cols());
  both << rgb, depth;
  Mat<T> col = Im2Col3x3(both, height, width);
  Mat<T> hid = p.weight_conv3.Forward(col).array().tanh().matrix();
  Mat<T> alpha = (T(1) / (T(1) + (-p.weight_conv1.Forward(hid).array()).exp())).matrix();
  if (columns != nullptr)
  {
    *columns = std::move(col);
  }
  if (hidden != nullptr)
  {
    *hidden = std::move(hid);
  }
  return alpha;
}

/// Spatial mean of alpha * f_R + (1 - alpha) * f_D.
template <typename T>
Mat<T> PooledCombination(const Mat<T>& f_r, const Mat<T>& f_d, const Mat<T>& alpha)
{
  const Mat<T> combined =
      (f_r.array().colwise() * alpha.col(0).array() + f_d.array().colwise() * (T(1) - alpha.col(0).array()))
          .matrix();
  return combined.colwise().mean();
}

/// Dual-path refinement, alpha weighting and global average pooling on
/// encoder features stored as (H*W) x E matrices.
template <typename T>
FuseOutput<T> ForwardFuse(const Mat<T>& rgb, const Mat<T>& depth, int height, int width, const FusionParams<T>& p,
                          FuseCache<T>* cache = nullptr)
{
  const AttentionConfig ac = p.config.Attention();
  FuseCache<T> local;
  FuseCache<T>& k = cache != nullptr ? *cache : local;
  k.height = height;
  k.width = width;
  k.rgb = rgb;
  k.depth = depth;
  k.q_rgb = p.query_rgb.Forward(rgb);
  k.v_rgb = p.value_rgb.Forward(rgb);
  k.q_depth = p.query_depth.Forward(depth);
  k.v_depth = p.value_depth.Forward(depth);
  k.f_r = rgb + DeformableAttention(k.q_rgb, k.v_rgb, height, width, p.r2r, ac, &k.r2r) +
          DeformableAttention(k.q_depth, k.v_rgb, height, width, p.d2r, ac, &k.d2r);
  k.f_d = depth + DeformableAttention(k.q_depth, k.v_depth, height, width, p.d2d, ac, &k.d2d) +
          DeformableAttention(k.q_rgb, k.v_depth, height, width, p.r2d, ac, &k.r2d);

  k.alpha = WeightingAlpha(rgb, depth, height, width, p, &k.columns, &k.hidden);

  FuseOutput<T> out;
  out.embedding = PooledCombination(k.f_r, k.f_d, k.alpha);
  out.alpha = k.alpha;
  out.f_r = k.f_r;
  out.f_d = k.f_d;
  return out;
}

template <typename T>
FuseOutput<T> ForwardFuse(const FeatureMap<T>& rgb, const FeatureMap<T>& depth, const FusionParams<T>& p)
{
  rgb.Validate();
  depth.Validate();
  if (!rgb.SameShape(depth) || rgb.Channels() != p.config.embed)
  {
    throw InputError("forward_fuse: RGB and depth maps must share H, W and E = " + std::to_string(p.config.embed));
  }
  return ForwardFuse(rgb.data, depth.data, rgb.height, rgb.width, p);
}

/// Backpropagates dL/dembedding; accumulates into grad and returns
/// dL/d(rgb features), dL/d(depth features).
template <typename T>
std::pair<Mat<T>, Mat<T>> FuseBackward(const Mat<T>& d_embedding, const FuseCache<T>& k, const FusionParams<T>& p,
                                       FusionParams<T>& grad)
{
  const AttentionConfig ac = p.config.Attention();
  const auto n = k.rgb.rows();
  const auto e = k.rgb.cols();
  const int h = k.height;
  const int w = k.width;

  const Mat<T> d_combined = d_embedding.replicate(n, 1) / static_cast<T>(n);
  const Mat<T> d_fr = (d_combined.array().colwise() * k.alpha.col(0).array()).matrix();
  const Mat<T> d_fd = (d_combined.array().colwise() * (T(1) - k.alpha.col(0).array())).matrix();
  const Mat<T> d_alpha = (d_combined.array() * (k.f_r - k.f_d).array()).rowwise().sum().matrix();
  const Mat<T> d_alpha_pre = (d_alpha.array() * k.alpha.array() * (T(1) - k.alpha.array())).matrix();
  const Mat<T> d_hidden = p.weight_conv1.Backward(k.hidden, d_alpha_pre, grad.weight_conv1);
  const Mat<T> d_hidden_pre = (d_hidden.array() * (T(1) - k.hidden.array().square())).matrix();
  const Mat<T> d_columns = p.weight_conv3.Backward(k.columns, d_hidden_pre, grad.weight_conv3);
  const Mat<T> d_both = Col2Im3x3(d_columns, h, w, 2 * e);

  Mat<T> d_rgb = d_fr + d_both.leftCols(e);
  Mat<T> d_depth = d_fd + d_both.rightCols(e);
  Mat<T> d_q_rgb = Mat<T>::Zero(n, e);
  Mat<T> d_v_rgb = Mat<T>::Zero(n, e);
  Mat<T> d_q_depth = Mat<T>::Zero(n, e);
  Mat<T> d_v_depth = Mat<T>::Zero(n, e);
  DeformableAttentionBackward(d_fr, k.r2r, h, w, p.r2r, ac, grad.r2r, d_q_rgb, d_v_rgb);
  DeformableAttentionBackward(d_fr, k.d2r, h, w, p.d2r, ac, grad.d2r, d_q_depth, d_v_rgb);
  DeformableAttentionBackward(d_fd, k.d2d, h, w, p.d2d, ac, grad.d2d, d_q_depth, d_v_depth);
  DeformableAttentionBackward(d_fd, k.r2d, h, w, p.r2d, ac, grad.r2d, d_q_rgb, d_v_depth);
  d_rgb += p.query_rgb.Backward(k.rgb, d_q_rgb, grad.query_rgb);
  d_rgb += p.value_rgb.Backward(k.rgb, d_v_rgb, grad.value_rgb);
  d_depth += p.query_depth.Backward(k.depth, d_q_depth, grad.query_depth);
  d_depth += p.value_depth.Backward(k.depth, d_v_depth, grad.value_depth);
  return {d_rgb, d_depth};
}

template <typename T>
struct SampleCache
{
  Mat<T> rgb_tiles;
  Mat<T> depth_tiles;
  DropoutCase dropout = DropoutCase::kBoth;
  FuseCache<T> fuse;
};

/// Linear patch embedding; zero when dropout removes the modality.
template <typename T>
Mat<T> EncodeRgb(const Mat<T>& tiles, const FusionParams<T>& p, DropoutCase dropout)
{
  return dropout == DropoutCase::kDepthOnly ? Mat<T>::Zero(tiles.rows(), p.config.embed)
                                            : p.encoder_rgb.Forward(tiles);
}

template <typename T>
Mat<T> EncodeDepth(const Mat<T>& tiles, const FusionParams<T>& p, DropoutCase dropout)
{
  return dropout == DropoutCase::kRgbOnly ? Mat<T>::Zero(tiles.rows(), p.config.embed)
                                          : p.encoder_depth.Forward(tiles);
}

/// Stub encoder (linear patch embedding, depth lifted from one channel to
/// E), modality dropout, then fusion. Returns the 1 x E embedding.
template <typename T>
Mat<T> EmbedSample(const RgbdPatch<T>& sample, const FusionParams<T>& p, DropoutCase dropout,
                   SampleCache<T>* cache = nullptr)
{
  const FusionConfig& c = p.config;
  if (sample.size != c.image || sample.rgb.rows() != c.image * c.image || sample.rgb.cols() != 3 ||
      sample.depth.rows() != sample.rgb.rows() || sample.depth.cols() != 1)
  {
    throw InputError("fusion: sample must be " + std::to_string(c.image) + "x" + std::to_string(c.image) + " RGB-D");
  }
  SampleCache<T> local;
  SampleCache<T>& k = cache != nullptr ? *cache : local;
  k.dropout = dropout;
  k.rgb_tiles = Patchify(sample.rgb, c.image, c.patch);
  k.depth_tiles = Patchify(sample.depth, c.image, c.patch);
  const Mat<T> rgb = EncodeRgb(k.rgb_tiles, p, dropout);
  const Mat<T> depth = EncodeDepth(k.depth_tiles, p, dropout);
  return ForwardFuse(rgb, depth, c.Grid(), c.Grid(), p, &k.fuse).embedding;
}

template <typename T>
void EmbedSampleBackward(const Mat<T>& d_embedding, const SampleCache<T>& k, const FusionParams<T>& p,
                         FusionParams<T>& grad)
{
  const auto [d_rgb, d_depth] = FuseBackward(d_embedding, k.fuse, p, grad);
  // A dropped modality was replaced by a constant, so nothing flows back.
  if (k.dropout != DropoutCase::kDepthOnly)
  {
    p.encoder_rgb.Backward(k.rgb_tiles, d_rgb, grad.encoder_rgb);
  }
  if (k.dropout != DropoutCase::kRgbOnly)
  {
    p.encoder_depth.Backward(k.depth_tiles, d_depth, grad.encoder_depth);
  }
}
}  // namespace instloc::fusion
