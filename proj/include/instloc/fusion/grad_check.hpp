#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "instloc/fusion/batch.hpp"

namespace instloc::fusion
{
struct GroupError
{
  std::string group;
  double max_error = 0.0;
  std::size_t parameters = 0;
};

struct GradCheckResult
{
  DropoutCase dropout = DropoutCase::kBoth;
  double loss = 0.0;
  double max_error = 0.0;
  std::string worst;  // tensor[index] with the largest error
  std::vector<GroupError> groups;

  bool Passed(double tolerance) const { return max_error < tolerance; }
};

/// |g_a - g_n| / max(|g_a|, |g_n|, 1e-8)
inline double RelativeError(double analytic, double numeric)
{
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

/// Loss of a fixed batch under in-place parameter edits. Intermediates at
/// the base parameters are cached per sample, and Loss(group) recomputes
/// only what depends on the named parameter group.
template <typename T>
class StagedLoss
{
 public:
  StagedLoss(const FusionParams<T>& params, const Batch<T>& batch, T margin)
      : params_(params), batch_(batch), margin_(margin)
  {
    const FusionConfig& c = params.config;
    const AttentionConfig ac = c.Attention();
    const int g = c.Grid();
    base_.resize(batch.samples.size());
    embeddings_ = Mat<T>(static_cast<Eigen::Index>(base_.size()), c.embed);
    for (std::size_t i = 0; i < base_.size(); ++i)
    {
      Stage& s = base_[i];
      s.dropout = batch.dropout.empty() ? DropoutCase::kBoth : batch.dropout[i];
      s.rgb_tiles = Patchify(batch.samples[i].rgb, c.image, c.patch);
      s.depth_tiles = Patchify(batch.samples[i].depth, c.image, c.patch);
      s.rgb = EncodeRgb(s.rgb_tiles, params, s.dropout);
      s.depth = EncodeDepth(s.depth_tiles, params, s.dropout);
      s.q_rgb = params.query_rgb.Forward(s.rgb);
      s.v_rgb = params.value_rgb.Forward(s.rgb);
      s.q_depth = params.query_depth.Forward(s.depth);
      s.v_depth = params.value_depth.Forward(s.depth);
      s.r2r = DeformableAttention(s.q_rgb, s.v_rgb, g, g, params.r2r, ac);
      s.d2r = DeformableAttention(s.q_depth, s.v_rgb, g, g, params.d2r, ac);
      s.d2d = DeformableAttention(s.q_depth, s.v_depth, g, g, params.d2d, ac);
      s.r2d = DeformableAttention(s.q_rgb, s.v_depth, g, g, params.r2d, ac);
      s.alpha = WeightingAlpha(s.rgb, s.depth, g, g, params);
      embeddings_.row(static_cast<Eigen::Index>(i)) =
          PooledCombination(Mat<T>(s.rgb + s.r2r + s.d2r), Mat<T>(s.depth + s.d2d + s.r2d), s.alpha);
    }
  }

  T Loss(const std::string& group) const
  {
    const FusionParams<T>& p = params_;
    const AttentionConfig ac = p.config.Attention();
    const int g = p.config.Grid();
    Mat<T> embeddings = embeddings_;
    if (group != "classifier")
    {
      const bool rgb = group == "encoder_rgb";
      const bool depth = group == "encoder_depth";
      const bool q_r = rgb || group == "query_rgb";
      const bool v_r = rgb || group == "value_rgb";
      const bool q_d = depth || group == "query_depth";
      const bool v_d = depth || group == "value_depth";
      for (std::size_t i = 0; i < base_.size(); ++i)
      {
        const Stage& b = base_[i];
        const Mat<T> f_rgb = rgb ? EncodeRgb(b.rgb_tiles, p, b.dropout) : b.rgb;
        const Mat<T> f_depth = depth ? EncodeDepth(b.depth_tiles, p, b.dropout) : b.depth;
        const Mat<T> qr = q_r ? p.query_rgb.Forward(f_rgb) : b.q_rgb;
        const Mat<T> vr = v_r ? p.value_rgb.Forward(f_rgb) : b.v_rgb;
        const Mat<T> qd = q_d ? p.query_depth.Forward(f_depth) : b.q_depth;
        const Mat<T> vd = v_d ? p.value_depth.Forward(f_depth) : b.v_depth;
        auto attend = [&](bool inputs, const char* name, const Mat<T>& q, const Mat<T>& v,
                          const AttentionParams<T>& ap, const Mat<T>& cached) {
          return inputs || group == name ? DeformableAttention(q, v, g, g, ap, ac) : cached;
        };
        const Mat<T> f_r = f_rgb + attend(q_r || v_r, "attn_r2r", qr, vr, p.r2r, b.r2r) +
                           attend(q_d || v_r, "attn_d2r", qd, vr, p.d2r, b.d2r);
        const Mat<T> f_d = f_depth + attend(q_d || v_d, "attn_d2d", qd, vd, p.d2d, b.d2d) +
                           attend(q_r || v_d, "attn_r2d", qr, vd, p.r2d, b.r2d);
        const Mat<T> alpha =
            rgb || depth || group == "weighting" ? WeightingAlpha(f_rgb, f_depth, g, g, p) : b.alpha;
        embeddings.row(static_cast<Eigen::Index>(i)) = PooledCombination(f_r, f_d, alpha);
      }
    }
    return Losses(embeddings, Logits(embeddings, p), batch_.labels, margin_).total;
  }

 private:
  struct Stage
  {
    DropoutCase dropout = DropoutCase::kBoth;
    Mat<T> rgb_tiles, depth_tiles, rgb, depth;
    Mat<T> q_rgb, v_rgb, q_depth, v_depth;
    Mat<T> r2r, d2r, d2d, r2d, alpha;
  };

  const FusionParams<T>& params_;
  const Batch<T>& batch_;
  T margin_;
  std::vector<Stage> base_;
  Mat<T> embeddings_;
};

/// Analytic gradients at or above this magnitude are differenced in double;
/// smaller ones in extended precision, where double roundoff in the loss
/// (about 1e-16 / eps) would rival the gradient itself.
inline constexpr double kWideGradient = 1e-5;

/// Compares the 64-bit analytic gradient of the total loss against central
/// differences with step eps for every parameter.
inline GradCheckResult GradCheck(const FusionParams<double>& params, const Batch<double>& batch, double eps,
                                 double margin = 0.3)
{
  if (!(eps > 0.0))
  {
    throw ConfigError("grad_check: eps must be positive");
  }
  using Wide = long double;
  GradCheckResult out;
  out.dropout = batch.dropout.empty() ? DropoutCase::kBoth : batch.dropout.front();
  FusionParams<double> grad;
  out.loss = BatchLoss(batch, params, margin, &grad).total;
  if (!std::isfinite(out.loss) || !grad.AllFinite())
  {
    throw NumericalError("grad_check: non-finite loss or analytic gradient");
  }
  std::vector<const Mat<double>*> analytic;
  grad.Visit([&](const std::string&, const std::string&, const Mat<double>& m) { analytic.push_back(&m); });
  std::vector<Mat<double>*> narrow_tensors;
  std::vector<Mat<Wide>*> wide_tensors;

  auto narrow = params;
  auto wide = CastParams<Wide>(params);
  const auto wide_batch = CastBatch<Wide>(batch);
  narrow.Visit([&](const std::string&, const std::string&, Mat<double>& m) { narrow_tensors.push_back(&m); });
  wide.Visit([&](const std::string&, const std::string&, Mat<Wide>& m) { wide_tensors.push_back(&m); });
  const StagedLoss<double> narrow_loss(narrow, batch, margin);
  const StagedLoss<Wide> wide_loss(wide, wide_batch, static_cast<Wide>(margin));

  std::size_t t = 0;
  params.Visit([&](const std::string& group, const std::string& name, const Mat<double>& m) {
    if (out.groups.empty() || out.groups.back().group != group)
    {
      out.groups.push_back({group, 0.0, 0});
    }
    GroupError& g = out.groups.back();
    const Mat<double>& a = *analytic[t];
    Mat<double>& n = *narrow_tensors[t];
    Mat<Wide>& w = *wide_tensors[t];
    ++t;
    for (Eigen::Index i = 0; i < m.size(); ++i)
    {
      double numeric = 0.0;
      if (std::abs(a.data()[i]) >= kWideGradient)
      {
        const double saved = n.data()[i];
        n.data()[i] = saved + eps;
        const double plus = narrow_loss.Loss(group);
        n.data()[i] = saved - eps;
        const double minus = narrow_loss.Loss(group);
        n.data()[i] = saved;
        numeric = (plus - minus) / (2.0 * eps);
      }
      else
      {
        const Wide saved = w.data()[i];
        const auto h = static_cast<Wide>(eps);
        w.data()[i] = saved + h;
        const Wide plus = wide_loss.Loss(group);
        w.data()[i] = saved - h;
        const Wide minus = wide_loss.Loss(group);
        w.data()[i] = saved;
        numeric = static_cast<double>((plus - minus) / (2 * h));
      }
      if (!std::isfinite(numeric))
      {
        throw NumericalError("grad_check: non-finite numeric gradient at " + name);
      }
      const double err = RelativeError(a.data()[i], numeric);
      g.max_error = std::max(g.max_error, err);
      ++g.parameters;
      if (err > out.max_error || out.worst.empty())
      {
        out.max_error = std::max(out.max_error, err);
        out.worst = name + "[" + std::to_string(i) + "]";
      }
    }
  });
  return out;
}

/// Small model for finite differences: H = W = 8, E = 16, two classes.
inline FusionConfig GradCheckConfig()
{
  FusionConfig c;
  c.image = 16;
  c.patch = 2;
  c.embed = 16;
  c.classes = 2;
  return c;
}

/// Random parameters for checking. Bilinear sampling has kinks on pixel
/// lines, so the offset predictor gets half-pixel biases in [-2.5, 2.5]
/// and small weights: every sample lands strictly between grid lines
/// (some outside the map) and stays there under eps perturbations.
inline FusionParams<double> RandomCheckParams(const FusionConfig& config, std::uint64_t seed)
{
  auto p = FusionParams<double>::Zeros(config);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> half(-3, 2);
  p.Visit([&](const std::string&, const std::string& name, Mat<double>& m) {
    const bool offsets = name.find(".offsets.") != std::string::npos;
    const bool bias = m.rows() == 1;
    for (Eigen::Index i = 0; i < m.size(); ++i)
    {
      if (offsets)
      {
        m.data()[i] = bias ? half(rng) + 0.5 : 0.005 * normal(rng);
      }
      else
      {
        m.data()[i] = (bias ? 0.1 : 1.0 / std::sqrt(static_cast<double>(m.cols()))) * normal(rng);
      }
    }
  });
  return p;
}

/// Two identities with two samples each, uniform random pixels.
inline Batch<double> RandomCheckBatch(const FusionConfig& config, DropoutCase dropout, std::uint64_t seed)
{
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  Batch<double> batch;
  for (int i = 0; i < 4; ++i)
  {
    RgbdPatch<double> s;
    s.size = config.image;
    s.rgb = Mat<double>::NullaryExpr(config.image * config.image, 3, [&]() { return uni(rng); });
    s.depth = Mat<double>::NullaryExpr(config.image * config.image, 1, [&]() { return 0.5 + 1.5 * uni(rng); });
    batch.samples.push_back(std::move(s));
    batch.labels.push_back(i / 2);
    batch.dropout.push_back(dropout);
  }
  return batch;
}
}  // namespace instloc::fusion
