#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "instloc/common.hpp"
#include "instloc/geometry/features.hpp"
#include "instloc/geometry/kdtree.hpp"
#include "instloc/geometry/point_cloud.hpp"
#include "instloc/geometry/pose.hpp"
#include "instloc/localizer/config.hpp"

namespace instloc::localizer
{
using Correspondence = std::pair<std::size_t, std::size_t>;  // (source, target)

/// For every source row, the target row nearest in feature space (ties
/// toward the lower index).
inline std::vector<Correspondence> FeatureCorrespondences(const geometry::FeatureMatrix& source,
                                                          const geometry::FeatureMatrix& target)
{
  if (source.cols() != target.cols())
  {
    throw InputError("feature dimensions differ");
  }
  std::vector<Correspondence> out;
  if (source.rows() == 0 || target.rows() == 0)
  {
    return out;
  }
  // |a - b|^2 = |a|^2 + |b|^2 - 2 a.b, batched as one product.
  const Eigen::VectorXd tn = target.rowwise().squaredNorm();
  constexpr Eigen::Index kBlock = 512;
  out.reserve(static_cast<std::size_t>(source.rows()));
  for (Eigen::Index begin = 0; begin < source.rows(); begin += kBlock)
  {
    const Eigen::Index rows = std::min(kBlock, source.rows() - begin);
    Eigen::MatrixXd d = -2.0 * source.middleRows(begin, rows) * target.transpose();
    d.rowwise() += tn.transpose();
    for (Eigen::Index r = 0; r < rows; ++r)
    {
      Eigen::Index best = 0;
      d.row(r).minCoeff(&best);
      out.emplace_back(static_cast<std::size_t>(begin + r), static_cast<std::size_t>(best));
    }
  }
  return out;
}

struct RansacResult
{
  geometry::Pose pose;
  std::size_t inliers = 0;
  double inlier_ratio = 0.0;
  std::size_t iterations = 0;
};

/// Feature-matched RANSAC: correspondences by nearest feature, random
/// ransac_sample-point hypotheses screened by the pairwise edge-length
/// ratio, scored by the number of correspondences within ransac_dist.
/// Stops early once the best inlier ratio reaches ransac_confidence.
inline RansacResult RansacFeatureAlign(const geometry::PointCloud& source, const geometry::PointCloud& target,
                                       const geometry::FeatureMatrix& source_feat,
                                       const geometry::FeatureMatrix& target_feat, const RegistrationConfig& config,
                                       std::uint64_t seed = 0)
{
  config.Validate();
  if (source_feat.rows() != static_cast<Eigen::Index>(source.Size()) ||
      target_feat.rows() != static_cast<Eigen::Index>(target.Size()))
  {
    throw InputError("ransac: features are not row-aligned with points");
  }
  const auto corr = FeatureCorrespondences(source_feat, target_feat);
  const std::size_t n = corr.size();
  const std::size_t k = config.ransac_sample;
  if (n < k)
  {
    throw DegenerateInput("ransac: " + std::to_string(n) + " correspondences for samples of " + std::to_string(k));
  }

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  const double dist2 = config.ransac_dist * config.ransac_dist;
  const double sim = config.edge_len_check;

  RansacResult best;
  double best_rmse = std::numeric_limits<double>::infinity();
  std::size_t max_iters = config.ransac_iters;
  std::vector<std::size_t> sample(k);
  std::vector<Eigen::Vector3d> src(k);
  std::vector<Eigen::Vector3d> dst(k);
  std::size_t it = 0;
  for (; it < max_iters; ++it)
  {
    for (std::size_t s = 0; s < k; ++s)
    {
      std::size_t c = 0;
      do
      {
        c = pick(rng);
      } while (std::find(sample.begin(), sample.begin() + static_cast<std::ptrdiff_t>(s), c) !=
               sample.begin() + static_cast<std::ptrdiff_t>(s));
      sample[s] = c;
      src[s] = source.points[corr[c].first];
      dst[s] = target.points[corr[c].second];
    }
    bool consistent = true;
    for (std::size_t a = 0; a < k && consistent; ++a)
    {
      for (std::size_t b = a + 1; b < k && consistent; ++b)
      {
        const double ds = (src[a] - src[b]).norm();
        const double dt = (dst[a] - dst[b]).norm();
        consistent = ds >= dt * sim && dt >= ds * sim && ds > 1e-9;
      }
    }
    if (!consistent)
    {
      continue;
    }
    geometry::Pose hypothesis;
    try
    {
      hypothesis = geometry::FitRigid(src, dst);
    }
    catch (const std::exception&)
    {
      continue;
    }
    std::size_t inliers = 0;
    double sq = 0.0;
    for (const auto& [si, ti] : corr)
    {
      const double e = (hypothesis * source.points[si] - target.points[ti]).squaredNorm();
      if (e < dist2)
      {
        ++inliers;
        sq += e;
      }
    }
    if (inliers == 0)
    {
      continue;
    }
    const double rmse = std::sqrt(sq / static_cast<double>(inliers));
    if (inliers > best.inliers || (inliers == best.inliers && rmse < best_rmse))
    {
      best.pose = hypothesis;
      best.inliers = inliers;
      best_rmse = rmse;
      best.inlier_ratio = static_cast<double>(inliers) / static_cast<double>(n);
      // Iterations needed to draw one all-inlier sample with the requested
      // confidence at the current inlier ratio.
      const double all_inlier = std::pow(best.inlier_ratio, static_cast<double>(k));
      if (all_inlier >= 1.0)
      {
        max_iters = it + 1;
      }
      else if (all_inlier > 0.0)
      {
        const double needed = std::log(1.0 - config.ransac_confidence) / std::log(1.0 - all_inlier);
        if (needed < static_cast<double>(max_iters))
        {
          max_iters = std::max(it + 1, static_cast<std::size_t>(std::ceil(needed)));
        }
      }
    }
  }
  best.iterations = it;
  return best;
}

/// Per-point intensity gradient in the tangent plane, fitted by least
/// squares over neighbors within radius. Requires colors and normals.
inline std::vector<Eigen::Vector3d> ColorGradients(const geometry::PointCloud& cloud, const geometry::KdTree3& tree,
                                                   double radius)
{
  auto intensity = [&](std::size_t i) { return cloud.colors[i].sum() / 3.0; };
  std::vector<Eigen::Vector3d> out(cloud.Size(), Eigen::Vector3d::Zero());
  for (std::size_t i = 0; i < cloud.Size(); ++i)
  {
    const auto nbrs = tree.Knn(cloud.points[i], geometry::kNormalMaxNeighbors, radius);
    if (nbrs.size() < 4)
    {
      continue;
    }
    const Eigen::Vector3d& p = cloud.points[i];
    const Eigen::Vector3d& n = cloud.normals[i];
    const double ip = intensity(i);
    Eigen::MatrixXd a(static_cast<Eigen::Index>(nbrs.size()) + 1, 3);
    Eigen::VectorXd b(a.rows());
    Eigen::Index row = 0;
    for (const auto& nb : nbrs)
    {
      const Eigen::Vector3d& q = cloud.points[nb.index];
      const Eigen::Vector3d proj = q - (q - p).dot(n) * n;
      a.row(row) = (proj - p).transpose();
      b[row] = intensity(nb.index) - ip;
      ++row;
    }
    // Orthogonality to the normal as an extra equation.
    a.row(row) = nbrs.size() * n.transpose();
    b[row] = 0.0;
    const Eigen::Vector3d g = a.colPivHouseholderQr().solve(b);
    out[i] = g - g.dot(n) * n;
  }
  return out;
}

struct IcpResult
{
  geometry::Pose pose;
  double fitness = 0.0;
  double rmse = 0.0;
  std::size_t iterations = 0;
};

/// Colored ICP: Gauss-Newton on
///   sum (1 - w) ((T p - q) . n_q)^2 + w (I_q + g_q . (T p - q) - I_p)^2
/// over nearest-neighbor pairs closer than icp_max_dist, with w the color
/// weight, I the mean of the RGB channels, and g_q the target's tangent
/// intensity gradient. Target normals are estimated when absent.
inline IcpResult ColoredIcp(const geometry::PointCloud& source, const geometry::PointCloud& target,
                            const geometry::Pose& init, const RegistrationConfig& config)
{
  config.Validate();
  if (!source.HasColors() || !target.HasColors())
  {
    throw InputError("colored_icp: both clouds need colors");
  }
  IcpResult result;
  result.pose = init;
  if (source.Empty() || target.Empty())
  {
    return result;
  }
  geometry::PointCloud tgt = target;
  if (!tgt.HasNormals())
  {
    tgt.normals = geometry::EstimateNormals(tgt, config.NormalRadius());
  }
  const geometry::KdTree3 tree(tgt.points);
  const auto gradients = ColorGradients(tgt, tree, config.NormalRadius());
  const double wg = std::sqrt(1.0 - config.color_weight);
  const double wc = std::sqrt(config.color_weight);
  const double max_d2 = config.icp_max_dist * config.icp_max_dist;

  geometry::Pose pose = init;
  double previous = std::numeric_limits<double>::infinity();
  auto evaluate = [&](const geometry::Pose& t, Eigen::Matrix<double, 6, 6>* jtj, Eigen::Matrix<double, 6, 1>* jtr,
                      std::size_t* matches, double* geo_sq) {
    double total = 0.0;
    *matches = 0;
    *geo_sq = 0.0;
    for (std::size_t i = 0; i < source.Size(); ++i)
    {
      const Eigen::Vector3d p = t * source.points[i];
      const auto nb = tree.Nearest(p, config.icp_max_dist);
      if (nb.index == geometry::KdTree3::kNone || nb.dist2 > max_d2)
      {
        continue;
      }
      ++*matches;
      const Eigen::Vector3d& q = tgt.points[nb.index];
      const Eigen::Vector3d& n = tgt.normals[nb.index];
      const Eigen::Vector3d& g = gradients[nb.index];
      const double rg = wg * (p - q).dot(n);
      const double rc = wc * (tgt.colors[nb.index].sum() / 3.0 + g.dot(p - q) - source.colors[i].sum() / 3.0);
      total += rg * rg + rc * rc;
      *geo_sq += nb.dist2;
      if (jtj != nullptr)
      {
        Eigen::Matrix<double, 6, 1> jg;
        jg << wg * p.cross(n), wg * n;
        Eigen::Matrix<double, 6, 1> jc;
        jc << wc * p.cross(g), wc * g;
        *jtj += jg * jg.transpose() + jc * jc.transpose();
        *jtr += jg * rg + jc * rc;
      }
    }
    return total;
  };

  std::size_t iter = 0;
  for (; iter < config.icp_max_iters; ++iter)
  {
    Eigen::Matrix<double, 6, 6> jtj = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> jtr = Eigen::Matrix<double, 6, 1>::Zero();
    std::size_t matches = 0;
    double geo = 0.0;
    const double objective = evaluate(pose, &jtj, &jtr, &matches, &geo);
    if (matches == 0)
    {
      if (iter == 0)
      {
        return result;
      }
      break;
    }
    if (std::isfinite(previous) && std::abs(previous - objective) <= 1e-6 * std::max(previous, 1e-12))
    {
      break;
    }
    previous = objective;
    const Eigen::Matrix<double, 6, 1> xi = -jtj.ldlt().solve(jtr);
    if (!xi.allFinite())
    {
      break;
    }
    pose = (geometry::Pose::FromTwist(xi) * pose).Orthonormalized();
    if (xi.norm() < 1e-12)
    {
      ++iter;
      break;
    }
  }
  std::size_t matches = 0;
  double geo = 0.0;
  evaluate(pose, nullptr, nullptr, &matches, &geo);
  result.pose = pose;
  result.iterations = iter;
  result.fitness = static_cast<double>(matches) / static_cast<double>(source.Size());
  result.rmse = matches > 0 ? std::sqrt(geo / static_cast<double>(matches)) : 0.0;
  return result;
}

/// Fraction of source points that land within tau of some target point
/// after applying pose.
inline double Overlap(const geometry::PointCloud& source, const geometry::KdTree3& target_tree,
                      const geometry::Pose& pose, double tau)
{
  if (!(tau > 0.0))
  {
    throw InputError("overlap: tau must be positive");
  }
  if (source.Empty() || target_tree.Empty())
  {
    return 0.0;
  }
  std::size_t hits = 0;
  for (const auto& p : source.points)
  {
    if (target_tree.Nearest(pose * p, tau).index != geometry::KdTree3::kNone)
    {
      ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(source.Size());
}

inline double Overlap(const geometry::PointCloud& source, const geometry::PointCloud& target,
                      const geometry::Pose& pose, double tau)
{
  const geometry::KdTree3 tree(target.points);
  return Overlap(source, tree, pose, tau);
}
}  // namespace instloc::localizer
