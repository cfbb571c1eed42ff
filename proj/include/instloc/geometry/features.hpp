#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "instloc/common.hpp"
#include "instloc/geometry/kdtree.hpp"
#include "instloc/geometry/point_cloud.hpp"

namespace instloc::geometry
{
inline constexpr std::size_t kNormalMaxNeighbors = 30;
inline constexpr int kFpfhBins = 11;
inline constexpr int kFpfhDim = 3 * kFpfhBins;

using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Plane-fit normals from up to 30 nearest neighbors within radius, each
/// flipped to face viewpoint. Points with fewer than 3 neighbors get the
/// direction toward the viewpoint.
inline std::vector<Eigen::Vector3d> EstimateNormals(const PointCloud& cloud, double radius,
                                                    const Eigen::Vector3d& viewpoint = Eigen::Vector3d::Zero())
{
  if (!(radius > 0.0))
  {
    throw InputError("normal radius must be positive");
  }
  const KdTree3 tree(cloud.points);
  std::vector<Eigen::Vector3d> normals(cloud.Size());
  for (std::size_t i = 0; i < cloud.Size(); ++i)
  {
    const Eigen::Vector3d& p = cloud.points[i];
    Eigen::Vector3d n;
    const auto nbrs = tree.Knn(p, kNormalMaxNeighbors, radius);
    if (nbrs.size() < 3)
    {
      n = viewpoint - p;
      if (n.norm() < 1e-12)
      {
        n = Eigen::Vector3d::UnitZ();
      }
    }
    else
    {
      Eigen::Vector3d mean = Eigen::Vector3d::Zero();
      for (const auto& nb : nbrs)
      {
        mean += cloud.points[nb.index];
      }
      mean /= static_cast<double>(nbrs.size());
      Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
      for (const auto& nb : nbrs)
      {
        const Eigen::Vector3d d = cloud.points[nb.index] - mean;
        cov += d * d.transpose();
      }
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
      n = eig.eigenvectors().col(0);
    }
    n.normalize();
    if (n.dot(viewpoint - p) < 0.0)
    {
      n = -n;
    }
    normals[i] = n;
  }
  return normals;
}

/// Darboux-frame angle triple (f1, f2, f3) of an oriented point pair; zeros
/// for coincident points or degenerate frames.
inline std::array<double, 3> PairFeature(const Eigen::Vector3d& p1, const Eigen::Vector3d& n1,
                                         const Eigen::Vector3d& p2, const Eigen::Vector3d& n2)
{
  Eigen::Vector3d dp = p2 - p1;
  const double dist = dp.norm();
  if (dist == 0.0)
  {
    return {0.0, 0.0, 0.0};
  }
  Eigen::Vector3d src_n = n1;
  Eigen::Vector3d tgt_n = n2;
  const double angle1 = n1.dot(dp) / dist;
  const double angle2 = n2.dot(dp) / dist;
  double f3 = angle1;
  // The source of the frame is the point whose normal is closer to the
  // connecting line.
  if (std::acos(std::abs(angle1)) > std::acos(std::abs(angle2)))
  {
    src_n = n2;
    tgt_n = n1;
    dp = -dp;
    f3 = -angle2;
  }
  Eigen::Vector3d v = dp.cross(src_n);
  const double v_norm = v.norm();
  if (v_norm == 0.0)
  {
    return {0.0, 0.0, 0.0};
  }
  v /= v_norm;
  const Eigen::Vector3d w = src_n.cross(v);
  const double f2 = v.dot(tgt_n);
  const double f1 = std::atan2(w.dot(tgt_n), src_n.dot(tgt_n));
  return {f1, f2, f3};
}

inline int FpfhBin(double value, double lo, double hi)
{
  const int bin = static_cast<int>(std::floor(kFpfhBins * (value - lo) / (hi - lo)));
  return std::clamp(bin, 0, kFpfhBins - 1);
}

struct FpfhResult
{
  FeatureMatrix features;            // N x 33
  std::vector<bool> isolated;        // rows left zero for lack of neighbors
};

/// Fast Point Feature Histograms. Each SPFH sub-histogram sums to 100; the
/// FPFH row is the point's own SPFH plus the inverse-squared-distance
/// weighted neighbor SPFHs renormalized to 100 per sub-histogram.
/// Normals are estimated (toward viewpoint) when the cloud carries none.
inline FpfhResult ComputeFpfh(const PointCloud& cloud, double normal_radius, double feature_radius,
                              const Eigen::Vector3d& viewpoint = Eigen::Vector3d::Zero())
{
  if (cloud.Empty())
  {
    throw InputError("compute_fpfh: empty cloud");
  }
  if (!(normal_radius > 0.0 && feature_radius > 0.0))
  {
    throw InputError("compute_fpfh: radii must be positive");
  }
  cloud.Validate();
  const std::vector<Eigen::Vector3d> normals =
    cloud.HasNormals() ? cloud.normals : EstimateNormals(cloud, normal_radius, viewpoint);
  const std::size_t n = cloud.Size();
  const KdTree3 tree(cloud.points);

  std::vector<std::vector<KdTree3::Neighbor>> neighborhoods(n);
  FeatureMatrix spfh = FeatureMatrix::Zero(static_cast<Eigen::Index>(n), kFpfhDim);
  for (std::size_t i = 0; i < n; ++i)
  {
    auto nbrs = tree.Radius(cloud.points[i], feature_radius);
    std::erase_if(nbrs, [&](const KdTree3::Neighbor& nb) { return nb.index == i; });
    neighborhoods[i] = std::move(nbrs);
    const auto& hood = neighborhoods[i];
    if (hood.empty())
    {
      continue;
    }
    const double incr = 100.0 / static_cast<double>(hood.size());
    for (const auto& nb : hood)
    {
      const auto f = PairFeature(cloud.points[i], normals[i], cloud.points[nb.index], normals[nb.index]);
      const auto row = static_cast<Eigen::Index>(i);
      spfh(row, FpfhBin(f[0], -std::numbers::pi, std::numbers::pi)) += incr;
      spfh(row, kFpfhBins + FpfhBin(f[1], -1.0, 1.0)) += incr;
      spfh(row, 2 * kFpfhBins + FpfhBin(f[2], -1.0, 1.0)) += incr;
    }
  }

  FpfhResult result;
  result.features = FeatureMatrix::Zero(static_cast<Eigen::Index>(n), kFpfhDim);
  result.isolated.assign(n, false);
  for (std::size_t i = 0; i < n; ++i)
  {
    const auto row = static_cast<Eigen::Index>(i);
    if (neighborhoods[i].empty())
    {
      result.isolated[i] = true;
      continue;
    }
    std::array<double, 3> sums{0.0, 0.0, 0.0};
    for (const auto& nb : neighborhoods[i])
    {
      if (nb.dist2 == 0.0)
      {
        continue;
      }
      for (int j = 0; j < kFpfhDim; ++j)
      {
        const double val = spfh(static_cast<Eigen::Index>(nb.index), j) / nb.dist2;
        sums[static_cast<std::size_t>(j / kFpfhBins)] += val;
        result.features(row, j) += val;
      }
    }
    for (auto& s : sums)
    {
      s = s != 0.0 ? 100.0 / s : 0.0;
    }
    for (int j = 0; j < kFpfhDim; ++j)
    {
      result.features(row, j) = result.features(row, j) * sums[static_cast<std::size_t>(j / kFpfhBins)] +
                                spfh(row, j);
    }
  }
  return result;
}
}  // namespace instloc::geometry
