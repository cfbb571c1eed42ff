#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include "instloc/common.hpp"
#include "instloc/geometry/point_cloud.hpp"

namespace instloc::geometry
{
/// Integer voxel coordinate floor(p / voxel), anchored at the world origin.
struct VoxelKey
{
  std::int64_t x = 0;
  std::int64_t y = 0;
  std::int64_t z = 0;

  friend bool operator==(const VoxelKey&, const VoxelKey&) = default;
  friend auto operator<=>(const VoxelKey&, const VoxelKey&) = default;
};

struct VoxelKeyHash
{
  std::size_t operator()(const VoxelKey& k) const
  {
    std::uint64_t h = static_cast<std::uint64_t>(k.x) * 73856093ULL;
    h ^= static_cast<std::uint64_t>(k.y) * 19349663ULL;
    h ^= static_cast<std::uint64_t>(k.z) * 83492791ULL;
    return static_cast<std::size_t>(h);
  }
};

inline VoxelKey ToVoxel(const Eigen::Vector3d& p, double voxel)
{
  return {static_cast<std::int64_t>(std::floor(p.x() / voxel)),
          static_cast<std::int64_t>(std::floor(p.y() / voxel)),
          static_cast<std::int64_t>(std::floor(p.z() / voxel))};
}

using VoxelSet = std::unordered_set<VoxelKey, VoxelKeyHash>;

inline VoxelSet OccupiedVoxels(const PointCloud& cloud, double voxel)
{
  if (!(voxel > 0.0))
  {
    throw InputError("voxel size must be positive");
  }
  VoxelSet set;
  set.reserve(cloud.Size());
  for (const auto& p : cloud.points)
  {
    set.insert(ToVoxel(p, voxel));
  }
  return set;
}

inline double VoxelIou(const VoxelSet& a, const VoxelSet& b)
{
  if (a.empty() && b.empty())
  {
    return 0.0;
  }
  const VoxelSet& small = a.size() <= b.size() ? a : b;
  const VoxelSet& large = a.size() <= b.size() ? b : a;
  std::size_t inter = 0;
  for (const auto& k : small)
  {
    inter += large.count(k);
  }
  const std::size_t uni = a.size() + b.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

/// Intersection-over-union of the voxel occupancy of two clouds; 0 when
/// both are empty.
inline double VoxelIou(const PointCloud& a, const PointCloud& b, double voxel)
{
  return VoxelIou(OccupiedVoxels(a, voxel), OccupiedVoxels(b, voxel));
}

/// One point per occupied voxel at the centroid of its members, with
/// averaged colors and (renormalized) averaged normals. Output is ordered
/// by voxel key, so it does not depend on input order.
inline PointCloud VoxelDownsample(const PointCloud& cloud, double voxel)
{
  if (!(voxel > 0.0))
  {
    throw InputError("voxel size must be positive");
  }
  cloud.Validate();
  struct Accum
  {
    Eigen::Vector3d p = Eigen::Vector3d::Zero();
    Eigen::Vector3d c = Eigen::Vector3d::Zero();
    Eigen::Vector3d n = Eigen::Vector3d::Zero();
    Eigen::Vector3d first_n = Eigen::Vector3d::UnitZ();
    std::size_t count = 0;
  };
  std::map<VoxelKey, Accum> cells;
  for (std::size_t i = 0; i < cloud.Size(); ++i)
  {
    Accum& a = cells[ToVoxel(cloud.points[i], voxel)];
    a.p += cloud.points[i];
    if (cloud.HasColors())
    {
      a.c += cloud.colors[i];
    }
    if (cloud.HasNormals())
    {
      if (a.count == 0)
      {
        a.first_n = cloud.normals[i];
      }
      a.n += cloud.normals[i];
    }
    ++a.count;
  }
  PointCloud out;
  out.points.reserve(cells.size());
  for (const auto& [key, a] : cells)
  {
    const double inv = 1.0 / static_cast<double>(a.count);
    out.points.push_back(a.p * inv);
    if (cloud.HasColors())
    {
      out.colors.push_back(a.c * inv);
    }
    if (cloud.HasNormals())
    {
      const double len = a.n.norm();
      out.normals.push_back(len > 1e-12 ? Eigen::Vector3d(a.n / len) : a.first_n);
    }
  }
  return out;
}
}  // namespace instloc::geometry
