#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "instloc/common.hpp"
#include "instloc/geometry/pose.hpp"

namespace instloc::geometry
{
/// Positions in meters, colors in [0,1], optional unit normals. colors is
/// either empty or the same length as points; the same holds for normals.
struct PointCloud
{
  std::vector<Eigen::Vector3d> points;
  std::vector<Eigen::Vector3d> colors;
  std::vector<Eigen::Vector3d> normals;

  std::size_t Size() const { return points.size(); }
  bool Empty() const { return points.empty(); }
  bool HasColors() const { return !colors.empty(); }
  bool HasNormals() const { return !normals.empty(); }

  void Validate() const
  {
    if (HasColors() && colors.size() != points.size())
    {
      throw InputError("PointCloud colors/points size mismatch");
    }
    if (HasNormals() && normals.size() != points.size())
    {
      throw InputError("PointCloud normals/points size mismatch");
    }
  }

  Eigen::Vector3d Centroid() const
  {
    Eigen::Vector3d c = Eigen::Vector3d::Zero();
    for (const auto& p : points)
    {
      c += p;
    }
    return points.empty() ? c : Eigen::Vector3d(c / static_cast<double>(points.size()));
  }

  /// Appends other; attributes survive only if both sides carry them.
  void Append(const PointCloud& other)
  {
    const bool keep_colors = (Empty() || HasColors()) && other.HasColors();
    const bool keep_normals = (Empty() || HasNormals()) && other.HasNormals();
    if (!keep_colors)
    {
      colors.clear();
    }
    if (!keep_normals)
    {
      normals.clear();
    }
    points.insert(points.end(), other.points.begin(), other.points.end());
    if (keep_colors)
    {
      colors.insert(colors.end(), other.colors.begin(), other.colors.end());
    }
    if (keep_normals)
    {
      normals.insert(normals.end(), other.normals.begin(), other.normals.end());
    }
  }
};

inline PointCloud Transformed(const PointCloud& cloud, const Pose& pose)
{
  PointCloud out = cloud;
  for (auto& p : out.points)
  {
    p = pose * p;
  }
  for (auto& n : out.normals)
  {
    n = pose.Rotation() * n;
  }
  return out;
}

inline PointCloud Concatenate(const std::vector<const PointCloud*>& parts)
{
  PointCloud out;
  for (const PointCloud* part : parts)
  {
    out.Append(*part);
  }
  return out;
}
}  // namespace instloc::geometry
