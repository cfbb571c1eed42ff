#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "instloc/common.hpp"
#include "instloc/geometry/point_cloud.hpp"
#include "instloc/geometry/pose.hpp"

namespace instloc::geometry
{
/// Pinhole intrinsics. depth_scale is raw depth units per meter.
struct CameraIntrinsics
{
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;
  double depth_scale = 1000.0;
  double max_depth = 10.0;

  void Validate() const
  {
    if (!(fx > 0.0 && fy > 0.0 && depth_scale > 0.0))
    {
      throw InputError("intrinsics: fx, fy, depth_scale must be positive");
    }
    if (width <= 0 || height <= 0 || cx < 0.0 || cx >= width || cy < 0.0 || cy >= height)
    {
      throw InputError("intrinsics: principal point outside image");
    }
  }

  Eigen::Vector3d Backproject(double u, double v, double z) const
  {
    return {(u - cx) * z / fx, (v - cy) * z / fy, z};
  }

  Eigen::Vector2d Project(const Eigen::Vector3d& p) const
  {
    return {fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy};
  }
};

/// Row-major 8-bit RGB image.
struct RgbImage
{
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0) {}

  std::uint8_t* At(int u, int v) { return &data[(static_cast<std::size_t>(v) * width + u) * 3]; }
  const std::uint8_t* At(int u, int v) const
  {
    return &data[(static_cast<std::size_t>(v) * width + u) * 3];
  }
};

/// Row-major single-channel image (raw 16-bit depth or binary mask).
template <typename T>
struct GrayImage
{
  int width = 0;
  int height = 0;
  std::vector<T> data;

  GrayImage() = default;
  GrayImage(int w, int h, T fill = T{}) : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  T& At(int u, int v) { return data[static_cast<std::size_t>(v) * width + u]; }
  const T& At(int u, int v) const { return data[static_cast<std::size_t>(v) * width + u]; }
};

using DepthImage = GrayImage<std::uint16_t>;
using Mask = GrayImage<std::uint8_t>;

/// Lifts every masked pixel with valid depth into a colored point in the
/// frame given by pose (camera-to-world). Depth 0 is "no measurement";
/// depths beyond intrinsics.max_depth are discarded.
inline PointCloud Backproject(const RgbImage& rgb, const DepthImage& depth, const Mask& mask,
                              const CameraIntrinsics& intrinsics, const Pose& pose)
{
  const int w = intrinsics.width;
  const int h = intrinsics.height;
  if (rgb.width != w || rgb.height != h || depth.width != w || depth.height != h || mask.width != w ||
      mask.height != h)
  {
    throw InputError("backproject: image dimensions do not match intrinsics");
  }
  PointCloud cloud;
  for (int v = 0; v < h; ++v)
  {
    for (int u = 0; u < w; ++u)
    {
      const std::uint16_t raw = depth.At(u, v);
      if (mask.At(u, v) == 0 || raw == 0)
      {
        continue;
      }
      const double z = raw / intrinsics.depth_scale;
      if (z > intrinsics.max_depth)
      {
        continue;
      }
      cloud.points.push_back(pose * intrinsics.Backproject(u, v, z));
      const std::uint8_t* c = rgb.At(u, v);
      cloud.colors.emplace_back(c[0] / 255.0, c[1] / 255.0, c[2] / 255.0);
    }
  }
  return cloud;
}
}  // namespace instloc::geometry
