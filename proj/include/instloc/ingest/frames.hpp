#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "instloc/common.hpp"
#include "instloc/geometry/camera.hpp"
#include "instloc/geometry/pose.hpp"
#include "instloc/ingest/png_io.hpp"

namespace instloc::ingest
{
/// One RGB-D frame. Images are either held in memory or loaded lazily from
/// rgb_path/depth_path. pose is absent for query frames.
struct PosedFrame
{
  std::string frame_id;
  double timestamp = 0.0;
  geometry::RgbImage rgb;
  geometry::DepthImage depth;
  std::filesystem::path rgb_path;
  std::filesystem::path depth_path;
  std::optional<geometry::Pose> pose;
  geometry::CameraIntrinsics intrinsics;

  bool Loaded() const { return !rgb.data.empty() && !depth.data.empty(); }

  /// Loads images from disk when not yet in memory and checks dimensions.
  void EnsureLoaded()
  {
    if (!Loaded())
    {
      rgb = ReadRgbPng(rgb_path);
      depth = ReadDepthPng(depth_path);
    }
    if (rgb.width != intrinsics.width || rgb.height != intrinsics.height || depth.width != intrinsics.width ||
        depth.height != intrinsics.height)
    {
      throw InputError("frame " + frame_id + ": image size does not match intrinsics");
    }
  }

  void Release()
  {
    if (!rgb_path.empty())
    {
      rgb = {};
      depth = {};
    }
  }
};

/// Frames at indices offset, offset + stride, ...
template <typename T>
std::vector<std::size_t> SampleIndices(const std::vector<T>& items, std::size_t stride, std::size_t offset = 0)
{
  if (stride == 0)
  {
    throw InputError("stride must be positive");
  }
  std::vector<std::size_t> out;
  for (std::size_t i = offset; i < items.size(); i += stride)
  {
    out.push_back(i);
  }
  return out;
}

struct TimedEntry
{
  double timestamp = 0.0;
  std::vector<std::string> fields;
};

/// Lines "timestamp field...", skipping '#' comments and blank lines.
inline std::vector<TimedEntry> ReadTimedList(const std::filesystem::path& path)
{
  std::ifstream is(path);
  if (!is)
  {
    throw InputError("missing index file " + path.string());
  }
  std::vector<TimedEntry> out;
  std::string line;
  while (std::getline(is, line))
  {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#')
    {
      continue;
    }
    std::istringstream ss(line);
    TimedEntry e;
    if (!(ss >> e.timestamp))
    {
      throw InputError("bad timestamp in " + path.string() + ": " + line);
    }
    std::string f;
    while (ss >> f)
    {
      e.fields.push_back(f);
    }
    out.push_back(std::move(e));
  }
  return out;
}

/// Index of the entry nearest to t (lowest timestamp wins ties), or npos if
/// none lies within max_dt. entries must be sorted by timestamp.
inline std::size_t NearestWithin(const std::vector<TimedEntry>& entries, double t, double max_dt)
{
  std::size_t best = std::string::npos;
  double best_dt = std::numeric_limits<double>::infinity();
  const auto it = std::lower_bound(entries.begin(), entries.end(), t,
                                   [](const TimedEntry& e, double v) { return e.timestamp < v; });
  const auto center = static_cast<std::size_t>(it - entries.begin());
  const std::size_t lo = center == 0 ? 0 : center - 1;
  for (std::size_t i = lo; i < std::min(entries.size(), center + 1); ++i)
  {
    const double dt = std::abs(entries[i].timestamp - t);
    if (dt < best_dt)
    {
      best_dt = dt;
      best = i;
    }
  }
  return best_dt <= max_dt ? best : std::string::npos;
}

/// "tx ty tz qx qy qz qw" as written in TUM ground-truth files.
inline geometry::Pose PoseFromTumFields(const std::vector<std::string>& f)
{
  if (f.size() < 7)
  {
    throw InputError("ground-truth row needs 7 values");
  }
  std::array<double, 7> v{};
  for (std::size_t i = 0; i < 7; ++i)
  {
    v[i] = std::stod(f[i]);
  }
  return geometry::Pose::FromQuaternion(Eigen::Quaterniond(v[6], v[3], v[4], v[5]),
                                        Eigen::Vector3d(v[0], v[1], v[2]));
}

inline std::string TumPoseLine(double timestamp, const geometry::Pose& pose)
{
  const Eigen::Quaterniond q = pose.Quaternion();
  const Eigen::Vector3d& t = pose.Translation();
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(6);
  os << timestamp;
  os.precision(9);
  os << ' ' << t.x() << ' ' << t.y() << ' ' << t.z() << ' ' << q.x() << ' ' << q.y() << ' ' << q.z() << ' '
     << q.w();
  return os.str();
}

inline geometry::CameraIntrinsics IntrinsicsFromJson(const nlohmann::json& j)
{
  geometry::CameraIntrinsics k;
  k.fx = j.at("fx").get<double>();
  k.fy = j.at("fy").get<double>();
  k.cx = j.at("cx").get<double>();
  k.cy = j.at("cy").get<double>();
  k.width = j.at("width").get<int>();
  k.height = j.at("height").get<int>();
  k.depth_scale = j.at("depth_scale").get<double>();
  k.max_depth = j.value("max_depth", k.max_depth);
  k.Validate();
  return k;
}

inline nlohmann::json IntrinsicsToJson(const geometry::CameraIntrinsics& k)
{
  return {{"fx", k.fx},       {"fy", k.fy},         {"cx", k.cx},
          {"cy", k.cy},       {"width", k.width},   {"height", k.height},
          {"depth_scale", k.depth_scale}, {"max_depth", k.max_depth}};
}

inline geometry::CameraIntrinsics LoadIntrinsics(const std::filesystem::path& path)
{
  std::ifstream is(path);
  if (!is)
  {
    throw InputError("cannot open intrinsics " + path.string());
  }
  return IntrinsicsFromJson(nlohmann::json::parse(is));
}

/// Parses a TUM-layout sequence (rgb.txt, depth.txt, groundtruth.txt).
/// Each RGB timestamp is paired with the nearest depth image and the
/// nearest ground-truth pose, both within max_dt; unmatched RGB frames are
/// dropped. Images are not loaded. frame_id is the RGB file stem.
inline std::vector<PosedFrame> ParseTumSequence(const std::filesystem::path& dir, double max_dt,
                                                const geometry::CameraIntrinsics& intrinsics)
{
  intrinsics.Validate();
  auto sorted = [](std::vector<TimedEntry> v) {
    std::stable_sort(v.begin(), v.end(),
                     [](const TimedEntry& a, const TimedEntry& b) { return a.timestamp < b.timestamp; });
    return v;
  };
  const auto rgb = sorted(ReadTimedList(dir / "rgb.txt"));
  const auto depth = sorted(ReadTimedList(dir / "depth.txt"));
  const auto gt = sorted(ReadTimedList(dir / "groundtruth.txt"));
  std::vector<PosedFrame> frames;
  for (const auto& r : rgb)
  {
    if (r.fields.empty())
    {
      throw InputError("rgb.txt row without a file name");
    }
    const std::size_t d = NearestWithin(depth, r.timestamp, max_dt);
    const std::size_t g = NearestWithin(gt, r.timestamp, max_dt);
    if (d == std::string::npos || g == std::string::npos || depth[d].fields.empty())
    {
      continue;
    }
    PosedFrame f;
    f.timestamp = r.timestamp;
    f.rgb_path = dir / r.fields[0];
    f.depth_path = dir / depth[d].fields[0];
    f.frame_id = std::filesystem::path(r.fields[0]).stem().string();
    f.pose = PoseFromTumFields(gt[g].fields);
    f.intrinsics = intrinsics;
    frames.push_back(std::move(f));
  }
  if (frames.empty())
  {
    throw InputError("no associated frames in " + dir.string());
  }
  return frames;
}

struct GroundTruth
{
  std::vector<TimedEntry> entries;

  static GroundTruth Load(const std::filesystem::path& path)
  {
    GroundTruth gt;
    gt.entries = ReadTimedList(path);
    std::stable_sort(gt.entries.begin(), gt.entries.end(),
                     [](const TimedEntry& a, const TimedEntry& b) { return a.timestamp < b.timestamp; });
    return gt;
  }

  std::optional<geometry::Pose> At(double t, double max_dt) const
  {
    const std::size_t i = NearestWithin(entries, t, max_dt);
    if (i == std::string::npos)
    {
      return std::nullopt;
    }
    return PoseFromTumFields(entries[i].fields);
  }
};
}  // namespace instloc::ingest
