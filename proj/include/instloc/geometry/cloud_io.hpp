#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "instloc/common.hpp"
#include "instloc/geometry/point_cloud.hpp"

namespace instloc::geometry
{
static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace binary
{
template <typename T>
void Write(std::ostream& os, const T& value)
{
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T Read(std::istream& is)
{
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!is)
  {
    throw InputError("unexpected end of binary stream");
  }
  return value;
}

inline void ExpectMagic(std::istream& is, const char (&magic)[5])
{
  char buf[4];
  is.read(buf, 4);
  if (!is || std::memcmp(buf, magic, 4) != 0)
  {
    throw InputError(std::string("bad magic, expected ") + magic);
  }
}
}  // namespace binary

inline constexpr std::uint32_t kCloudHasColors = 1U << 0;
inline constexpr std::uint32_t kCloudHasNormals = 1U << 1;

/// "ILPC" record: magic, u32 count, u32 flags, then per point xyz
/// [rgb] [normal] as little-endian float32.
inline void WriteCloud(std::ostream& os, const PointCloud& cloud)
{
  cloud.Validate();
  os.write("ILPC", 4);
  binary::Write(os, static_cast<std::uint32_t>(cloud.Size()));
  std::uint32_t flags = 0;
  flags |= cloud.HasColors() ? kCloudHasColors : 0U;
  flags |= cloud.HasNormals() ? kCloudHasNormals : 0U;
  binary::Write(os, flags);
  for (std::size_t i = 0; i < cloud.Size(); ++i)
  {
    auto put = [&](const Eigen::Vector3d& v) {
      for (int k = 0; k < 3; ++k)
      {
        binary::Write(os, static_cast<float>(v[k]));
      }
    };
    put(cloud.points[i]);
    if (cloud.HasColors())
    {
      put(cloud.colors[i]);
    }
    if (cloud.HasNormals())
    {
      put(cloud.normals[i]);
    }
  }
}

inline PointCloud ReadCloud(std::istream& is)
{
  binary::ExpectMagic(is, "ILPC");
  const auto count = binary::Read<std::uint32_t>(is);
  const auto flags = binary::Read<std::uint32_t>(is);
  if ((flags & ~(kCloudHasColors | kCloudHasNormals)) != 0U)
  {
    throw InputError("ILPC: unknown flag bits");
  }
  PointCloud cloud;
  auto get = [&]() {
    Eigen::Vector3d v;
    for (int k = 0; k < 3; ++k)
    {
      v[k] = binary::Read<float>(is);
    }
    return v;
  };
  for (std::uint32_t i = 0; i < count; ++i)
  {
    cloud.points.push_back(get());
    if (flags & kCloudHasColors)
    {
      cloud.colors.push_back(get());
    }
    if (flags & kCloudHasNormals)
    {
      cloud.normals.push_back(get());
    }
  }
  return cloud;
}

/// ASCII PLY with optional uchar colors and float normals.
inline void WritePly(std::ostream& os, const PointCloud& cloud)
{
  cloud.Validate();
  os << "ply\nformat ascii 1.0\nelement vertex " << cloud.Size() << "\n";
  os << "property float x\nproperty float y\nproperty float z\n";
  if (cloud.HasNormals())
  {
    os << "property float nx\nproperty float ny\nproperty float nz\n";
  }
  if (cloud.HasColors())
  {
    os << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  }
  os << "end_header\n";
  os.precision(9);
  for (std::size_t i = 0; i < cloud.Size(); ++i)
  {
    const auto& p = cloud.points[i];
    os << p.x() << ' ' << p.y() << ' ' << p.z();
    if (cloud.HasNormals())
    {
      const auto& n = cloud.normals[i];
      os << ' ' << n.x() << ' ' << n.y() << ' ' << n.z();
    }
    if (cloud.HasColors())
    {
      for (int k = 0; k < 3; ++k)
      {
        os << ' ' << static_cast<int>(std::lround(std::clamp(cloud.colors[i][k], 0.0, 1.0) * 255.0));
      }
    }
    os << '\n';
  }
}

inline PointCloud ReadPly(std::istream& is)
{
  std::string line;
  std::getline(is, line);
  if (line.rfind("ply", 0) != 0)
  {
    throw InputError("PLY: missing magic");
  }
  std::size_t count = 0;
  std::vector<std::string> props;
  bool in_vertex = false;
  while (std::getline(is, line))
  {
    std::istringstream ss(line);
    std::string word;
    ss >> word;
    if (word == "format")
    {
      std::string fmt;
      ss >> fmt;
      if (fmt != "ascii")
      {
        throw InputError("PLY: only ascii format is supported");
      }
    }
    else if (word == "element")
    {
      std::string name;
      ss >> name;
      in_vertex = name == "vertex";
      if (in_vertex)
      {
        ss >> count;
      }
    }
    else if (word == "property" && in_vertex)
    {
      std::string type;
      std::string name;
      ss >> type >> name;
      props.push_back(name);
    }
    else if (word == "end_header")
    {
      break;
    }
  }
  auto index_of = [&](const std::string& name) {
    const auto it = std::find(props.begin(), props.end(), name);
    return it == props.end() ? -1 : static_cast<int>(it - props.begin());
  };
  const int ix = index_of("x");
  const int iy = index_of("y");
  const int iz = index_of("z");
  const int inx = index_of("nx");
  const int ir = index_of("red");
  if (ix < 0 || iy < 0 || iz < 0)
  {
    throw InputError("PLY: vertex positions missing");
  }
  PointCloud cloud;
  std::vector<double> values(props.size());
  for (std::size_t i = 0; i < count; ++i)
  {
    for (auto& v : values)
    {
      if (!(is >> v))
      {
        throw InputError("PLY: truncated vertex data");
      }
    }
    cloud.points.emplace_back(values[ix], values[iy], values[iz]);
    if (inx >= 0)
    {
      cloud.normals.emplace_back(values[inx], values[inx + 1], values[inx + 2]);
    }
    if (ir >= 0)
    {
      cloud.colors.emplace_back(values[ir] / 255.0, values[ir + 1] / 255.0, values[ir + 2] / 255.0);
    }
  }
  return cloud;
}
}  // namespace instloc::geometry
