#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "instloc/common.hpp"
#include "instloc/geometry/cloud_io.hpp"
#include "instloc/instance_map/object_tuple.hpp"

namespace instloc::instance_map
{
inline constexpr std::uint32_t kMemoryFormatVersion = 1;

/// Binary "ILOM" layout: magic, u32 version, u32 embedding dim, u32 tuple
/// count; per tuple: u64 id, u32 embedding count, float32 embeddings, then
/// an ILPC cloud record.
inline void WriteMemory(std::ostream& os, const ObjectMemory& memory)
{
  memory.Validate();
  namespace bin = geometry::binary;
  os.write("ILOM", 4);
  bin::Write(os, kMemoryFormatVersion);
  bin::Write(os, static_cast<std::uint32_t>(memory.embedding_dim));
  bin::Write(os, static_cast<std::uint32_t>(memory.Size()));
  for (const auto& obj : memory.objects)
  {
    bin::Write(os, static_cast<std::uint64_t>(obj.id));
    bin::Write(os, static_cast<std::uint32_t>(obj.embeddings.size()));
    for (const auto& e : obj.embeddings)
    {
      for (Eigen::Index k = 0; k < e.size(); ++k)
      {
        bin::Write(os, static_cast<float>(e[k]));
      }
    }
    geometry::WriteCloud(os, obj.cloud);
  }
}

inline ObjectMemory ReadMemory(std::istream& is)
{
  namespace bin = geometry::binary;
  bin::ExpectMagic(is, "ILOM");
  const auto version = bin::Read<std::uint32_t>(is);
  if (version != kMemoryFormatVersion)
  {
    throw InputError("ILOM: unsupported version " + std::to_string(version));
  }
  ObjectMemory memory;
  memory.embedding_dim = bin::Read<std::uint32_t>(is);
  const auto count = bin::Read<std::uint32_t>(is);
  memory.objects.reserve(count);
  for (std::uint32_t t = 0; t < count; ++t)
  {
    ObjectInfoTuple obj;
    obj.id = bin::Read<std::uint64_t>(is);
    const auto n_emb = bin::Read<std::uint32_t>(is);
    for (std::uint32_t k = 0; k < n_emb; ++k)
    {
      Embedding e(memory.embedding_dim);
      for (Eigen::Index d = 0; d < memory.embedding_dim; ++d)
      {
        e[d] = bin::Read<float>(is);
      }
      obj.embeddings.push_back(std::move(e));
    }
    obj.cloud = geometry::ReadCloud(is);
    memory.objects.push_back(std::move(obj));
  }
  memory.Validate();
  return memory;
}

inline nlohmann::json MemoryIndex(const ObjectMemory& memory)
{
  nlohmann::json index;
  index["format"] = "ILOM";
  index["version"] = kMemoryFormatVersion;
  index["embedding_dim"] = memory.embedding_dim;
  index["config"] = {{"eps_iou", memory.meta.eps_iou},
                     {"eps_l2", memory.meta.eps_l2},
                     {"dbscan_eps", memory.meta.dbscan_eps},
                     {"dbscan_min_pts", memory.meta.dbscan_min_pts},
                     {"voxel", memory.meta.voxel}};
  nlohmann::json objects = nlohmann::json::array();
  for (const auto& obj : memory.objects)
  {
    const Eigen::Vector3d c = obj.cloud.Centroid();
    objects.push_back({{"id", obj.id},
                       {"centroid", {c.x(), c.y(), c.z()}},
                       {"points", obj.cloud.Size()},
                       {"embeddings", obj.embeddings.size()}});
  }
  index["objects"] = std::move(objects);
  return index;
}

inline std::filesystem::path IndexPathFor(const std::filesystem::path& map_path)
{
  return std::filesystem::path(map_path.string() + ".json");
}

/// Writes the binary map and its JSON index next to it (<map>.json).
inline void SaveMemory(const std::filesystem::path& path, const ObjectMemory& memory)
{
  std::ofstream os(path, std::ios::binary);
  if (!os)
  {
    throw InputError("cannot open " + path.string() + " for writing");
  }
  WriteMemory(os, memory);
  std::ofstream js(IndexPathFor(path));
  js << MemoryIndex(memory).dump(2) << '\n';
}

inline ObjectMemory LoadMemory(const std::filesystem::path& path)
{
  std::ifstream is(path, std::ios::binary);
  if (!is)
  {
    throw InputError("cannot open map " + path.string());
  }
  ObjectMemory memory = ReadMemory(is);
  const auto index_path = IndexPathFor(path);
  if (std::filesystem::exists(index_path))
  {
    std::ifstream js(index_path);
    const auto index = nlohmann::json::parse(js);
    if (index.contains("config"))
    {
      const auto& c = index["config"];
      memory.meta.eps_iou = c.value("eps_iou", memory.meta.eps_iou);
      memory.meta.eps_l2 = c.value("eps_l2", memory.meta.eps_l2);
      memory.meta.dbscan_eps = c.value("dbscan_eps", memory.meta.dbscan_eps);
      memory.meta.dbscan_min_pts = c.value("dbscan_min_pts", memory.meta.dbscan_min_pts);
      memory.meta.voxel = c.value("voxel", memory.meta.voxel);
    }
  }
  return memory;
}
}  // namespace instloc::instance_map
