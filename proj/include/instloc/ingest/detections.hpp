#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "instloc/common.hpp"
#include "instloc/geometry/camera.hpp"
#include "instloc/instance_map/object_tuple.hpp"

namespace instloc::ingest
{
/// Pixel box [x0, x1) x [y0, y1).
struct Box
{
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;

  double Area() const { return std::max(0.0, x1 - x0) * std::max(0.0, y1 - y0); }
};

inline double BoxIou(const Box& a, const Box& b)
{
  const double ix = std::max(0.0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
  const double iy = std::max(0.0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
  const double inter = ix * iy;
  const double uni = a.Area() + b.Area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

/// Run-length mask: alternating run lengths over the row-major pixel
/// sequence, starting with a (possibly empty) run of zeros.
using MaskRle = std::vector<std::uint32_t>;

inline MaskRle EncodeMask(const geometry::Mask& mask)
{
  MaskRle runs;
  std::uint8_t current = 0;
  std::uint32_t length = 0;
  for (const std::uint8_t px : mask.data)
  {
    const std::uint8_t bit = px != 0 ? 1 : 0;
    if (bit != current)
    {
      runs.push_back(length);
      current = bit;
      length = 0;
    }
    ++length;
  }
  runs.push_back(length);
  return runs;
}

inline geometry::Mask DecodeMask(const MaskRle& runs, int width, int height)
{
  geometry::Mask mask(width, height, 0);
  std::size_t pos = 0;
  std::uint8_t value = 0;
  for (const std::uint32_t run : runs)
  {
    if (pos + run > mask.data.size())
    {
      throw InputError("mask RLE overruns image");
    }
    std::fill_n(mask.data.begin() + static_cast<std::ptrdiff_t>(pos), run, value);
    pos += run;
    value ^= 1U;
  }
  if (pos != mask.data.size())
  {
    throw InputError("mask RLE does not cover the image");
  }
  return mask;
}

struct Detection
{
  std::string caption;
  Box box;
  MaskRle mask_rle;
  instance_map::Embedding embedding;
  double score = 1.0;
};

/// External-model output for one frame.
struct DetectionRecord
{
  std::string frame_id;
  std::vector<Detection> detections;

  /// Box bounds and mask coverage against the frame size.
  void ValidateAgainst(int width, int height) const
  {
    for (const auto& d : detections)
    {
      if (!(d.box.x0 < d.box.x1 && d.box.y0 < d.box.y1 && d.box.x0 >= 0.0 && d.box.y0 >= 0.0 &&
            d.box.x1 <= width && d.box.y1 <= height))
      {
        throw InputError("detection box out of bounds in frame " + frame_id);
      }
      std::uint64_t total = 0;
      for (auto r : d.mask_rle)
      {
        total += r;
      }
      if (total != static_cast<std::uint64_t>(width) * static_cast<std::uint64_t>(height))
      {
        throw InputError("mask does not match frame size in frame " + frame_id);
      }
    }
  }
};

inline constexpr int kDetectionFormatVersion = 1;

struct DetectionFile
{
  Eigen::Index embedding_dim = 0;
  std::string producer;
  std::vector<DetectionRecord> records;

  const DetectionRecord* Find(const std::string& frame_id) const
  {
    for (const auto& r : records)
    {
      if (r.frame_id == frame_id)
      {
        return &r;
      }
    }
    return nullptr;
  }
};

inline nlohmann::json ToJson(const DetectionRecord& record)
{
  nlohmann::json dets = nlohmann::json::array();
  for (const auto& d : record.detections)
  {
    dets.push_back({{"caption", d.caption},
                    {"box", {d.box.x0, d.box.y0, d.box.x1, d.box.y1}},
                    {"mask_rle", d.mask_rle},
                    {"embedding", std::vector<double>(d.embedding.data(), d.embedding.data() + d.embedding.size())},
                    {"score", d.score}});
  }
  return {{"frame_id", record.frame_id}, {"detections", dets}};
}

inline DetectionRecord RecordFromJson(const nlohmann::json& j, Eigen::Index embedding_dim)
{
  DetectionRecord record;
  if (!j.contains("frame_id") || !j.contains("detections"))
  {
    throw InputError("detection record missing frame_id or detections");
  }
  const auto& fid = j["frame_id"];
  record.frame_id = fid.is_string() ? fid.get<std::string>() : fid.dump();
  for (const auto& jd : j["detections"])
  {
    Detection d;
    d.caption = jd.at("caption").get<std::string>();
    const auto box = jd.at("box").get<std::vector<double>>();
    if (box.size() != 4)
    {
      throw InputError("detection box must have 4 entries");
    }
    d.box = {box[0], box[1], box[2], box[3]};
    d.mask_rle = jd.at("mask_rle").get<MaskRle>();
    const auto emb = jd.at("embedding").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(emb.size()) != embedding_dim)
    {
      throw InputError("embedding dimension differs from header in frame " + record.frame_id);
    }
    d.embedding = Eigen::Map<const Eigen::VectorXd>(emb.data(), static_cast<Eigen::Index>(emb.size()));
    d.score = jd.value("score", 1.0);
    if (!(d.score >= 0.0 && d.score <= 1.0))
    {
      throw InputError("detection score outside [0,1]");
    }
    record.detections.push_back(std::move(d));
  }
  return record;
}

/// JSON-lines: a header object {"format", "version", "embedding_dim",
/// "producer"} followed by one record per line.
inline void WriteDetections(std::ostream& os, const DetectionFile& file)
{
  nlohmann::json header = {{"format", "instloc-detections"},
                           {"version", kDetectionFormatVersion},
                           {"embedding_dim", file.embedding_dim},
                           {"producer", file.producer}};
  os << header.dump() << '\n';
  for (const auto& r : file.records)
  {
    os << ToJson(r).dump() << '\n';
  }
}

inline DetectionFile ReadDetections(std::istream& is)
{
  DetectionFile file;
  std::string line;
  bool have_header = false;
  std::size_t line_no = 0;
  while (std::getline(is, line))
  {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos)
    {
      continue;
    }
    nlohmann::json j;
    try
    {
      j = nlohmann::json::parse(line);
    }
    catch (const nlohmann::json::exception& e)
    {
      throw InputError("detections line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!have_header)
    {
      if (!j.contains("embedding_dim"))
      {
        throw InputError("detections file must start with a header declaring embedding_dim");
      }
      file.embedding_dim = j["embedding_dim"].get<Eigen::Index>();
      file.producer = j.value("producer", "");
      if (j.value("version", kDetectionFormatVersion) != kDetectionFormatVersion)
      {
        throw InputError("unsupported detections version");
      }
      have_header = true;
      continue;
    }
    try
    {
      file.records.push_back(RecordFromJson(j, file.embedding_dim));
    }
    catch (const nlohmann::json::exception& e)
    {
      throw InputError("detections line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!have_header)
  {
    throw InputError("detections file is empty");
  }
  return file;
}

inline DetectionFile LoadDetections(const std::filesystem::path& path)
{
  std::ifstream is(path);
  if (!is)
  {
    throw InputError("cannot open detections " + path.string());
  }
  return ReadDetections(is);
}

inline void SaveDetections(const std::filesystem::path& path, const DetectionFile& file)
{
  std::ofstream os(path);
  if (!os)
  {
    throw InputError("cannot write detections " + path.string());
  }
  WriteDetections(os, file);
}

/// Greedy suppression by descending score (stable for equal scores): a box
/// is dropped when its IoU with any kept box exceeds iou_threshold.
/// Caption-agnostic. Returns indices of the kept detections in input order.
inline std::vector<std::size_t> DedupBoxes(const std::vector<Detection>& detections, double iou_threshold)
{
  std::vector<std::size_t> order(detections.size());
  for (std::size_t i = 0; i < order.size(); ++i)
  {
    order[i] = i;
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return detections[a].score > detections[b].score; });
  std::vector<std::size_t> kept;
  for (std::size_t i : order)
  {
    const bool duplicate = std::any_of(kept.begin(), kept.end(), [&](std::size_t k) {
      return BoxIou(detections[i].box, detections[k].box) > iou_threshold;
    });
    if (!duplicate)
    {
      kept.push_back(i);
    }
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}
}  // namespace instloc::ingest
