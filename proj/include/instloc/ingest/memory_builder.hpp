#pragma once

#include <string>
#include <vector>

#include "instloc/common.hpp"
#include "instloc/geometry/camera.hpp"
#include "instloc/geometry/features.hpp"
#include "instloc/geometry/voxel.hpp"
#include "instloc/ingest/captions.hpp"
#include "instloc/ingest/detections.hpp"
#include "instloc/ingest/frames.hpp"
#include "instloc/instance_map/clustering.hpp"

namespace instloc::ingest
{
/// Per-detection processing shared by memory formation and query frames.
struct ExtractionOptions
{
  CaptionStoplist stoplist = CaptionStoplist::Default();
  double dedup_iou = 0.9;
  double voxel = 0.05;
  /// Normal-estimation radius, as a multiple of voxel.
  double normal_radius_factor = 2.0;
};

/// Indices of detections whose caption is not stoplisted and that survive
/// box deduplication, in input order.
inline std::vector<std::size_t> SurvivingDetections(const DetectionRecord& record, const ExtractionOptions& options)
{
  std::vector<Detection> kept;
  std::vector<std::size_t> origin;
  for (std::size_t i = 0; i < record.detections.size(); ++i)
  {
    if (!options.stoplist.Contains(record.detections[i].caption))
    {
      kept.push_back(record.detections[i]);
      origin.push_back(i);
    }
  }
  std::vector<std::size_t> out;
  for (std::size_t k : DedupBoxes(kept, options.dedup_iou))
  {
    out.push_back(origin[k]);
  }
  return out;
}

/// Backprojects each surviving detection of a loaded frame into the frame
/// given by pose. Clouds carry normals oriented toward the camera center and
/// are voxel-downsampled. Detections whose masks hold no valid depth are
/// skipped.
inline std::vector<instance_map::ObjectInfoTuple> ExtractObjects(const PosedFrame& frame,
                                                                 const DetectionRecord& record,
                                                                 const geometry::Pose& pose,
                                                                 const ExtractionOptions& options,
                                                                 std::vector<std::string>* warnings = nullptr)
{
  const auto& k = frame.intrinsics;
  record.ValidateAgainst(k.width, k.height);
  std::vector<instance_map::ObjectInfoTuple> out;
  for (std::size_t i : SurvivingDetections(record, options))
  {
    const Detection& det = record.detections[i];
    const geometry::Mask mask = DecodeMask(det.mask_rle, k.width, k.height);
    geometry::PointCloud cloud = geometry::Backproject(frame.rgb, frame.depth, mask, k, pose);
    if (cloud.Empty())
    {
      if (warnings != nullptr)
      {
        warnings->push_back("frame " + frame.frame_id + ": detection '" + det.caption + "' has no valid depth");
      }
      continue;
    }
    cloud.normals = geometry::EstimateNormals(cloud, options.normal_radius_factor * options.voxel, pose.Translation());
    instance_map::ObjectInfoTuple tuple;
    tuple.cloud = geometry::VoxelDownsample(cloud, options.voxel);
    tuple.embeddings.push_back(det.embedding);
    out.push_back(std::move(tuple));
  }
  return out;
}

/// Tuples from every stride-th frame (before clustering), ids 0..n-1.
/// Frames without a matching record are skipped with a warning; frames
/// without a pose are an input error.
inline instance_map::ObjectMemory CollectTuples(std::vector<PosedFrame>& frames, const DetectionFile& records,
                                                std::size_t stride, const ExtractionOptions& options,
                                                std::vector<std::string>* warnings = nullptr)
{
  instance_map::ObjectMemory memory;
  memory.embedding_dim = records.embedding_dim;
  for (std::size_t idx : SampleIndices(frames, stride))
  {
    PosedFrame& frame = frames[idx];
    if (!frame.pose)
    {
      throw InputError("memory frame " + frame.frame_id + " has no pose");
    }
    const DetectionRecord* record = records.Find(frame.frame_id);
    if (record == nullptr)
    {
      if (warnings != nullptr)
      {
        warnings->push_back("frame " + frame.frame_id + " has no detection record; skipped");
      }
      continue;
    }
    frame.EnsureLoaded();
    for (auto& tuple : ExtractObjects(frame, *record, *frame.pose, options, warnings))
    {
      tuple.id = memory.objects.size();
      memory.objects.push_back(std::move(tuple));
    }
    frame.Release();
  }
  return memory;
}

/// Memory formation: collect tuples from sampled frames, then cluster once.
inline instance_map::ObjectMemory BuildMemory(std::vector<PosedFrame>& frames, const DetectionFile& records,
                                              const instance_map::ClusteringConfig& config, std::size_t stride,
                                              ExtractionOptions options = {},
                                              std::vector<std::string>* warnings = nullptr)
{
  options.voxel = config.voxel;
  const instance_map::ObjectMemory raw = CollectTuples(frames, records, stride, options, warnings);
  if (raw.Empty())
  {
    throw InputError("no object detections in the sampled frames");
  }
  return instance_map::ClusterMemory(raw, config);
}
}  // namespace instloc::ingest
