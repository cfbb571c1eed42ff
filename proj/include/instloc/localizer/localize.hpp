#pragma once

#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "instloc/common.hpp"
#include "instloc/geometry/features.hpp"
#include "instloc/geometry/kdtree.hpp"
#include "instloc/geometry/voxel.hpp"
#include "instloc/ingest/memory_builder.hpp"
#include "instloc/instance_map/object_tuple.hpp"
#include "instloc/localizer/assignment.hpp"
#include "instloc/localizer/config.hpp"
#include "instloc/localizer/registration.hpp"

namespace instloc::localizer
{
struct PoseEstimate
{
  /// Camera-to-world.
  geometry::Pose pose;
  double overlap = 0.0;
  AssignmentCandidate assignment;
  double icp_fitness = 0.0;
  std::size_t candidate_index = 0;
  std::vector<CandidateDiagnostic> diagnostics;
};

/// Query-frame objects in the camera frame: memory-formation extraction
/// with an identity pose.
inline std::vector<instance_map::ObjectInfoTuple> DetectQueryObjects(const ingest::PosedFrame& frame,
                                                                     const ingest::DetectionRecord& record,
                                                                     const ingest::ExtractionOptions& options)
{
  auto objects = ingest::ExtractObjects(frame, record, geometry::Pose::Identity(), options);
  if (objects.size() < kMinAssignmentSize)
  {
    throw NotEnoughDetections("frame " + frame.frame_id + ": " + std::to_string(objects.size()) +
                              " usable detections, need 3");
  }
  return objects;
}

/// FPFH rows rescaled to unit sum so a one-hot term of a few units
/// dominates cross-object distances.
inline geometry::FeatureMatrix NormalizedFpfh(const geometry::PointCloud& cloud, const RegistrationConfig& config)
{
  geometry::FeatureMatrix f = geometry::ComputeFpfh(cloud, config.NormalRadius(), config.FeatureRadius()).features;
  for (Eigen::Index r = 0; r < f.rows(); ++r)
  {
    const double s = f.row(r).sum();
    if (s > 0.0)
    {
      f.row(r) /= s;
    }
  }
  return f;
}

/// Registration-ready object: downsampled cloud with normals and features.
struct PreparedObject
{
  geometry::PointCloud cloud;
  geometry::FeatureMatrix fpfh;
};

inline PreparedObject PrepareObject(const geometry::PointCloud& cloud, const RegistrationConfig& config)
{
  PreparedObject out;
  out.cloud = geometry::VoxelDownsample(cloud, config.voxel);
  if (!out.cloud.HasNormals())
  {
    out.cloud.normals = geometry::EstimateNormals(out.cloud, config.NormalRadius());
  }
  out.fpfh = NormalizedFpfh(out.cloud, config);
  return out;
}

/// Per-object features plus the merged memory cloud and its search tree,
/// computed once and shared by every query.
struct PreparedMemory
{
  const instance_map::ObjectMemory* memory = nullptr;
  std::vector<PreparedObject> objects;
  std::unique_ptr<geometry::PointCloud> merged;
  std::unique_ptr<geometry::KdTree3> tree;
};

inline PreparedMemory PrepareMemory(const instance_map::ObjectMemory& memory, const RegistrationConfig& config)
{
  if (memory.Empty())
  {
    throw InputError("localize: empty memory");
  }
  PreparedMemory out;
  out.memory = &memory;
  out.objects.resize(memory.Size());
  ParallelFor(memory.Size(), [&](std::size_t i) { out.objects[i] = PrepareObject(memory.objects[i].cloud, config); });
  out.merged = std::make_unique<geometry::PointCloud>();
  for (const auto& o : out.objects)
  {
    out.merged->points.insert(out.merged->points.end(), o.cloud.points.begin(), o.cloud.points.end());
  }
  out.tree = std::make_unique<geometry::KdTree3>(out.merged->points);
  return out;
}

/// Source and target of one assignment: concatenated clouds with
/// FPFH plus a one-hot of the pair index.
struct CompositeClouds
{
  geometry::PointCloud source;
  geometry::PointCloud target;
  geometry::FeatureMatrix source_feat;
  geometry::FeatureMatrix target_feat;
};

inline CompositeClouds BuildComposite(const std::vector<PreparedObject>& detections,
                                      const std::vector<PreparedObject>& memory, const AssignmentCandidate& candidate,
                                      double onehot_scale)
{
  const auto pairs = static_cast<Eigen::Index>(candidate.pairs.size());
  auto assemble = [&](bool query, geometry::PointCloud& cloud, geometry::FeatureMatrix& feat) {
    Eigen::Index rows = 0;
    for (const auto& [d, m] : candidate.pairs)
    {
      rows += static_cast<Eigen::Index>((query ? detections[d] : memory[m]).cloud.Size());
    }
    feat = geometry::FeatureMatrix::Zero(rows, geometry::kFpfhDim + pairs);
    Eigen::Index row = 0;
    for (Eigen::Index k = 0; k < pairs; ++k)
    {
      const auto& [d, m] = candidate.pairs[static_cast<std::size_t>(k)];
      const PreparedObject& obj = query ? detections[d] : memory[m];
      cloud.Append(obj.cloud);
      const auto n = static_cast<Eigen::Index>(obj.cloud.Size());
      feat.block(row, 0, n, geometry::kFpfhDim) = obj.fpfh;
      feat.block(row, geometry::kFpfhDim + k, n, 1).setConstant(onehot_scale);
      row += n;
    }
  };
  CompositeClouds out;
  assemble(true, out.source, out.source_feat);
  assemble(false, out.target, out.target_feat);
  return out;
}

/// Registers every assignment candidate and keeps the pose with the highest
/// overlap of all query detections against the whole memory; ties go to the
/// lower assignment score, then the lower candidate index.
inline PoseEstimate Localize(const std::vector<instance_map::ObjectInfoTuple>& detections,
                             const PreparedMemory& prepared, const RegistrationConfig& config)
{
  config.Validate();
  if (prepared.memory == nullptr || prepared.memory->Empty())
  {
    throw InputError("localize: empty memory");
  }
  if (detections.size() < kMinAssignmentSize)
  {
    throw NotEnoughDetections("localize: fewer than 3 detections");
  }
  const auto candidates = EnumerateAssignments(detections, *prepared.memory, config);
  if (candidates.empty())
  {
    throw LocalizationFailed("no assignment of at least 3 detections to distinct memory objects", {});
  }

  std::vector<PreparedObject> query(detections.size());
  ParallelFor(detections.size(), [&](std::size_t i) { query[i] = PrepareObject(detections[i].cloud, config); });
  geometry::PointCloud all_query;
  for (const auto& q : query)
  {
    all_query.points.insert(all_query.points.end(), q.cloud.points.begin(), q.cloud.points.end());
  }

  std::vector<PoseEstimate> results(candidates.size());
  std::vector<CandidateDiagnostic> diagnostics(candidates.size());
  ParallelFor(candidates.size(), [&](std::size_t c) {
    CandidateDiagnostic& diag = diagnostics[c];
    diag.candidate = c;
    diag.score = candidates[c].score;
    PoseEstimate& est = results[c];
    est.assignment = candidates[c];
    est.candidate_index = c;
    try
    {
      const auto comp = BuildComposite(query, prepared.objects, candidates[c], config.onehot_scale);
      const auto ransac =
          RansacFeatureAlign(comp.source, comp.target, comp.source_feat, comp.target_feat, config, config.seed + c);
      const auto icp = ColoredIcp(comp.source, comp.target, ransac.pose, config);
      est.pose = icp.pose;
      est.icp_fitness = icp.fitness;
      est.overlap = Overlap(all_query, *prepared.tree, est.pose, config.overlap_tau);
    }
    catch (const DegenerateInput& e)
    {
      diag.error = e.what();
    }
    diag.overlap = est.overlap;
    diag.icp_fitness = est.icp_fitness;
  });

  std::size_t best = 0;
  for (std::size_t c = 1; c < results.size(); ++c)
  {
    const bool better = results[c].overlap > results[best].overlap ||
                        (results[c].overlap == results[best].overlap &&
                         results[c].assignment.score < results[best].assignment.score);
    if (better)
    {
      best = c;
    }
  }
  if (results[best].overlap <= 0.0)
  {
    throw LocalizationFailed("every assignment candidate ended with zero overlap", diagnostics);
  }
  PoseEstimate out = results[best];
  out.diagnostics = std::move(diagnostics);
  return out;
}

inline PoseEstimate Localize(const ingest::PosedFrame& frame, const ingest::DetectionRecord& record,
                             const PreparedMemory& prepared, const RegistrationConfig& config,
                             ingest::ExtractionOptions options = {})
{
  options.voxel = config.voxel;
  return Localize(DetectQueryObjects(frame, record, options), prepared, config);
}

/// One line of localization output.
struct Prediction
{
  std::string frame_id;
  double timestamp = 0.0;
  std::string status = "ok";
  std::optional<PoseEstimate> estimate;
  std::string message;
};

inline nlohmann::json PredictionToJson(const Prediction& p, const instance_map::ObjectMemory* memory = nullptr)
{
  nlohmann::json j = {{"frame_id", p.frame_id}, {"timestamp", p.timestamp}, {"status", p.status}};
  if (p.estimate)
  {
    const auto& e = *p.estimate;
    const Eigen::Quaterniond q = e.pose.Quaternion();
    const Eigen::Vector3d& t = e.pose.Translation();
    j["quaternion"] = {q.w(), q.x(), q.y(), q.z()};
    j["translation"] = {t.x(), t.y(), t.z()};
    j["overlap"] = e.overlap;
    j["icp_fitness"] = e.icp_fitness;
    j["score"] = e.assignment.score;
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& [d, m] : e.assignment.pairs)
    {
      pairs.push_back({d, memory != nullptr ? memory->objects.at(m).id : m});
    }
    j["assignment"] = pairs;
  }
  if (!p.message.empty())
  {
    j["message"] = p.message;
  }
  return j;
}
}  // namespace instloc::localizer
