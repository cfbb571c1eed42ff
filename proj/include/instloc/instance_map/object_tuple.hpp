#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "instloc/common.hpp"
#include "instloc/geometry/point_cloud.hpp"

namespace instloc::instance_map
{
using Embedding = Eigen::VectorXd;
using TupleId = std::uint64_t;

/// Process-unique ids for freshly grouped tuples.
inline TupleId NextTupleId()
{
  static std::atomic<TupleId> counter{1ULL << 40};
  return counter.fetch_add(1);
}

/// One object instance: a global-frame point cloud and every embedding
/// observed for it.
struct ObjectInfoTuple
{
  geometry::PointCloud cloud;
  std::vector<Embedding> embeddings;
  TupleId id = 0;

  Eigen::Index Dimension() const { return embeddings.empty() ? 0 : embeddings.front().size(); }

  Embedding MeanEmbedding() const
  {
    Embedding mean = Embedding::Zero(Dimension());
    for (const auto& e : embeddings)
    {
      mean += e;
    }
    return embeddings.empty() ? mean : Embedding(mean / static_cast<double>(embeddings.size()));
  }

  void Validate() const
  {
    if (cloud.Empty())
    {
      throw InputError("object tuple has an empty cloud");
    }
    if (embeddings.empty())
    {
      throw InputError("object tuple has no embeddings");
    }
    for (const auto& e : embeddings)
    {
      if (e.size() != Dimension())
      {
        throw InputError("object tuple embeddings differ in dimension");
      }
    }
    cloud.Validate();
  }
};

enum class EmbeddingAggregation
{
  kMean,
  kMinPairwise,
};

/// Thresholds for the three-stage tuple clustering.
struct ClusteringConfig
{
  double eps_iou = 0.25;
  double eps_l2 = 0.5;
  double dbscan_eps = 1.0;
  int dbscan_min_pts = 1;
  double voxel = 0.05;
  EmbeddingAggregation aggregation = EmbeddingAggregation::kMean;
  /// Voxel-downsample clouds of tuples that absorbed others.
  bool downsample_merged = true;

  void Validate() const
  {
    if (!(eps_iou > 0.0 && eps_iou <= 1.0))
    {
      throw ConfigError("eps_iou must be in (0, 1]");
    }
    if (!(eps_l2 > 0.0 && dbscan_eps > 0.0 && voxel > 0.0) || dbscan_min_pts < 1)
    {
      throw ConfigError("clustering thresholds must be positive, dbscan_min_pts >= 1");
    }
  }
};

struct ObjectMemory
{
  std::vector<ObjectInfoTuple> objects;
  ClusteringConfig meta;
  Eigen::Index embedding_dim = 0;

  std::size_t Size() const { return objects.size(); }
  bool Empty() const { return objects.empty(); }

  void Validate() const
  {
    std::vector<TupleId> ids;
    for (const auto& o : objects)
    {
      o.Validate();
      if (o.Dimension() != embedding_dim)
      {
        throw InputError("memory tuple embedding dimension differs from memory dimension");
      }
      ids.push_back(o.id);
    }
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
    {
      throw InputError("memory tuple ids are not unique");
    }
  }

  std::size_t IndexOf(TupleId id) const
  {
    for (std::size_t i = 0; i < objects.size(); ++i)
    {
      if (objects[i].id == id)
      {
        return i;
      }
    }
    throw InputError("unknown memory tuple id");
  }
};

/// Concatenates points and embedding lists of a and b under a fresh id.
inline ObjectInfoTuple Group(const ObjectInfoTuple& a, const ObjectInfoTuple& b)
{
  if (!a.embeddings.empty() && !b.embeddings.empty() && a.Dimension() != b.Dimension())
  {
    throw InputError("group: embedding dimensions differ");
  }
  ObjectInfoTuple out;
  out.cloud = a.cloud;
  out.cloud.Append(b.cloud);
  out.embeddings = a.embeddings;
  out.embeddings.insert(out.embeddings.end(), b.embeddings.begin(), b.embeddings.end());
  out.id = NextTupleId();
  return out;
}

/// Distance between two tuples' embedding lists: L2 between list means by
/// default, or the minimum pairwise L2.
inline double TupleEmbeddingDistance(const ObjectInfoTuple& a, const ObjectInfoTuple& b,
                                     EmbeddingAggregation aggregation = EmbeddingAggregation::kMean)
{
  if (a.Dimension() != b.Dimension())
  {
    throw InputError("tuple_embedding_distance: dimension mismatch");
  }
  if (aggregation == EmbeddingAggregation::kMean)
  {
    return (a.MeanEmbedding() - b.MeanEmbedding()).norm();
  }
  double best = std::numeric_limits<double>::infinity();
  for (const auto& ea : a.embeddings)
  {
    for (const auto& eb : b.embeddings)
    {
      best = std::min(best, (ea - eb).norm());
    }
  }
  return best;
}
}  // namespace instloc::instance_map
