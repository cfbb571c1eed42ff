#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <vector>

#include <Eigen/Dense>

#include "instloc/common.hpp"
#include "instloc/geometry/voxel.hpp"
#include "instloc/instance_map/object_tuple.hpp"

namespace instloc::instance_map
{
using DistanceMatrix = Eigen::MatrixXd;
using Labels = std::vector<int>;

/// Relabels so cluster ids are 0-based in order of each cluster's lowest
/// member index.
inline Labels CanonicalLabels(const Labels& raw)
{
  std::map<int, int> remap;
  Labels out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i)
  {
    auto [it, inserted] = remap.try_emplace(raw[i], static_cast<int>(remap.size()));
    out[i] = it->second;
  }
  return out;
}

/// Average-linkage agglomerative clustering. Merges the closest pair of
/// clusters while its linkage is <= threshold; equal linkages resolve to
/// the lexicographically lowest (lowest-member-index) pair.
inline Labels AggCluster(const DistanceMatrix& dist, double threshold)
{
  const Eigen::Index n = dist.rows();
  if (dist.cols() != n)
  {
    throw InputError("agg_cluster: distance matrix must be square");
  }
  for (Eigen::Index i = 0; i < n; ++i)
  {
    if (dist(i, i) != 0.0)
    {
      throw InputError("agg_cluster: diagonal must be zero");
    }
    for (Eigen::Index j = i + 1; j < n; ++j)
    {
      if (std::abs(dist(i, j) - dist(j, i)) > 1e-12 * std::max(1.0, std::abs(dist(i, j))))
      {
        throw InputError("agg_cluster: distance matrix is not symmetric");
      }
    }
  }
  // Clusters are keyed by their lowest member; sum holds the total pairwise
  // distance between two clusters, so linkage = sum / (size_a * size_b).
  DistanceMatrix sum = dist;
  std::vector<Eigen::Index> size(static_cast<std::size_t>(n), 1);
  std::vector<bool> alive(static_cast<std::size_t>(n), true);
  std::vector<int> owner(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i)
  {
    owner[static_cast<std::size_t>(i)] = static_cast<int>(i);
  }
  while (true)
  {
    double best = std::numeric_limits<double>::infinity();
    Eigen::Index bi = -1;
    Eigen::Index bj = -1;
    for (Eigen::Index i = 0; i < n; ++i)
    {
      if (!alive[static_cast<std::size_t>(i)])
      {
        continue;
      }
      for (Eigen::Index j = i + 1; j < n; ++j)
      {
        if (!alive[static_cast<std::size_t>(j)])
        {
          continue;
        }
        const double link =
          sum(i, j) / static_cast<double>(size[static_cast<std::size_t>(i)] * size[static_cast<std::size_t>(j)]);
        if (link < best)
        {
          best = link;
          bi = i;
          bj = j;
        }
      }
    }
    if (bi < 0 || !(best <= threshold))
    {
      break;
    }
    for (Eigen::Index k = 0; k < n; ++k)
    {
      sum(bi, k) += sum(bj, k);
      sum(k, bi) = sum(bi, k);
    }
    size[static_cast<std::size_t>(bi)] += size[static_cast<std::size_t>(bj)];
    alive[static_cast<std::size_t>(bj)] = false;
    for (auto& o : owner)
    {
      if (o == bj)
      {
        o = static_cast<int>(bi);
      }
    }
  }
  return CanonicalLabels(owner);
}

inline constexpr int kNoise = -1;

/// Density-based clustering of 3-D points. A point is core when at least
/// min_pts points (itself included) lie within eps. Non-core points that
/// are not reachable from any core point are labeled kNoise.
inline Labels Dbscan(const std::vector<Eigen::Vector3d>& points, double eps, int min_pts)
{
  if (!(eps > 0.0) || min_pts < 1)
  {
    throw InputError("dbscan: eps must be positive and min_pts >= 1");
  }
  const std::size_t n = points.size();
  std::vector<std::vector<std::size_t>> hood(n);
  for (std::size_t i = 0; i < n; ++i)
  {
    for (std::size_t j = 0; j < n; ++j)
    {
      if ((points[i] - points[j]).norm() <= eps)
      {
        hood[i].push_back(j);
      }
    }
  }
  constexpr int kUnvisited = -2;
  Labels labels(n, kUnvisited);
  int next = 0;
  for (std::size_t i = 0; i < n; ++i)
  {
    if (labels[i] != kUnvisited)
    {
      continue;
    }
    if (hood[i].size() < static_cast<std::size_t>(min_pts))
    {
      labels[i] = kNoise;
      continue;
    }
    const int cluster = next++;
    labels[i] = cluster;
    std::deque<std::size_t> frontier(hood[i].begin(), hood[i].end());
    while (!frontier.empty())
    {
      const std::size_t j = frontier.front();
      frontier.pop_front();
      if (labels[j] == kNoise)
      {
        labels[j] = cluster;
      }
      if (labels[j] != kUnvisited)
      {
        continue;
      }
      labels[j] = cluster;
      if (hood[j].size() >= static_cast<std::size_t>(min_pts))
      {
        frontier.insert(frontier.end(), hood[j].begin(), hood[j].end());
      }
    }
  }
  return labels;
}

inline DistanceMatrix PairwiseIouDistance(const std::vector<ObjectInfoTuple>& tuples, double voxel)
{
  const auto n = static_cast<Eigen::Index>(tuples.size());
  std::vector<geometry::VoxelSet> occupancy(tuples.size());
  ParallelFor(tuples.size(), [&](std::size_t i) { occupancy[i] = geometry::OccupiedVoxels(tuples[i].cloud, voxel); });
  DistanceMatrix d = DistanceMatrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
  {
    for (Eigen::Index j = i + 1; j < n; ++j)
    {
      d(i, j) = d(j, i) = 1.0 - geometry::VoxelIou(occupancy[static_cast<std::size_t>(i)],
                                                   occupancy[static_cast<std::size_t>(j)]);
    }
  }
  return d;
}

inline DistanceMatrix PairwiseEmbeddingDistance(const std::vector<ObjectInfoTuple>& tuples,
                                                EmbeddingAggregation aggregation)
{
  const auto n = static_cast<Eigen::Index>(tuples.size());
  DistanceMatrix d = DistanceMatrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
  {
    for (Eigen::Index j = i + 1; j < n; ++j)
    {
      d(i, j) = d(j, i) = TupleEmbeddingDistance(tuples[static_cast<std::size_t>(i)],
                                                 tuples[static_cast<std::size_t>(j)], aggregation);
    }
  }
  return d;
}

/// Groups tuples sharing a label, in label order; members are folded in
/// ascending index order.
inline std::vector<ObjectInfoTuple> GroupByLabel(const std::vector<ObjectInfoTuple>& tuples, const Labels& labels,
                                                 const ClusteringConfig& config)
{
  const Labels canon = CanonicalLabels(labels);
  const int count = canon.empty() ? 0 : *std::max_element(canon.begin(), canon.end()) + 1;
  std::vector<ObjectInfoTuple> out(static_cast<std::size_t>(count));
  std::vector<int> members(static_cast<std::size_t>(count), 0);
  for (std::size_t i = 0; i < tuples.size(); ++i)
  {
    const auto k = static_cast<std::size_t>(canon[i]);
    out[k] = members[k] == 0 ? tuples[i] : Group(out[k], tuples[i]);
    ++members[k];
  }
  if (config.downsample_merged)
  {
    for (std::size_t k = 0; k < out.size(); ++k)
    {
      if (members[k] > 1)
      {
        out[k].cloud = geometry::VoxelDownsample(out[k].cloud, config.voxel);
      }
    }
  }
  return out;
}

/// Which output tuple each input tuple ended up in, after each stage.
struct ClusteringTrace
{
  std::vector<std::size_t> stage1;  // input index -> stage-1 group
  std::vector<std::size_t> final;   // input index -> output tuple
};

/// Three-stage clustering: occupancy-IoU agglomeration, then embedding
/// agglomeration, then DBSCAN on tuple centroids within each embedding
/// cluster. Output tuples partition the input tuples; ids are renumbered
/// 0..m-1.
inline ObjectMemory ClusterMemory(const ObjectMemory& memory, const ClusteringConfig& config,
                                  ClusteringTrace* trace = nullptr)
{
  if (memory.Empty())
  {
    throw InputError("cluster_memory: empty memory");
  }
  config.Validate();
  const auto& input = memory.objects;

  const Labels iou_labels = CanonicalLabels(AggCluster(PairwiseIouDistance(input, config.voxel), 1.0 - config.eps_iou));
  const std::vector<ObjectInfoTuple> stage1 = GroupByLabel(input, iou_labels, config);

  const Labels sem_labels =
    CanonicalLabels(AggCluster(PairwiseEmbeddingDistance(stage1, config.aggregation), config.eps_l2));
  const int sem_count = *std::max_element(sem_labels.begin(), sem_labels.end()) + 1;

  // Final label per stage-1 tuple: one id per (semantic cluster, DBSCAN
  // cluster) pair; DBSCAN noise points stay on their own.
  Labels final_labels(stage1.size(), -1);
  int next = 0;
  for (int k = 0; k < sem_count; ++k)
  {
    std::vector<std::size_t> members;
    std::vector<Eigen::Vector3d> centroids;
    for (std::size_t i = 0; i < stage1.size(); ++i)
    {
      if (sem_labels[i] == k)
      {
        members.push_back(i);
        centroids.push_back(stage1[i].cloud.Centroid());
      }
    }
    const Labels spatial = Dbscan(centroids, config.dbscan_eps, config.dbscan_min_pts);
    std::map<int, int> local;
    for (std::size_t m = 0; m < members.size(); ++m)
    {
      if (spatial[m] == kNoise)
      {
        final_labels[members[m]] = next++;
        continue;
      }
      auto [it, inserted] = local.try_emplace(spatial[m], next);
      if (inserted)
      {
        ++next;
      }
      final_labels[members[m]] = it->second;
    }
  }
  const Labels canon = CanonicalLabels(final_labels);

  ObjectMemory out;
  out.meta = config;
  out.embedding_dim = memory.embedding_dim;
  out.objects = GroupByLabel(stage1, canon, config);
  for (std::size_t i = 0; i < out.objects.size(); ++i)
  {
    out.objects[i].id = i;
  }
  if (trace != nullptr)
  {
    trace->stage1.resize(input.size());
    trace->final.resize(input.size());
    for (std::size_t i = 0; i < input.size(); ++i)
    {
      const auto s1 = static_cast<std::size_t>(iou_labels[i]);
      trace->stage1[i] = s1;
      trace->final[i] = static_cast<std::size_t>(canon[s1]);
    }
  }
  return out;
}
}  // namespace instloc::instance_map
