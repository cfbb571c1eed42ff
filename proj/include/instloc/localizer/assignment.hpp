#pragma once

#include <algorithm>
#include <functional>
#include <numeric>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "instloc/common.hpp"
#include "instloc/instance_map/object_tuple.hpp"
#include "instloc/localizer/config.hpp"

namespace instloc::localizer
{
/// Injective detection -> memory correspondence over at least three
/// detections. pairs hold (detection index, memory index) sorted by
/// detection; score is the product of the clamped pair distances.
struct AssignmentCandidate
{
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  double score = 0.0;
};

inline constexpr std::size_t kMinAssignmentSize = 3;

/// Ranking: lower score first, then more pairs, then lexicographic pairs.
inline bool RanksBefore(const AssignmentCandidate& a, const AssignmentCandidate& b)
{
  if (a.score != b.score)
  {
    return a.score < b.score;
  }
  if (a.pairs.size() != b.pairs.size())
  {
    return a.pairs.size() > b.pairs.size();
  }
  return a.pairs < b.pairs;
}

/// For each row, the top_m columns with the smallest distance (ties toward
/// the lower column index).
inline std::vector<std::vector<std::size_t>> NearestCandidates(const Eigen::MatrixXd& dist, std::size_t top_m)
{
  std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(dist.rows()));
  for (Eigen::Index r = 0; r < dist.rows(); ++r)
  {
    std::vector<std::size_t> cols(static_cast<std::size_t>(dist.cols()));
    std::iota(cols.begin(), cols.end(), std::size_t{0});
    std::stable_sort(cols.begin(), cols.end(), [&](std::size_t a, std::size_t b) {
      return dist(r, static_cast<Eigen::Index>(a)) < dist(r, static_cast<Eigen::Index>(b));
    });
    cols.resize(std::min(top_m, cols.size()));
    out[static_cast<std::size_t>(r)] = std::move(cols);
  }
  return out;
}

/// The k_best lowest-ranked assignments drawn from the given per-detection
/// candidate lists. Depth-first branch and bound: each detection is either
/// skipped or mapped to an unused candidate, and a branch is cut once even
/// its most optimistic completion ranks behind the current k-th best.
inline std::vector<AssignmentCandidate> EnumerateAssignments(const Eigen::MatrixXd& dist,
                                                             const std::vector<std::vector<std::size_t>>& candidates,
                                                             std::size_t k_best, double score_floor)
{
  const std::size_t n_det = candidates.size();
  if (static_cast<std::size_t>(dist.rows()) != n_det)
  {
    throw InputError("assignment: candidate lists do not match the distance matrix");
  }
  if (dist.cols() == 0)
  {
    throw InputError("assignment: empty memory");
  }
  if (!(dist.array() >= 0.0).all() || !dist.allFinite())
  {
    throw InputError("assignment: distances must be finite and nonnegative");
  }
  auto factor = [&](std::size_t d, std::size_t m) {
    return std::max(dist(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(m)), score_floor);
  };

  // optimistic[d]: smallest possible product contributed by detections d..n-1.
  std::vector<double> optimistic(n_det + 1, 1.0);
  for (std::size_t d = n_det; d-- > 0;)
  {
    double best = 1.0;
    for (std::size_t m : candidates[d])
    {
      best = std::min(best, factor(d, m));
    }
    optimistic[d] = optimistic[d + 1] * best;
  }

  std::vector<AssignmentCandidate> best;
  std::vector<bool> used(static_cast<std::size_t>(dist.cols()), false);
  AssignmentCandidate current;
  // Slack keeps rounding in the optimistic bound from cutting exact ties.
  constexpr double kSlack = 1.0 + 1e-12;

  std::function<void(std::size_t, double)> search = [&](std::size_t d, double partial) {
    if (current.pairs.size() + (n_det - d) < kMinAssignmentSize)
    {
      return;
    }
    if (best.size() == k_best && partial * optimistic[d] > best.back().score * kSlack)
    {
      return;
    }
    if (d == n_det)
    {
      current.score = partial;
      const auto pos = std::upper_bound(best.begin(), best.end(), current, RanksBefore);
      if (best.size() < k_best || pos != best.end())
      {
        best.insert(pos, current);
        if (best.size() > k_best)
        {
          best.pop_back();
        }
      }
      return;
    }
    for (std::size_t m : candidates[d])
    {
      if (used[m])
      {
        continue;
      }
      used[m] = true;
      current.pairs.emplace_back(d, m);
      search(d + 1, partial * factor(d, m));
      current.pairs.pop_back();
      used[m] = false;
    }
    search(d + 1, partial);
  };
  if (k_best > 0)
  {
    search(0, 1.0);
  }
  return best;
}

inline std::vector<AssignmentCandidate> EnumerateAssignments(const Eigen::MatrixXd& dist,
                                                             const RegistrationConfig& config)
{
  return EnumerateAssignments(dist, NearestCandidates(dist, config.top_m_per_detection), config.k_best,
                              config.score_floor);
}

/// Embedding distances between query detections (rows) and memory objects.
inline Eigen::MatrixXd DetectionMemoryDistances(const std::vector<instance_map::ObjectInfoTuple>& detections,
                                                const instance_map::ObjectMemory& memory,
                                                instance_map::EmbeddingAggregation aggregation)
{
  Eigen::MatrixXd dist(static_cast<Eigen::Index>(detections.size()), static_cast<Eigen::Index>(memory.Size()));
  for (std::size_t i = 0; i < detections.size(); ++i)
  {
    for (std::size_t j = 0; j < memory.Size(); ++j)
    {
      dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          instance_map::TupleEmbeddingDistance(detections[i], memory.objects[j], aggregation);
    }
  }
  return dist;
}

inline std::vector<AssignmentCandidate> EnumerateAssignments(
    const std::vector<instance_map::ObjectInfoTuple>& detections, const instance_map::ObjectMemory& memory,
    const RegistrationConfig& config)
{
  if (memory.Empty())
  {
    throw InputError("assignment: empty memory");
  }
  if (detections.size() < kMinAssignmentSize)
  {
    throw NotEnoughDetections("assignment needs at least 3 detections");
  }
  return EnumerateAssignments(DetectionMemoryDistances(detections, memory, config.aggregation), config);
}
}  // namespace instloc::localizer
