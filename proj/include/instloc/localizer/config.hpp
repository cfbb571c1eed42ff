#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "instloc/common.hpp"
#include "instloc/geometry/pose.hpp"
#include "instloc/instance_map/object_tuple.hpp"

namespace instloc::localizer
{
/// A query frame with fewer than three usable detections.
class NotEnoughDetections : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Too few correspondences to draw a RANSAC sample.
class DegenerateInput : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Outcome of one assignment candidate inside localize().
struct CandidateDiagnostic
{
  std::size_t candidate = 0;
  double score = 0.0;
  double overlap = 0.0;
  double icp_fitness = 0.0;
  std::string error;
};

/// No candidate produced a usable pose.
class LocalizationFailed : public std::runtime_error
{
public:
  LocalizationFailed(const std::string& what, std::vector<CandidateDiagnostic> diagnostics)
    : std::runtime_error(what), diagnostics_(std::move(diagnostics))
  {
  }

  const std::vector<CandidateDiagnostic>& diagnostics() const { return diagnostics_; }

private:
  std::vector<CandidateDiagnostic> diagnostics_;
};

struct RegistrationConfig
{
  double voxel = 0.05;
  std::size_t ransac_iters = 100000;
  std::size_t ransac_sample = 4;
  double ransac_dist = 0.075;
  double ransac_confidence = 0.999;
  double edge_len_check = 0.9;
  double icp_max_dist = 0.1;
  std::size_t icp_max_iters = 50;
  double color_weight = 0.5;
  double onehot_scale = 5.0;
  double overlap_tau = 0.075;
  std::size_t k_best = 8;
  std::size_t top_m_per_detection = 5;
  /// Pair distances are clamped below by this before multiplying, so exact
  /// matches do not zero out a whole assignment.
  double score_floor = 1e-6;
  /// Normal and FPFH radii as multiples of voxel.
  double normal_radius_factor = 2.0;
  double feature_radius_factor = 5.0;
  instance_map::EmbeddingAggregation aggregation = instance_map::EmbeddingAggregation::kMean;
  std::uint64_t seed = 0;

  double NormalRadius() const { return normal_radius_factor * voxel; }
  double FeatureRadius() const { return feature_radius_factor * voxel; }

  void Validate() const
  {
    if (!(voxel > 0.0 && ransac_dist > 0.0 && icp_max_dist > 0.0 && overlap_tau > 0.0 && score_floor > 0.0 &&
          normal_radius_factor > 0.0 && feature_radius_factor > 0.0))
    {
      throw ConfigError("registration distances must be positive");
    }
    if (ransac_iters == 0 || icp_max_iters == 0 || k_best == 0 || top_m_per_detection == 0)
    {
      throw ConfigError("registration counts must be positive");
    }
    if (ransac_sample < 3)
    {
      throw ConfigError("ransac_sample must be at least 3");
    }
    if (!(edge_len_check > 0.0 && edge_len_check <= 1.0))
    {
      throw ConfigError("edge_len_check must lie in (0, 1]");
    }
    if (!(color_weight >= 0.0 && color_weight <= 1.0))
    {
      throw ConfigError("color_weight must lie in [0, 1]");
    }
    if (!(ransac_confidence > 0.0 && ransac_confidence < 1.0))
    {
      throw ConfigError("ransac_confidence must lie in (0, 1)");
    }
    if (!(onehot_scale >= 0.0))
    {
      throw ConfigError("onehot_scale must be nonnegative");
    }
  }
};
}  // namespace instloc::localizer
