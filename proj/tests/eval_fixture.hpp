#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "instloc/geometry/pose.hpp"

namespace instloc::test
{
// Seven frames with hand-picked errors; the last one failed to localize.
struct MetricFixtureFrame
{
  double te;
  double re;
  bool localized;
};

inline constexpr std::array<MetricFixtureFrame, 7> kMetricFixture{{
    {0.10, 0.010, true},
    {0.29, 0.028, true},
    {0.35, 0.050, true},
    {0.55, 0.200, true},
    {0.61, 0.020, true},
    {1.60, 1.121, true},
    {0.00, 0.000, false},
}};

// Worked by hand from the table above.
inline constexpr double kFixtureMeanTe = 3.50 / 6.0;
inline constexpr double kFixtureMeanRe = 1.429 / 6.0;
inline constexpr double kFixtureMedianTe = (0.35 + 0.55) / 2.0;
inline constexpr double kFixtureMedianRe = (0.028 + 0.050) / 2.0;
inline constexpr double kFixtureSuccessRate = 400.0 / 7.0;
inline constexpr std::size_t kFixtureSuccesses = 4;

inline geometry::Pose FixtureTruth(std::size_t i)
{
  const double k = static_cast<double>(i);
  return geometry::Pose::FromAxisAngle(Eigen::Vector3d(0.3, -0.5, 1.0), 0.4 + 0.7 * k,
                                       Eigen::Vector3d(1.0 + k, -2.0 + 0.5 * k, 1.2));
}

/// Writes groundtruth.txt and preds.jsonl for the fixture into dir.
inline void WriteMetricFixture(const std::filesystem::path& dir)
{
  std::ofstream gt(dir / "groundtruth.txt");
  std::ofstream pred(dir / "preds.jsonl");
  gt.precision(17);
  gt << "# timestamp tx ty tz qx qy qz qw\n";
  const Eigen::Vector3d direction = Eigen::Vector3d(2.0, 3.0, 6.0) / 7.0;
  const std::array<Eigen::Vector3d, 3> axes{Eigen::Vector3d::UnitX(), Eigen::Vector3d::UnitY(),
                                            Eigen::Vector3d(1.0, 1.0, 1.0).normalized()};
  for (std::size_t i = 0; i < kMetricFixture.size(); ++i)
  {
    const double t = 100.0 + static_cast<double>(i);
    const geometry::Pose truth = FixtureTruth(i);
    const Eigen::Quaterniond q = truth.Quaternion();
    gt << t << ' ' << truth.Translation().x() << ' ' << truth.Translation().y() << ' ' << truth.Translation().z()
       << ' ' << q.x() << ' ' << q.y() << ' ' << q.z() << ' ' << q.w() << "\n";
    const auto& f = kMetricFixture[i];
    nlohmann::json j = {{"frame_id", "f" + std::to_string(i)}, {"timestamp", t}};
    if (f.localized)
    {
      const Eigen::Matrix3d r = truth.Rotation() * Eigen::AngleAxisd(f.re, axes[i % 3]).toRotationMatrix();
      const geometry::Pose est(r, truth.Translation() + f.te * direction);
      const Eigen::Quaterniond qe = est.Quaternion();
      j["status"] = "ok";
      j["quaternion"] = {qe.w(), qe.x(), qe.y(), qe.z()};
      j["translation"] = {est.Translation().x(), est.Translation().y(), est.Translation().z()};
    }
    else
    {
      j["status"] = "failed";
    }
    pred << j.dump() << "\n";
  }
}
}  // namespace instloc::test
