#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "instloc/common.hpp"
#include "instloc/geometry/pose.hpp"
#include "instloc/ingest/frames.hpp"

namespace instloc::eval
{
struct PoseErrors
{
  double te = 0.0;  // meters
  double re = 0.0;  // radians
};

/// TE = |t_est - t_gt|, RE = arccos(clamp((trace(R_gt^T R_est) - 1) / 2)).
inline PoseErrors ComputePoseErrors(const geometry::Pose& estimate, const geometry::Pose& truth)
{
  PoseErrors e;
  e.te = (estimate.Translation() - truth.Translation()).norm();
  const double c = ((truth.Rotation().transpose() * estimate.Rotation()).trace() - 1.0) / 2.0;
  e.re = std::acos(std::clamp(c, -1.0, 1.0));
  return e;
}

struct EvalThresholds
{
  double te_max = 0.6;
  double re_max = 0.3;

  void Validate() const
  {
    if (!(te_max > 0.0 && re_max > 0.0))
    {
      throw ConfigError("evaluate: thresholds must be positive");
    }
  }

  bool Success(const PoseErrors& e) const { return e.te <= te_max && e.re <= re_max; }
};

/// One line of a localization output file.
struct PredictionLine
{
  std::string frame_id;
  std::optional<double> timestamp;
  std::string status;
  std::optional<geometry::Pose> pose;
};

inline std::vector<PredictionLine> ReadPredictions(const std::filesystem::path& path)
{
  std::ifstream in(path);
  if (!in)
  {
    throw InputError("cannot read predictions " + path.string());
  }
  std::vector<PredictionLine> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line))
  {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos)
    {
      continue;
    }
    const std::string where = path.string() + ":" + std::to_string(number) + ": ";
    try
    {
      const auto j = nlohmann::json::parse(line);
      PredictionLine p;
      p.frame_id = j.at("frame_id").get<std::string>();
      p.status = j.at("status").get<std::string>();
      if (j.contains("timestamp") && !j["timestamp"].is_null())
      {
        p.timestamp = j["timestamp"].get<double>();
      }
      if (p.status == "ok")
      {
        const auto q = j.at("quaternion").get<std::vector<double>>();
        const auto t = j.at("translation").get<std::vector<double>>();
        if (q.size() != 4 || t.size() != 3)
        {
          throw InputError(where + "quaternion needs 4 values and translation 3");
        }
        p.pose = geometry::Pose::FromQuaternion(Eigen::Quaterniond(q[0], q[1], q[2], q[3]),
                                                Eigen::Vector3d(t[0], t[1], t[2]));
      }
      out.push_back(std::move(p));
    }
    catch (const nlohmann::json::exception& e)
    {
      throw InputError(where + e.what());
    }
    catch (const InputError& e)
    {
      throw InputError(where + e.what());
    }
  }
  return out;
}

struct FrameResult
{
  std::string sequence;
  std::string frame_id;
  double timestamp = 0.0;
  std::string status;
  std::optional<PoseErrors> errors;  // absent when localization failed
  bool success = false;
};

/// Aggregates over a set of frames. Failed localizations stay in the success
/// denominator; error statistics use frames that produced a pose.
struct Summary
{
  std::size_t frames = 0;
  std::size_t localized = 0;
  std::size_t successes = 0;
  double mean_te = 0.0;
  double mean_re = 0.0;
  double median_te = 0.0;
  double median_re = 0.0;
  double success_rate = 0.0;  // percent
};

/// Middle order statistic, or the mean of the two middle values.
inline double Median(std::vector<double> v)
{
  if (v.empty())
  {
    return std::nan("");
  }
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

inline Summary Summarize(const std::vector<FrameResult>& frames)
{
  Summary s;
  s.frames = frames.size();
  std::vector<double> te;
  std::vector<double> re;
  for (const auto& f : frames)
  {
    if (f.errors)
    {
      te.push_back(f.errors->te);
      re.push_back(f.errors->re);
    }
    s.successes += f.success ? 1 : 0;
  }
  s.localized = te.size();
  const double nan = std::nan("");
  s.mean_te = te.empty() ? nan : std::accumulate(te.begin(), te.end(), 0.0) / static_cast<double>(te.size());
  s.mean_re = re.empty() ? nan : std::accumulate(re.begin(), re.end(), 0.0) / static_cast<double>(re.size());
  s.median_te = Median(te);
  s.median_re = Median(re);
  s.success_rate = frames.empty() ? nan : 100.0 * static_cast<double>(s.successes) / static_cast<double>(s.frames);
  return s;
}

/// Ground truth is looked up by the prediction's timestamp, or by the frame
/// id read as a timestamp (TUM frame ids are timestamps).
inline std::vector<FrameResult> EvaluateRun(const std::vector<PredictionLine>& predictions,
                                            const ingest::GroundTruth& truth, const EvalThresholds& thresholds,
                                            const std::string& sequence = "", double max_dt = 0.02)
{
  thresholds.Validate();
  std::vector<FrameResult> out;
  std::vector<std::string> unresolved;
  for (const auto& p : predictions)
  {
    std::optional<double> t = p.timestamp;
    if (!t)
    {
      try
      {
        std::size_t used = 0;
        const double v = std::stod(p.frame_id, &used);
        if (used == p.frame_id.size())
        {
          t = v;
        }
      }
      catch (const std::exception&)
      {
      }
    }
    const auto gt = t ? truth.At(*t, max_dt) : std::nullopt;
    if (!gt)
    {
      unresolved.push_back(p.frame_id);
      continue;
    }
    FrameResult r;
    r.sequence = sequence;
    r.frame_id = p.frame_id;
    r.timestamp = *t;
    r.status = p.status;
    if (p.status == "ok" && p.pose)
    {
      r.errors = ComputePoseErrors(*p.pose, *gt);
      r.success = thresholds.Success(*r.errors);
    }
    out.push_back(std::move(r));
  }
  if (!unresolved.empty())
  {
    std::string list;
    for (std::size_t i = 0; i < unresolved.size(); ++i)
    {
      list += (i ? ", " : "") + unresolved[i];
    }
    throw InputError("evaluate: no ground-truth pose for frame(s) " + list);
  }
  return out;
}

/// Per-frame results of one or more sequences with both pooled (every
/// frame weighted equally) and per-sequence (every sequence weighted
/// equally) aggregates.
struct EvalReport
{
  EvalThresholds thresholds;
  std::vector<FrameResult> frames;
  std::vector<std::pair<std::string, Summary>> sequences;
  Summary pooled;
  Summary sequence_mean;  // field-wise mean over sequences
};

inline EvalReport BuildReport(const std::vector<std::vector<FrameResult>>& runs, const EvalThresholds& thresholds)
{
  EvalReport r;
  r.thresholds = thresholds;
  for (const auto& run : runs)
  {
    r.frames.insert(r.frames.end(), run.begin(), run.end());
    r.sequences.emplace_back(run.empty() ? std::string() : run.front().sequence, Summarize(run));
  }
  r.pooled = Summarize(r.frames);
  Summary& m = r.sequence_mean;
  const double n = static_cast<double>(r.sequences.size());
  for (const auto& [name, s] : r.sequences)
  {
    m.frames += s.frames;
    m.localized += s.localized;
    m.successes += s.successes;
    m.mean_te += s.mean_te / n;
    m.mean_re += s.mean_re / n;
    m.median_te += s.median_te / n;
    m.median_re += s.median_re / n;
    m.success_rate += s.success_rate / n;
  }
  return r;
}
}  // namespace instloc::eval
