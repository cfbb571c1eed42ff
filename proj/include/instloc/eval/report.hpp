#pragma once

#include <array>
#include <cstdio>
#include <sstream>
#include <string>

#include "instloc/eval/metrics.hpp"

namespace instloc::eval
{
inline nlohmann::json SummaryToJson(const Summary& s)
{
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  return {{"frames", s.frames},
          {"localized", s.localized},
          {"successes", s.successes},
          {"mean_te", num(s.mean_te)},
          {"mean_re", num(s.mean_re)},
          {"median_te", num(s.median_te)},
          {"median_re", num(s.median_re)},
          {"success_rate", num(s.success_rate)}};
}

inline nlohmann::json ReportToJson(const EvalReport& r)
{
  nlohmann::json frames = nlohmann::json::array();
  for (const auto& f : r.frames)
  {
    nlohmann::json j = {{"sequence", f.sequence},   {"frame_id", f.frame_id}, {"timestamp", f.timestamp},
                        {"status", f.status},       {"success", f.success},   {"te", nullptr},
                        {"re", nullptr}};
    if (f.errors)
    {
      j["te"] = f.errors->te;
      j["re"] = f.errors->re;
    }
    frames.push_back(j);
  }
  nlohmann::json seqs = nlohmann::json::array();
  for (const auto& [name, s] : r.sequences)
  {
    auto j = SummaryToJson(s);
    j["sequence"] = name;
    seqs.push_back(j);
  }
  return {{"thresholds", {{"te_max", r.thresholds.te_max}, {"re_max", r.thresholds.re_max}}},
          {"pooled", SummaryToJson(r.pooled)},
          {"sequence_mean", SummaryToJson(r.sequence_mean)},
          {"sequences", seqs},
          {"frames", frames}};
}

/// Plain-text table: sequence, average and median errors, success rate.
inline std::string ReportTable(const EvalReport& r)
{
  auto pair = [](double a, double b) {
    if (!std::isfinite(a) || !std::isfinite(b))
    {
      return std::string("-");
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f / %.3f", a, b);
    return std::string(buf);
  };
  auto rate = [](double v) {
    if (!std::isfinite(v))
    {
      return std::string("-");
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return std::string(buf);
  };
  std::vector<std::array<std::string, 5>> rows;
  rows.push_back({"Sequence", "Frames", "Avg Errors (m, rad)", "Median Errors (m, rad)", "Success Rate (%)"});
  auto add = [&](const std::string& name, const Summary& s) {
    rows.push_back({name.empty() ? "-" : name, std::to_string(s.successes) + "/" + std::to_string(s.frames),
                    pair(s.mean_te, s.mean_re), pair(s.median_te, s.median_re), rate(s.success_rate)});
  };
  for (const auto& [name, s] : r.sequences)
  {
    add(name, s);
  }
  if (r.sequences.size() > 1)
  {
    add("all frames", r.pooled);
    add("sequence mean", r.sequence_mean);
  }
  std::array<std::size_t, 5> width{};
  for (const auto& row : rows)
  {
    for (std::size_t c = 0; c < row.size(); ++c)
    {
      width[c] = std::max(width[c], row[c].size());
    }
  }
  std::ostringstream os;
  for (std::size_t i = 0; i < rows.size(); ++i)
  {
    for (std::size_t c = 0; c < rows[i].size(); ++c)
    {
      os << (c ? "  " : "") << rows[i][c];
      if (c + 1 < rows[i].size())
      {
        os << std::string(width[c] - rows[i][c].size(), ' ');
      }
    }
    os << "\n";
    if (i == 0)
    {
      std::size_t total = 0;
      for (const auto w : width)
      {
        total += w;
      }
      os << std::string(total + 2 * (width.size() - 1), '-') << "\n";
    }
  }
  return os.str();
}

/// Per-frame CSV; failed frames leave te and re empty.
inline std::string ReportCsv(const EvalReport& r)
{
  std::ostringstream os;
  os.precision(17);
  os << "sequence,frame_id,timestamp,status,te,re,success\n";
  for (const auto& f : r.frames)
  {
    os << f.sequence << "," << f.frame_id << "," << f.timestamp << "," << f.status << ",";
    if (f.errors)
    {
      os << f.errors->te << "," << f.errors->re;
    }
    else
    {
      os << ",";
    }
    os << "," << (f.success ? 1 : 0) << "\n";
  }
  return os.str();
}
}  // namespace instloc::eval
