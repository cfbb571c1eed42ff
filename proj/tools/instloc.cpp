// instloc command-line front end: map building, localization, evaluation,
// synthetic data, and fusion model checks.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "instloc/eval.hpp"
#include "instloc/fusion.hpp"
#include "instloc/ingest.hpp"
#include "instloc/instance_map.hpp"
#include "instloc/localizer.hpp"

namespace fs = std::filesystem;
using namespace instloc;

namespace
{
constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitFailure = 2;

// Raised for localization or evaluation outcomes that should exit with 2.
class RunFailure : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

std::vector<ingest::PosedFrame> LoadFrames(const fs::path& dir, const std::string& format)
{
  if (!fs::is_directory(dir))
  {
    throw InputError("dataset directory not found: " + dir.string());
  }
  std::string f = format;
  if (f == "auto")
  {
    f = fs::exists(dir / "scene.json") ? "synth" : "tum";
  }
  if (f == "synth")
  {
    return ingest::synth::LoadDataset(dir);
  }
  if (f == "tum")
  {
    return ingest::ParseTumSequence(dir, 0.02, ingest::LoadIntrinsics(dir / "intrinsics.json"));
  }
  throw InputError("unknown dataset format " + format);
}

void PrintWarnings(const std::vector<std::string>& warnings)
{
  for (const auto& w : warnings)
  {
    std::cerr << "warning: " << w << "\n";
  }
}

std::ofstream OpenOutput(const fs::path& path)
{
  if (path.has_parent_path())
  {
    fs::create_directories(path.parent_path());
  }
  std::ofstream out(path);
  if (!out)
  {
    throw InputError("cannot write " + path.string());
  }
  return out;
}

struct BuildMapArgs
{
  std::string dataset;
  std::string format = "tum";
  std::string detections;
  std::size_t stride = 30;
  double voxel = 0.05;
  double eps_iou = 0.25;
  double eps_l2 = 0.5;
  std::string out;
};

int BuildMap(const BuildMapArgs& a)
{
  auto frames = LoadFrames(a.dataset, a.format);
  const auto records = ingest::LoadDetections(a.detections);
  instance_map::ClusteringConfig config;
  config.voxel = a.voxel;
  config.eps_iou = a.eps_iou;
  config.eps_l2 = a.eps_l2;
  config.Validate();
  std::vector<std::string> warnings;
  const auto memory = ingest::BuildMemory(frames, records, config, a.stride, {}, &warnings);
  PrintWarnings(warnings);
  instance_map::SaveMemory(a.out, memory);
  std::cerr << "map: " << memory.Size() << " objects from " << ingest::SampleIndices(frames, a.stride).size()
            << " frames -> " << a.out << "\n";
  return kExitOk;
}

struct LocalizeArgs
{
  std::string map;
  std::string dataset;
  std::string format = "auto";
  std::string detections;
  std::size_t stride = 30;
  std::size_t offset = 15;
  std::size_t k_best = 8;
  double voxel = 0.05;
  std::uint64_t seed = 0;
  std::string out;
};

int LocalizeFrames(const LocalizeArgs& a)
{
  const auto memory = instance_map::LoadMemory(a.map);
  auto frames = LoadFrames(a.dataset, a.format);
  const auto records = ingest::LoadDetections(a.detections);
  localizer::RegistrationConfig config;
  config.k_best = a.k_best;
  config.voxel = a.voxel;
  config.seed = a.seed;
  config.Validate();
  const auto prepared = localizer::PrepareMemory(memory, config);
  const auto queries = ingest::SampleIndices(frames, a.stride, a.offset);
  if (queries.empty())
  {
    throw InputError("no query frames at offset " + std::to_string(a.offset));
  }
  std::ofstream out = OpenOutput(a.out);
  std::size_t ok = 0;
  for (const std::size_t idx : queries)
  {
    auto& frame = frames[idx];
    localizer::Prediction p;
    p.frame_id = frame.frame_id;
    p.timestamp = frame.timestamp;
    const ingest::DetectionRecord* record = records.Find(frame.frame_id);
    if (record == nullptr)
    {
      p.status = "no_detections";
      p.message = "no detection record for this frame";
    }
    else
    {
      try
      {
        frame.EnsureLoaded();
        p.estimate = localizer::Localize(frame, *record, prepared, config);
      }
      catch (const localizer::NotEnoughDetections& e)
      {
        p.status = "not_enough_detections";
        p.message = e.what();
      }
      catch (const localizer::LocalizationFailed& e)
      {
        p.status = "failed";
        p.message = e.what();
      }
      catch (const localizer::DegenerateInput& e)
      {
        p.status = "failed";
        p.message = e.what();
      }
      frame.Release();
    }
    ok += p.status == "ok" ? 1 : 0;
    std::cerr << frame.frame_id << ": " << p.status;
    if (p.estimate)
    {
      std::fprintf(stderr, " (overlap %.3f)", p.estimate->overlap);
    }
    std::cerr << "\n";
    out << localizer::PredictionToJson(p, &memory).dump() << "\n";
  }
  std::cerr << "localized " << ok << "/" << queries.size() << " frames -> " << a.out << "\n";
  if (ok != queries.size())
  {
    throw RunFailure(std::to_string(queries.size() - ok) + " frame(s) failed to localize");
  }
  return kExitOk;
}

struct EvaluateArgs
{
  std::vector<std::string> pred;
  std::vector<std::string> gt;
  std::vector<std::string> names;
  double te_max = 0.6;
  double re_max = 0.3;
  std::string report;
  std::string csv;
  std::string table;
};

int Evaluate(const EvaluateArgs& a)
{
  if (a.pred.size() != a.gt.size())
  {
    throw InputError("evaluate: give one --gt per --pred");
  }
  if (!a.names.empty() && a.names.size() != a.pred.size())
  {
    throw InputError("evaluate: give one --name per --pred");
  }
  const eval::EvalThresholds thresholds{a.te_max, a.re_max};
  thresholds.Validate();
  std::vector<std::vector<eval::FrameResult>> runs;
  for (std::size_t i = 0; i < a.pred.size(); ++i)
  {
    std::string name = a.names.empty() ? fs::path(a.gt[i]).parent_path().filename().string() : a.names[i];
    if (name.empty())
    {
      name = "seq" + std::to_string(i);
    }
    const auto truth = ingest::GroundTruth::Load(a.gt[i]);
    runs.push_back(eval::EvaluateRun(eval::ReadPredictions(a.pred[i]), truth, thresholds, name));
  }
  const auto report = eval::BuildReport(runs, thresholds);
  OpenOutput(a.report) << eval::ReportToJson(report).dump(2) << "\n";
  const std::string table = eval::ReportTable(report);
  std::cout << table;
  if (!a.table.empty())
  {
    OpenOutput(a.table) << table;
  }
  if (!a.csv.empty())
  {
    OpenOutput(a.csv) << eval::ReportCsv(report);
  }
  return kExitOk;
}

struct GenSynthArgs
{
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
};

int GenSynth(const GenSynthArgs& a)
{
  std::ifstream in(a.config);
  if (!in)
  {
    throw InputError("cannot read scene config " + a.config);
  }
  nlohmann::json config;
  try
  {
    config = nlohmann::json::parse(in);
  }
  catch (const nlohmann::json::exception& e)
  {
    throw InputError(a.config + ": " + e.what());
  }
  const auto scene = ingest::synth::GenerateScene(config, a.seed);
  const auto data = ingest::synth::RenderScene(scene);
  ingest::synth::WriteDataset(data, scene, a.out);
  std::cerr << "wrote " << data.frames.size() << " frames, " << scene.objects.size() << " objects";
  if (!data.skipped.empty())
  {
    std::cerr << " (" << data.skipped.size() << " poses skipped)";
  }
  std::cerr << " -> " << a.out << "\n";
  return kExitOk;
}

struct FusionCheckArgs
{
  std::uint64_t seed = 1;
  double eps = 1e-5;
  double tolerance = 1e-3;
  bool train_toy = false;
  std::string params_out;
  std::string report;
};

int FusionCheck(const FusionCheckArgs& a)
{
  const auto config = fusion::GradCheckConfig();
  const auto params = fusion::RandomCheckParams(config, a.seed);
  nlohmann::json report = {{"seed", a.seed}, {"eps", a.eps}, {"tolerance", a.tolerance}};
  bool passed = true;
  nlohmann::json cases = nlohmann::json::array();
  for (const auto d : {fusion::DropoutCase::kBoth, fusion::DropoutCase::kRgbOnly, fusion::DropoutCase::kDepthOnly})
  {
    const auto r = fusion::GradCheck(params, fusion::RandomCheckBatch(config, d, a.seed), a.eps);
    nlohmann::json groups = nlohmann::json::object();
    for (const auto& g : r.groups)
    {
      groups[g.group] = {{"max_rel_error", g.max_error}, {"parameters", g.parameters}};
    }
    const bool ok = r.Passed(a.tolerance);
    passed = passed && ok;
    cases.push_back({{"dropout", fusion::DropoutCaseName(d)},
                     {"loss", r.loss},
                     {"max_rel_error", r.max_error},
                     {"worst", r.worst},
                     {"groups", groups},
                     {"passed", ok}});
  }
  report["grad_check"] = cases;
  if (a.train_toy)
  {
    const auto data = fusion::MakeToyDataset(fusion::ToyDatasetConfig{}, a.seed);
    const auto result = fusion::ToyTrain(data, fusion::ToyTrainConfig{}, a.seed);
    auto metrics = [](const fusion::RetrievalMetrics& m) { return nlohmann::json{{"rank1", m.rank1}, {"map", m.map}}; };
    const bool ok = result.both.rank1 == 1.0 && result.both.map >= 0.99 && result.rgb_only.rank1 >= 0.875 &&
                    result.depth_only.rank1 >= 0.875;
    passed = passed && ok;
    report["toy"] = {{"initial_loss", result.initial_loss}, {"final_loss", result.final_loss},
                     {"steps", result.step_losses.size()},  {"both", metrics(result.both)},
                     {"rgb_only", metrics(result.rgb_only)}, {"depth_only", metrics(result.depth_only)},
                     {"passed", ok}};
    if (!a.params_out.empty())
    {
      const fs::path base(a.params_out);
      fusion::SaveParams(result.params, fs::path(base.string() + ".bin"), fs::path(base.string() + ".json"));
    }
  }
  report["passed"] = passed;
  std::cout << report.dump(2) << "\n";
  if (!a.report.empty())
  {
    OpenOutput(a.report) << report.dump(2) << "\n";
  }
  if (!passed)
  {
    throw RunFailure("fusion check did not pass");
  }
  return kExitOk;
}

template <typename F>
int Guarded(F&& fn)
{
  try
  {
    return fn();
  }
  catch (const RunFailure& e)
  {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  catch (const localizer::LocalizationFailed& e)
  {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  catch (const NumericalError& e)
  {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  catch (const std::exception& e)
  {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
}
}  // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Object-based RGB-D relocalization against an instance memory"};
  app.require_subcommand(1);

  BuildMapArgs build;
  auto* cmd_build = app.add_subcommand("build-map", "Build an object memory from posed frames");
  cmd_build->add_option("--dataset", build.dataset, "Dataset directory")->required();
  cmd_build->add_option("--format", build.format, "Dataset layout")->check(CLI::IsMember({"tum", "synth"}));
  cmd_build->add_option("--detections", build.detections, "Detection records (jsonl)")->required();
  cmd_build->add_option("--stride", build.stride, "Use every n-th frame")->check(CLI::PositiveNumber);
  cmd_build->add_option("--voxel", build.voxel, "Voxel size (m)");
  cmd_build->add_option("--eps-iou", build.eps_iou, "3D IoU distance threshold");
  cmd_build->add_option("--eps-l2", build.eps_l2, "Embedding distance threshold");
  cmd_build->add_option("--out", build.out, "Output map file")->required();

  LocalizeArgs loc;
  auto* cmd_loc = app.add_subcommand("localize", "Localize query frames against a map");
  cmd_loc->add_option("--map", loc.map, "Map file")->required();
  cmd_loc->add_option("--dataset", loc.dataset, "Dataset directory")->required();
  cmd_loc->add_option("--format", loc.format, "Dataset layout")->check(CLI::IsMember({"auto", "tum", "synth"}));
  cmd_loc->add_option("--detections", loc.detections, "Detection records (jsonl)")->required();
  cmd_loc->add_option("--stride", loc.stride, "Query every n-th frame")->check(CLI::PositiveNumber);
  cmd_loc->add_option("--offset", loc.offset, "Index of the first query frame");
  cmd_loc->add_option("--k-best", loc.k_best, "Assignment candidates to register")->check(CLI::PositiveNumber);
  cmd_loc->add_option("--voxel", loc.voxel, "Voxel size (m)");
  cmd_loc->add_option("--seed", loc.seed, "RANSAC seed");
  cmd_loc->add_option("--out", loc.out, "Output predictions (jsonl)")->required();

  EvaluateArgs ev;
  auto* cmd_eval = app.add_subcommand("evaluate", "Score predictions against ground truth");
  cmd_eval->add_option("--pred", ev.pred, "Predictions (jsonl); repeat per sequence")->required();
  cmd_eval->add_option("--gt", ev.gt, "Ground truth (TUM); repeat per sequence")->required();
  cmd_eval->add_option("--name", ev.names, "Sequence names");
  cmd_eval->add_option("--te-max", ev.te_max, "Translation threshold (m)");
  cmd_eval->add_option("--re-max", ev.re_max, "Rotation threshold (rad)");
  cmd_eval->add_option("--report", ev.report, "JSON report")->required();
  cmd_eval->add_option("--csv", ev.csv, "Per-frame CSV");
  cmd_eval->add_option("--table", ev.table, "Text table");

  GenSynthArgs gen;
  auto* cmd_gen = app.add_subcommand("gen-synth", "Render a synthetic dataset");
  cmd_gen->add_option("--config", gen.config, "Scene description (json)")->required();
  cmd_gen->add_option("--seed", gen.seed, "Random seed")->required();
  cmd_gen->add_option("--out", gen.out, "Output directory")->required();

  FusionCheckArgs fc;
  auto* cmd_fc = app.add_subcommand("fusion-check", "Gradient check and toy training of the fusion model");
  cmd_fc->add_option("--seed", fc.seed, "Random seed")->required();
  cmd_fc->add_option("--eps", fc.eps, "Finite-difference step");
  cmd_fc->add_option("--tolerance", fc.tolerance, "Maximum relative error");
  cmd_fc->add_flag("--train-toy", fc.train_toy, "Also train on the toy identity set");
  cmd_fc->add_option("--save-params", fc.params_out, "Write trained parameters to <prefix>.bin/.json");
  cmd_fc->add_option("--report", fc.report, "Also write the report here");

  try
  {
    app.parse(argc, argv);
  }
  catch (const CLI::ParseError& e)
  {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  if (cmd_build->parsed())
  {
    return Guarded([&] { return BuildMap(build); });
  }
  if (cmd_loc->parsed())
  {
    return Guarded([&] { return LocalizeFrames(loc); });
  }
  if (cmd_eval->parsed())
  {
    return Guarded([&] { return Evaluate(ev); });
  }
  if (cmd_gen->parsed())
  {
    return Guarded([&] { return GenSynth(gen); });
  }
  return Guarded([&] { return FusionCheck(fc); });
}
