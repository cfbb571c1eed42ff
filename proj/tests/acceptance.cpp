// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Tolerances are fixed below.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "eval_fixture.hpp"
#include "instloc/eval.hpp"
#include "instloc/fusion.hpp"
#include "instloc/ingest.hpp"
#include "instloc/instance_map.hpp"
#include "instloc/localizer.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace instloc;

namespace
{
constexpr double kTeMax = 0.6;
constexpr double kReMax = 0.3;

struct Outcome
{
  bool pass = false;
  std::string detail;
};

std::string Format(const char* fmt, auto... args)
{
  char buf[512];
  std::snprintf(buf, sizeof(buf), fmt, args...);
  return buf;
}

double Seconds(std::chrono::steady_clock::time_point since)
{
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

nlohmann::json SceneConfig()
{
  std::ifstream in(std::string(INSTLOC_SOURCE_DIR) + "/configs/synth_scene.json");
  return nlohmann::json::parse(in);
}

// Held-out queries sit halfway between memory frames.
std::vector<std::size_t> QueryIndices(std::size_t frames) { return ingest::SampleIndices(std::vector<int>(frames), 60, 15); }

std::vector<eval::FrameResult> LocalizeQueries(ingest::synth::SynthDataset& data, const instance_map::ObjectMemory& memory,
                                               const localizer::RegistrationConfig& config)
{
  const auto prepared = localizer::PrepareMemory(memory, config);
  std::vector<eval::FrameResult> out;
  for (const std::size_t q : QueryIndices(data.frames.size()))
  {
    auto& frame = data.frames[q];
    eval::FrameResult r;
    r.frame_id = frame.frame_id;
    r.timestamp = frame.timestamp;
    try
    {
      const auto est = localizer::Localize(frame, data.detections.records[q], prepared, config);
      r.status = "ok";
      r.errors = eval::ComputePoseErrors(est.pose, *frame.pose);
      r.success = eval::EvalThresholds{kTeMax, kReMax}.Success(*r.errors);
    }
    catch (const std::exception&)
    {
      r.status = "failed";
    }
    out.push_back(r);
  }
  return out;
}

Outcome EndToEnd()
{
  const auto start = std::chrono::steady_clock::now();
  const auto scene = ingest::synth::GenerateScene(SceneConfig(), 7);
  auto data = ingest::synth::RenderScene(scene);
  const auto memory = ingest::BuildMemory(data.frames, data.detections, {}, 30);
  const auto frames = LocalizeQueries(data, memory, {});
  const double elapsed = Seconds(start);
  const auto s = eval::Summarize(frames);
  Outcome o;
  o.pass = scene.objects.size() == 10 && s.frames == 10 && s.successes == 10 && s.median_te < 0.05 &&
           s.median_re < 0.05 && elapsed < 120.0;
  o.detail = Format("%zu primitives, %zu memory objects, %zu/%zu localized within (0.6 m, 0.3 rad), median TE %.2e m, "
                    "median RE %.2e rad, %.1f s",
                    scene.objects.size(), memory.Size(), s.successes, s.frames, s.median_te, s.median_re, elapsed);
  return o;
}

// Replaces the embedding of 30% of each query's object detections with the
// mean embedding of a randomly chosen wrong memory object.
void CorruptQueries(ingest::synth::SynthDataset& data, const instance_map::ObjectMemory& memory, std::uint64_t seed,
                      std::size_t* corrupted, std::size_t* total)
{
  std::mt19937_64 rng(seed * 1000);
  std::vector<Eigen::VectorXd> means;
  for (const auto& o : memory.objects)
  {
    means.push_back(o.MeanEmbedding());
  }
  auto nearest = [&](const Eigen::VectorXd& e) {
    std::size_t best = 0;
    for (std::size_t m = 1; m < means.size(); ++m)
    {
      best = (means[m] - e).norm() < (means[best] - e).norm() ? m : best;
    }
    return best;
  };
  for (const std::size_t q : QueryIndices(data.frames.size()))
  {
    auto& record = data.detections.records[q];
    std::vector<std::size_t> objects;
    for (std::size_t i = 0; i < record.detections.size(); ++i)
    {
      if (record.detections[i].caption != "floor")
      {
        objects.push_back(i);
      }
    }
    std::shuffle(objects.begin(), objects.end(), rng);
    const auto count = static_cast<std::size_t>(std::lround(0.3 * static_cast<double>(objects.size())));
    for (std::size_t c = 0; c < count; ++c)
    {
      auto& det = record.detections[objects[c]];
      const std::size_t truth = nearest(det.embedding);
      std::size_t pick = rng() % (means.size() - 1);
      pick += pick >= truth ? 1 : 0;
      det.embedding = means[pick];
      *corrupted += nearest(det.embedding) != truth ? 1 : 0;
    }
    *total += objects.size();
  }
}

Outcome Ablation()
{
  std::size_t ok1 = 0;
  std::size_t ok8 = 0;
  std::size_t corrupted = 0;
  std::size_t total = 0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed)
  {
    const auto scene = ingest::synth::GenerateScene(SceneConfig(), seed);
    auto data = ingest::synth::RenderScene(scene);
    const auto memory = ingest::BuildMemory(data.frames, data.detections, {}, 30);
    CorruptQueries(data, memory, seed, &corrupted, &total);
    localizer::RegistrationConfig one;
    one.k_best = 1;
    localizer::RegistrationConfig eight;
    eight.k_best = 8;
    const auto s1 = eval::Summarize(LocalizeQueries(data, memory, one));
    const auto s8 = eval::Summarize(LocalizeQueries(data, memory, eight));
    ok1 += s1.successes;
    ok8 += s8.successes;
    per_seed += Format("%s%zu/%zu", seed == 1 ? "" : " ", s1.successes, s8.successes);
  }
  Outcome o;
  o.pass = ok8 > ok1;
  o.detail = Format("success k_best=1 %zu/50 vs k_best=8 %zu/50 (per seed k1/k8: %s); %zu/%zu detections misassigned",
                    ok1, ok8, per_seed.c_str(), corrupted, total);
  return o;
}

Outcome ClusteringOracle()
{
  std::mt19937_64 rng(2024);
  int agree = 0;
  for (int trial = 0; trial < 50; ++trial)
  {
    const std::size_t n = 2 + static_cast<std::size_t>(trial % 11);
    const auto memory = test::RandomMemory(rng, n);
    instance_map::ClusteringConfig config;
    config.eps_iou = 0.25;
    config.eps_l2 = 0.5;
    config.voxel = 0.2;
    instance_map::ClusteringTrace trace;
    instance_map::ClusterMemory(memory, config, &trace);
    const std::vector<int> labels(trace.final.begin(), trace.final.end());
    agree += test::FromLabels(labels) == test::ReferenceClusterMemory(memory.objects, config) ? 1 : 0;
  }
  return {agree == 50, Format("%d/50 random memories (2..12 tuples) partitioned as the brute-force reference", agree)};
}

Outcome AssignmentOracle()
{
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> det_count(3, 6);
  std::uniform_int_distribution<int> mem_count(3, 8);
  std::uniform_real_distribution<double> uni(0.0, 2.0);
  int agree = 0;
  for (int trial = 0; trial < 100; ++trial)
  {
    Eigen::MatrixXd d(det_count(rng), mem_count(rng));
    for (Eigen::Index i = 0; i < d.size(); ++i)
    {
      d(i) = uni(rng);
    }
    localizer::RegistrationConfig config;
    const auto got = localizer::EnumerateAssignments(d, config);
    const auto want = test::ExhaustiveAssignments(d, test::ReferenceCandidates(d, config.top_m_per_detection),
                                                  config.k_best, config.score_floor);
    bool same = got.size() == want.size();
    for (std::size_t i = 0; same && i < got.size(); ++i)
    {
      same = got[i].pairs == want[i].pairs && got[i].score == want[i].score;
    }
    agree += same ? 1 : 0;
  }
  return {agree == 100, Format("%d/100 random matrices (<=6 x <=8) give the exhaustive k-best list", agree)};
}

Outcome Registration()
{
  const nlohmann::json cfg = {{"object_count", 6},
                              {"area", {-1.2, 1.2, -1.2, 1.2}},
                              {"trajectory", {{"frames", 16}, {"radius", 3.2}, {"height", 1.5}, {"wobble", 0.1}}}};
  const auto scene = ingest::synth::GenerateScene(cfg, 4);
  auto data = ingest::synth::RenderScene(scene);
  const auto memory = ingest::BuildMemory(data.frames, data.detections, {}, 2);
  geometry::PointCloud raw;
  for (const auto& o : memory.objects)
  {
    raw.Append(o.cloud);
  }
  const localizer::RegistrationConfig config;
  const auto source = localizer::PrepareObject(raw, config);
  std::mt19937_64 rng(3);
  int ok = 0;
  double worst_te = 0.0;
  double worst_re = 0.0;
  for (int t = 0; t < 20; ++t)
  {
    const auto g = test::RandomPose(rng, std::numbers::pi, 2.0);
    // The target is resampled, so no point pairs coincide exactly.
    const auto target = localizer::PrepareObject(geometry::Transformed(raw, g), config);
    const auto ransac = localizer::RansacFeatureAlign(source.cloud, target.cloud, source.fpfh, target.fpfh, config,
                                                      static_cast<std::uint64_t>(t));
    const auto icp = localizer::ColoredIcp(source.cloud, target.cloud, ransac.pose, config);
    const auto e = eval::ComputePoseErrors(icp.pose, g);
    ok += e.te < 1e-2 && e.re < 1e-2 ? 1 : 0;
    worst_te = std::max(worst_te, e.te);
    worst_re = std::max(worst_re, e.re);
  }
  return {ok >= 19, Format("%d/20 random rigid transforms recovered within 1e-2 m / 1e-2 rad (worst %.1e m, %.1e rad)",
                           ok, worst_te, worst_re)};
}

Outcome GradientCheck()
{
  const auto config = fusion::GradCheckConfig();
  const auto params = fusion::RandomCheckParams(config, 1);
  bool pass = true;
  std::string detail = Format("H=W=%d, E=%d, eps 1e-5, max rel error:", config.Grid(), config.embed);
  for (const auto d : {fusion::DropoutCase::kBoth, fusion::DropoutCase::kRgbOnly, fusion::DropoutCase::kDepthOnly})
  {
    const auto r = fusion::GradCheck(params, fusion::RandomCheckBatch(config, d, 1), 1e-5);
    pass = pass && r.Passed(1e-3);
    detail += Format(" %s %.1e", fusion::DropoutCaseName(d), r.max_error);
  }
  return {pass, detail + " (limit 1e-3)"};
}

Outcome ToyReid()
{
  const auto data = fusion::MakeToyDataset(fusion::ToyDatasetConfig{}, 1);
  const fusion::ToyTrainConfig train;
  const auto r = fusion::ToyTrain(data, train, 1);
  const bool pass = r.both.rank1 == 1.0 && r.both.map >= 0.99 && r.rgb_only.rank1 >= 0.875 &&
                    r.depth_only.rank1 >= 0.875 && static_cast<int>(r.step_losses.size()) <= 200;
  return {pass, Format("%zu steps: rank-1 %.3f mAP %.3f; rgb-only rank-1 %.3f; depth-only rank-1 %.3f",
                       r.step_losses.size(), r.both.rank1, r.both.map, r.rgb_only.rank1, r.depth_only.rank1)};
}

Outcome MetricFidelity()
{
  const eval::EvalThresholds thresholds{kTeMax, kReMax};
  const bool examples = thresholds.Success({0.29, 0.028}) && !thresholds.Success({1.60, 1.121});
  test::TempDir dir("acceptance");
  test::WriteMetricFixture(dir.path());
  const auto truth = ingest::GroundTruth::Load(dir.path() / "groundtruth.txt");
  const auto s =
      eval::Summarize(eval::EvaluateRun(eval::ReadPredictions(dir.path() / "preds.jsonl"), truth, thresholds));
  constexpr double kExact = 1e-9;
  const bool fixture = s.frames == 7 && s.successes == test::kFixtureSuccesses &&
                       std::abs(s.mean_te - test::kFixtureMeanTe) < kExact &&
                       std::abs(s.mean_re - test::kFixtureMeanRe) < kExact &&
                       std::abs(s.median_te - test::kFixtureMedianTe) < kExact &&
                       std::abs(s.median_re - test::kFixtureMedianRe) < kExact &&
                       std::abs(s.success_rate - test::kFixtureSuccessRate) < kExact;
  return {examples && fixture,
          Format("(0.29, 0.028) %s, (1.60, 1.121) %s; fixture mean %.4f/%.4f median %.4f/%.4f success %.4f%% "
                 "(expected %.4f/%.4f, %.4f/%.4f, %.4f%%)",
                 thresholds.Success({0.29, 0.028}) ? "success" : "failure",
                 thresholds.Success({1.60, 1.121}) ? "success" : "failure", s.mean_te, s.mean_re, s.median_te,
                 s.median_re, s.success_rate, test::kFixtureMeanTe, test::kFixtureMeanRe, test::kFixtureMedianTe,
                 test::kFixtureMedianRe, test::kFixtureSuccessRate)};
}
}  // namespace

int main()
{
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"synthetic end-to-end", EndToEnd},
      {"embedding corruption ablation", Ablation},
      {"clustering oracle", ClusteringOracle},
      {"assignment oracle", AssignmentOracle},
      {"registration", Registration},
      {"fusion gradient check", GradientCheck},
      {"toy re-identification", ToyReid},
      {"metric fidelity", MetricFidelity},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i)
  {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try
    {
      o = criteria[i].second();
    }
    catch (const std::exception& e)
    {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::printf("%s [%zu] %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.detail.c_str(), Seconds(start));
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
  return failed == 0 ? 0 : 1;
}
