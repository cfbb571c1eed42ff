#include <fstream>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "instloc/ingest.hpp"
#include "test_util.hpp"

namespace instloc::ingest
{
namespace
{
namespace fs = std::filesystem;

void WriteText(const fs::path& path, const std::string& text) { std::ofstream(path) << text; }

std::string ReadBytes(const fs::path& path)
{
  std::ifstream is(path, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

geometry::CameraIntrinsics TinyIntrinsics(int w, int h)
{
  return {10.0, 10.0, w / 2.0, h / 2.0, w, h, 1000.0, 10.0};
}

/// Frame with constant depth; each detection covers a column band.
PosedFrame BandFrame(const std::string& id, int bands, std::optional<geometry::Pose> pose)
{
  PosedFrame f;
  f.frame_id = id;
  f.intrinsics = TinyIntrinsics(4 * bands, 4);
  f.rgb = geometry::RgbImage(4 * bands, 4);
  f.depth = geometry::DepthImage(4 * bands, 4, 1500);
  f.pose = pose;
  return f;
}

DetectionRecord BandRecord(const std::string& id, int bands, std::vector<std::string> captions)
{
  DetectionRecord r;
  r.frame_id = id;
  for (int b = 0; b < bands; ++b)
  {
    geometry::Mask m(4 * bands, 4, 0);
    for (int v = 0; v < 4; ++v)
    {
      for (int u = 4 * b; u < 4 * b + 4; ++u)
      {
        m.At(u, v) = 1;
      }
    }
    Detection d;
    d.caption = captions[static_cast<std::size_t>(b)];
    d.box = {4.0 * b, 0.0, 4.0 * b + 4.0, 4.0};
    d.mask_rle = EncodeMask(m);
    d.embedding = Eigen::VectorXd::Unit(3, b % 3);
    r.detections.push_back(d);
  }
  return r;
}

synth::Scene SphereScene(const std::vector<std::vector<double>>& translations)
{
  // Wide field of view so the whole sphere stays inside the image.
  nlohmann::json cfg = {{"floor", false},
                        {"embedding_dim", 4},
                        {"intrinsics", IntrinsicsToJson({40.0, 40.0, 80.0, 60.0, 160, 120, 5000.0, 10.0})},
                        {"objects", {{{"shape", "sphere"}, {"center", {0.0, 0.0, 2.0}}, {"radius", 1.0}}}}};
  cfg["poses"] = nlohmann::json::array();
  for (const auto& t : translations)
  {
    cfg["poses"].push_back({{"translation", t}, {"quaternion", {1.0, 0.0, 0.0, 0.0}}});
  }
  return synth::GenerateScene(cfg, 1);
}

nlohmann::json SmallOrbit(int frames, int objects)
{
  return {{"object_count", objects},
          {"embedding_dim", 8},
          {"trajectory", {{"frames", frames}, {"radius", 3.0}, {"height", 1.4}, {"wobble", 0.1}}}};
}
}  // namespace

TEST(TumTest, AssociationWindow)
{
  test::TempDir dir("tum");
  WriteText(dir.path() / "rgb.txt", "# rgb\n1.000 rgb/a.png\n2.000 rgb/b.png\n");
  WriteText(dir.path() / "depth.txt", "1.010 depth/a.png\n2.050 depth/b.png\n");
  WriteText(dir.path() / "groundtruth.txt",
            "0.995 1 2 3 0 0 0 1\n1.995 0 0 0 0 0 0 1\n");
  const auto frames = ParseTumSequence(dir.path(), 0.02, TinyIntrinsics(4, 4));
  ASSERT_EQ(frames.size(), 1U);
  EXPECT_EQ(frames[0].frame_id, "a");
  EXPECT_EQ(frames[0].depth_path, dir.path() / "depth/a.png");
  ASSERT_TRUE(frames[0].pose);
  EXPECT_TRUE(frames[0].pose->Rotation().isIdentity(1e-12));
  EXPECT_TRUE(frames[0].pose->Translation().isApprox(Eigen::Vector3d(1, 2, 3)));

  const auto again = ParseTumSequence(dir.path(), 0.02, TinyIntrinsics(4, 4));
  ASSERT_EQ(again.size(), frames.size());
  EXPECT_EQ(again[0].depth_path, frames[0].depth_path);
}

TEST(TumTest, Errors)
{
  test::TempDir dir("tum_err");
  EXPECT_THROW(ParseTumSequence(dir.path(), 0.02, TinyIntrinsics(4, 4)), InputError);
  WriteText(dir.path() / "rgb.txt", "1.0 rgb/a.png\n");
  WriteText(dir.path() / "depth.txt", "5.0 depth/a.png\n");
  WriteText(dir.path() / "groundtruth.txt", "1.0 0 0 0 0 0 0 1\n");
  EXPECT_THROW(ParseTumSequence(dir.path(), 0.02, TinyIntrinsics(4, 4)), InputError);
}

TEST(TumTest, NearestTieBreaksToLowerTimestamp)
{
  const std::vector<TimedEntry> entries = {{0.9, {}}, {1.1, {}}, {2.0, {}}};
  EXPECT_EQ(NearestWithin(entries, 1.0, 0.2), 0U);
  EXPECT_EQ(NearestWithin(entries, 1.08, 0.2), 1U);
  EXPECT_EQ(NearestWithin(entries, 5.0, 0.2), std::string::npos);
  EXPECT_EQ(NearestWithin({}, 1.0, 0.2), std::string::npos);
}

TEST(TumTest, PoseLineRoundTrip)
{
  std::mt19937_64 rng(3);
  const auto pose = test::RandomPose(rng, 3.0, 2.0);
  std::istringstream ss(TumPoseLine(12.5, pose));
  double ts = 0.0;
  ss >> ts;
  std::vector<std::string> fields;
  std::string f;
  while (ss >> f)
  {
    fields.push_back(f);
  }
  const auto back = PoseFromTumFields(fields);
  EXPECT_DOUBLE_EQ(ts, 12.5);
  EXPECT_LT((back.Translation() - pose.Translation()).norm(), 1e-8);
  EXPECT_LT(geometry::RotationAngleBetween(back.Rotation(), pose.Rotation()), 1e-7);
}

TEST(CaptionTest, AdjectivesAndSceneTermsDropped)
{
  const auto stop = CaptionStoplist::Default();
  EXPECT_EQ(FilterCaptions({"wooden", "chair"}, stop), std::vector<std::string>{"chair"});
  EXPECT_EQ(FilterCaptions({"living room", "table"}, stop), std::vector<std::string>{"table"});
  EXPECT_TRUE(FilterCaptions({}, stop).empty());
  EXPECT_TRUE(stop.Contains("  Living   ROOM "));
  EXPECT_TRUE(stop.Contains("dark"));
  EXPECT_TRUE(stop.Contains("industrial"));
  EXPECT_TRUE(stop.Contains("workspace"));
  EXPECT_FALSE(stop.Contains("chair"));
}

TEST(CaptionTest, DuplicatesCollapsedInOrder)
{
  const auto stop = CaptionStoplist::Default();
  EXPECT_EQ(FilterCaptions({"mug", "Chair", "wooden", "chair", "mug", "lamp"}, stop),
            (std::vector<std::string>{"mug", "Chair", "lamp"}));
}

TEST(CaptionTest, ShippedConfigMatchesDefault)
{
  const auto file = CaptionStoplist::Load(fs::path(INSTLOC_SOURCE_DIR) / "configs" / "stoplist.txt");
  const auto def = CaptionStoplist::Default();
  EXPECT_EQ(file.adjectives, def.adjectives);
  EXPECT_EQ(file.scene_terms, def.scene_terms);
  EXPECT_EQ(file.exact_terms, def.exact_terms);
  EXPECT_GT(def.Size(), 0U);
}

TEST(CaptionTest, ParseCategories)
{
  std::istringstream is("sofa  # a plain term\n# [adjectives]\nShiny\n\n# [scene]\ngarage\n");
  const auto list = CaptionStoplist::Parse(is);
  EXPECT_EQ(list.exact_terms, std::set<std::string>{"sofa"});
  EXPECT_EQ(list.adjectives, std::set<std::string>{"shiny"});
  EXPECT_EQ(list.scene_terms, std::set<std::string>{"garage"});
}

TEST(DedupTest, Examples)
{
  const Box a{0, 0, 10, 10};
  const Box b{1, 1, 11, 11};
  EXPECT_DOUBLE_EQ(BoxIou(a, b), 81.0 / 119.0);
  EXPECT_DOUBLE_EQ(BoxIou(a, a), 1.0);
  EXPECT_DOUBLE_EQ(BoxIou(a, {20, 20, 30, 30}), 0.0);

  auto det = [](Box box, double score, std::string caption) {
    Detection d;
    d.box = box;
    d.score = score;
    d.caption = std::move(caption);
    return d;
  };
  EXPECT_EQ(DedupBoxes({det(a, 0.5, "x"), det(a, 0.9, "y")}, 0.9), std::vector<std::size_t>{1});
  EXPECT_EQ(DedupBoxes({det(a, 0.5, "x"), det(a, 0.5, "x")}, 0.9), std::vector<std::size_t>{0});
  EXPECT_EQ(DedupBoxes({det(a, 1, "x"), det(b, 1, "x")}, 0.9), (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(DedupBoxes({det(a, 1, "x"), det(b, 1, "x")}, 0.5), std::vector<std::size_t>{0});
  EXPECT_EQ(DedupBoxes({det(a, 1, "x"), det({20, 20, 30, 30}, 1, "x")}, 0.0), (std::vector<std::size_t>{0, 1}));
}

TEST(MaskRleTest, RoundTripProperty)
{
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> dim(1, 17);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int trial = 0; trial < 300; ++trial)
  {
    const int w = dim(rng);
    const int h = dim(rng);
    const double density = uni(rng);
    geometry::Mask m(w, h, 0);
    for (auto& px : m.data)
    {
      px = uni(rng) < density ? 1 : 0;
    }
    const auto runs = EncodeMask(m);
    EXPECT_EQ(DecodeMask(runs, w, h).data, m.data);
  }
}

TEST(MaskRleTest, StartsWithZeroRun)
{
  EXPECT_EQ(EncodeMask(geometry::Mask(3, 2, 1)), (MaskRle{0, 6}));
  EXPECT_EQ(EncodeMask(geometry::Mask(3, 2, 0)), (MaskRle{6}));
  geometry::Mask m(4, 1, 0);
  m.At(1, 0) = 1;
  m.At(2, 0) = 1;
  EXPECT_EQ(EncodeMask(m), (MaskRle{1, 2, 1}));
  EXPECT_THROW(DecodeMask({1, 2}, 4, 1), InputError);
  EXPECT_THROW(DecodeMask({3, 2}, 4, 1), InputError);
}

TEST(DetectionFileTest, RoundTrip)
{
  DetectionFile file;
  file.embedding_dim = 3;
  file.producer = "test";
  file.records.push_back(BandRecord("000001", 2, {"mug", "chair"}));
  file.records[0].detections[1].score = 0.25;
  std::stringstream ss;
  WriteDetections(ss, file);
  const auto back = ReadDetections(ss);
  EXPECT_EQ(back.embedding_dim, 3);
  EXPECT_EQ(back.producer, "test");
  ASSERT_EQ(back.records.size(), 1U);
  const auto& d = back.records[0].detections;
  ASSERT_EQ(d.size(), 2U);
  EXPECT_EQ(d[1].caption, "chair");
  EXPECT_DOUBLE_EQ(d[1].score, 0.25);
  EXPECT_EQ(d[1].mask_rle, file.records[0].detections[1].mask_rle);
  EXPECT_TRUE(d[1].embedding.isApprox(file.records[0].detections[1].embedding));
  EXPECT_DOUBLE_EQ(d[1].box.x0, 4.0);
}

TEST(DetectionFileTest, ExternalProducerLine)
{
  // Records as an external exporter writes them: numeric frame ids and
  // decimal embeddings.
  std::istringstream is(
      R"({"format":"instloc-detections","version":1,"embedding_dim":2,"producer":"bridge-stub 0.1"})"
      "\n"
      R"({"frame_id":"1305031102.175304","detections":[{"caption":"chair","box":[0,0,2,1],"mask_rle":[0,2,2],"embedding":[0.25,-1.5],"score":0.8}]})"
      "\n\n"
      R"({"frame_id":7,"detections":[]})"
      "\n");
  const auto file = ReadDetections(is);
  ASSERT_EQ(file.records.size(), 2U);
  EXPECT_EQ(file.records[0].frame_id, "1305031102.175304");
  EXPECT_EQ(file.records[1].frame_id, "7");
  EXPECT_NO_THROW(file.records[0].ValidateAgainst(2, 2));
  EXPECT_THROW(file.records[0].ValidateAgainst(3, 2), InputError);
  EXPECT_DOUBLE_EQ(file.records[0].detections[0].embedding[1], -1.5);
}

TEST(DetectionFileTest, Rejections)
{
  auto parse = [](const std::string& text) {
    std::istringstream is(text);
    return ReadDetections(is);
  };
  const std::string header = R"({"embedding_dim":2})"
                             "\n";
  EXPECT_THROW(parse(""), InputError);
  EXPECT_THROW(parse(R"({"frame_id":"a","detections":[]})"), InputError);
  EXPECT_THROW(parse(header + R"({"frame_id":"a","detections":[{"caption":"c","box":[0,0,1,1],)"
                                R"("mask_rle":[0,1],"embedding":[1,2,3]}]})"),
               InputError);
  EXPECT_THROW(parse(header + R"({"frame_id":"a","detections":[{"caption":"c","box":[0,0,1,1],)"
                                R"("mask_rle":[0,1],"embedding":[1,2],"score":1.5}]})"),
               InputError);
  EXPECT_THROW(parse(header + "{not json"), InputError);
  EXPECT_THROW(parse(header + R"({"frame_id":"a"})"), InputError);

  DetectionRecord bad = BandRecord("x", 1, {"mug"});
  bad.detections[0].box = {0, 0, 5, 4};
  EXPECT_THROW(bad.ValidateAgainst(4, 4), InputError);
}

TEST(PngTest, RoundTrip)
{
  test::TempDir dir("png");
  geometry::RgbImage rgb(5, 3);
  geometry::DepthImage depth(5, 3);
  for (std::size_t i = 0; i < rgb.data.size(); ++i)
  {
    rgb.data[i] = static_cast<std::uint8_t>(i * 17);
  }
  const std::uint16_t samples[] = {0, 1, 255, 256, 12345, 65535};
  for (std::size_t i = 0; i < depth.data.size(); ++i)
  {
    depth.data[i] = samples[i % 6];
  }
  WriteRgbPng(dir.path() / "c.png", rgb);
  WriteDepthPng(dir.path() / "d.png", depth);
  const auto rgb2 = ReadRgbPng(dir.path() / "c.png");
  const auto depth2 = ReadDepthPng(dir.path() / "d.png");
  EXPECT_EQ(rgb2.width, 5);
  EXPECT_EQ(rgb2.height, 3);
  EXPECT_EQ(rgb2.data, rgb.data);
  EXPECT_EQ(depth2.data, depth.data);
  EXPECT_THROW(ReadDepthPng(dir.path() / "c.png"), InputError);
  EXPECT_THROW(ReadRgbPng(dir.path() / "missing.png"), InputError);
  WriteText(dir.path() / "junk.png", "not a png at all");
  EXPECT_THROW(ReadRgbPng(dir.path() / "junk.png"), InputError);
}

TEST(MemoryBuilderTest, CountsBeforeClustering)
{
  std::vector<PosedFrame> frames;
  DetectionFile records;
  records.embedding_dim = 3;
  for (int i = 0; i < 3; ++i)
  {
    const std::string id = std::to_string(i);
    frames.push_back(BandFrame(id, 2, geometry::Pose::Identity()));
    records.records.push_back(BandRecord(id, 2, {"mug", "chair"}));
  }
  ExtractionOptions options;
  options.voxel = 0.01;
  const auto raw = CollectTuples(frames, records, 1, options);
  EXPECT_EQ(raw.Size(), 6U);
  for (std::size_t i = 0; i < raw.Size(); ++i)
  {
    EXPECT_EQ(raw.objects[i].id, i);
    EXPECT_EQ(raw.objects[i].embeddings.size(), 1U);
    EXPECT_TRUE(raw.objects[i].cloud.HasNormals());
  }

  // Stoplisted captions never become tuples; an empty record adds nothing.
  records.records[1] = BandRecord("1", 2, {"wooden", "chair"});
  records.records[2].detections.clear();
  EXPECT_EQ(CollectTuples(frames, records, 1, options).Size(), 3U);
}

TEST(MemoryBuilderTest, StrideSampling)
{
  EXPECT_EQ(SampleIndices(std::vector<int>(90), 30), (std::vector<std::size_t>{0, 30, 60}));
  EXPECT_EQ(SampleIndices(std::vector<int>(90), 30, 15), (std::vector<std::size_t>{15, 45, 75}));
  EXPECT_THROW(SampleIndices(std::vector<int>(3), 0), InputError);

  std::vector<PosedFrame> frames;
  DetectionFile records;
  records.embedding_dim = 3;
  for (int i = 0; i < 90; ++i)
  {
    const std::string id = std::to_string(i);
    frames.push_back(BandFrame(id, 1, geometry::Pose::Identity()));
    records.records.push_back(BandRecord(id, 1, {"mug"}));
  }
  EXPECT_EQ(CollectTuples(frames, records, 30, {}).Size(), 3U);
}

TEST(MemoryBuilderTest, MissingPoseOrRecord)
{
  std::vector<PosedFrame> frames = {BandFrame("a", 1, geometry::Pose::Identity()), BandFrame("b", 1, std::nullopt)};
  DetectionFile records;
  records.embedding_dim = 3;
  records.records.push_back(BandRecord("a", 1, {"mug"}));
  EXPECT_THROW(CollectTuples(frames, records, 1, {}), InputError);

  frames[1].pose = geometry::Pose::Identity();
  std::vector<std::string> warnings;
  EXPECT_EQ(CollectTuples(frames, records, 1, {}, &warnings).Size(), 1U);
  ASSERT_EQ(warnings.size(), 1U);
  EXPECT_NE(warnings[0].find("b"), std::string::npos);
}

TEST(SynthTest, UnitSphereOnAxis)
{
  const auto scene = SphereScene({{0.0, 0.0, 0.0}});
  const auto frame = synth::RenderFrame(scene, 0);
  ASSERT_TRUE(frame);
  const auto& k = scene.intrinsics;
  ASSERT_EQ(frame->record.detections.size(), 1U);
  const auto mask = DecodeMask(frame->record.detections[0].mask_rle, k.width, k.height);
  double su = 0.0;
  double sv = 0.0;
  double n = 0.0;
  std::uint16_t nearest = std::numeric_limits<std::uint16_t>::max();
  for (int v = 0; v < k.height; ++v)
  {
    for (int u = 0; u < k.width; ++u)
    {
      if (mask.At(u, v) != 0)
      {
        su += u;
        sv += v;
        n += 1.0;
        nearest = std::min(nearest, frame->frame.depth.At(u, v));
      }
    }
  }
  EXPECT_NEAR(su / n, k.cx, 1e-9);
  EXPECT_NEAR(sv / n, k.cy, 1e-9);
  EXPECT_EQ(nearest, static_cast<std::uint16_t>(1.0 * k.depth_scale));
  EXPECT_EQ(frame->frame.depth.At(static_cast<int>(k.cx), static_cast<int>(k.cy)), nearest);
}

TEST(SynthTest, CameraInsideObjectSkipped)
{
  const auto scene = SphereScene({{0.0, 0.0, 0.0}, {0.0, 0.0, 2.2}, {0.0, 0.0, -1.0}});
  const auto data = synth::RenderScene(scene);
  EXPECT_EQ(data.skipped, std::vector<std::size_t>{1});
  ASSERT_EQ(data.frames.size(), 2U);
  EXPECT_EQ(data.frames[1].frame_id, "000002");

  test::TempDir dir("synth_skip");
  synth::WriteDataset(data, scene, dir.path());
  EXPECT_EQ(GroundTruth::Load(dir.path() / "groundtruth.txt").entries.size(), data.frames.size());
  EXPECT_EQ(synth::LoadDataset(dir.path()).size(), data.frames.size());
}

TEST(SynthTest, DeterministicUnderSeed)
{
  const auto cfg = SmallOrbit(4, 5);
  test::TempDir a("synth_a");
  test::TempDir b("synth_b");
  for (const auto* dir : {&a, &b})
  {
    const auto scene = synth::GenerateScene(cfg, 42);
    synth::WriteDataset(synth::RenderScene(scene), scene, dir->path());
  }
  for (const char* name : {"rgb.txt", "depth.txt", "groundtruth.txt", "intrinsics.json", "detections.jsonl",
                           "scene.json", "rgb/000002.png", "depth/000003.png"})
  {
    EXPECT_EQ(ReadBytes(a.path() / name), ReadBytes(b.path() / name)) << name;
  }
  const auto other = synth::GenerateScene(cfg, 43);
  EXPECT_FALSE(other.objects[0].embedding.isApprox(synth::GenerateScene(cfg, 42).objects[0].embedding));
}

TEST(SynthTest, DatasetReloadsExactly)
{
  const auto scene = synth::GenerateScene(SmallOrbit(3, 4), 5);
  const auto data = synth::RenderScene(scene);
  test::TempDir dir("synth_reload");
  synth::WriteDataset(data, scene, dir.path());
  auto frames = synth::LoadDataset(dir.path());
  ASSERT_EQ(frames.size(), 3U);
  const auto detections = LoadDetections(dir.path() / "detections.jsonl");
  for (std::size_t i = 0; i < frames.size(); ++i)
  {
    frames[i].EnsureLoaded();
    EXPECT_EQ(frames[i].frame_id, data.frames[i].frame_id);
    EXPECT_EQ(frames[i].rgb.data, data.frames[i].rgb.data);
    EXPECT_EQ(frames[i].depth.data, data.frames[i].depth.data);
    EXPECT_LT((frames[i].pose->Translation() - data.frames[i].pose->Translation()).norm(), 1e-8);
    ASSERT_NE(detections.Find(frames[i].frame_id), nullptr);
    EXPECT_EQ(detections.Find(frames[i].frame_id)->detections.size(), data.detections.records[i].detections.size());
  }
}

TEST(SynthTest, MaskedPixelsLieOnSurfaces)
{
  const auto scene = synth::GenerateScene(SmallOrbit(6, 6), 9);
  const auto& k = scene.intrinsics;
  std::size_t checked = 0;
  for (std::size_t i = 0; i < scene.camera_poses.size(); ++i)
  {
    const auto frame = synth::RenderFrame(scene, i);
    ASSERT_TRUE(frame);
    for (const auto& det : frame->record.detections)
    {
      const auto it = std::find_if(scene.objects.begin(), scene.objects.end(),
                                   [&](const synth::Primitive& p) { return p.embedding == det.embedding; });
      const auto mask = DecodeMask(det.mask_rle, k.width, k.height);
      const auto cloud = geometry::Backproject(frame->frame.rgb, frame->frame.depth, mask, k, *frame->frame.pose);
      for (const auto& p : cloud.points)
      {
        const double d = it == scene.objects.end() ? std::abs(p.z()) : std::abs(it->SignedDistance(p));
        ASSERT_LE(d, 1e-3);
        ++checked;
      }
    }
  }
  EXPECT_GT(checked, 1000U);
}

TEST(SynthTest, BuildMemoryFindsEachPrimitive)
{
  auto cfg = SmallOrbit(12, 6);
  const auto scene = synth::GenerateScene(cfg, 21);
  auto data = synth::RenderScene(scene);
  instance_map::ClusteringConfig config;
  std::vector<std::string> warnings;
  const auto raw = CollectTuples(data.frames, data.detections, 2, {}, &warnings);
  std::size_t expected = 0;
  ExtractionOptions options;
  for (std::size_t i : SampleIndices(data.frames, 2))
  {
    expected += SurvivingDetections(data.detections.records[i], options).size();
  }
  EXPECT_EQ(raw.Size(), expected);
  EXPECT_TRUE(warnings.empty());

  const auto memory = BuildMemory(data.frames, data.detections, config, 2);
  EXPECT_EQ(memory.Size(), scene.objects.size());
  for (const auto& obj : memory.objects)
  {
    const Eigen::Vector3d c = obj.cloud.Centroid();
    const auto nearest = std::min_element(scene.objects.begin(), scene.objects.end(), [&](const auto& a, const auto& b) {
      return (a.center - c).norm() < (b.center - c).norm();
    });
    EXPECT_TRUE(obj.MeanEmbedding().isApprox(nearest->embedding, 1e-9));
  }
}

TEST(SynthTest, ConfigErrors)
{
  EXPECT_THROW(synth::GenerateScene({{"object_count", 2}}, 1), ConfigError);
  EXPECT_THROW(synth::GenerateScene({{"objects", {{{"shape", "cone"}, {"center", {0, 0, 0}}}}},
                                     {"poses", {{{"translation", {0, 0, -3}}, {"quaternion", {1, 0, 0, 0}}}}}},
                                    1),
               ConfigError);
  EXPECT_THROW(synth::GenerateScene({{"object_count", 40}, {"area", {0, 0.5, 0, 0.5}},
                                     {"trajectory", {{"frames", 1}}}},
                                    1),
               ConfigError);
}
}  // namespace instloc::ingest
