#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "instloc/geometry.hpp"
#include "test_util.hpp"

namespace instloc::geometry
{
namespace
{
CameraIntrinsics TestIntrinsics()
{
  CameraIntrinsics k;
  k.fx = 100.0;
  k.fy = 110.0;
  k.cx = 20.0;
  k.cy = 15.0;
  k.width = 40;
  k.height = 30;
  k.depth_scale = 1000.0;
  return k;
}

TEST(PoseTest, GroupLaws)
{
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial)
  {
    const Pose a = test::RandomPose(rng, std::numbers::pi, 5.0);
    const Pose b = test::RandomPose(rng, std::numbers::pi, 5.0);
    const Pose c = test::RandomPose(rng, std::numbers::pi, 5.0);
    EXPECT_LT((((a * b) * c).Matrix() - (a * (b * c)).Matrix()).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT(((a * a.Inverse()).Matrix() - Eigen::Matrix4d::Identity()).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((a.Inverse().Inverse().Matrix() - a.Matrix()).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_TRUE(Pose::IsRotation(a.Rotation(), 1e-9));
  }
}

TEST(PoseTest, RejectsNonRotation)
{
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(0, 0) = -1.0;
  EXPECT_THROW(Pose(m, Eigen::Vector3d::Zero()), InputError);
}

TEST(PoseTest, FitRigidRecoversTransform)
{
  std::mt19937_64 rng(3);
  const Pose truth = test::RandomPose(rng, 2.0, 3.0);
  const PointCloud src = test::RandomCloud(rng, 20, 1.0);
  std::vector<Eigen::Vector3d> dst;
  for (const auto& p : src.points)
  {
    dst.push_back(truth * p);
  }
  const Pose fit = FitRigid(src.points, dst);
  EXPECT_LT((fit.Matrix() - truth.Matrix()).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(BackprojectTest, PinholeExamples)
{
  const CameraIntrinsics k = TestIntrinsics();
  RgbImage rgb(k.width, k.height);
  DepthImage depth(k.width, k.height, 0);
  Mask mask(k.width, k.height, 0);
  depth.At(20, 15) = 2000;  // principal point, z = 2 m
  mask.At(20, 15) = 1;
  const PointCloud on_axis = Backproject(rgb, depth, mask, k, Pose::Identity());
  ASSERT_EQ(on_axis.Size(), 1U);
  EXPECT_LT((on_axis.points[0] - Eigen::Vector3d(0.0, 0.0, 2.0)).norm(), 1e-12);

  // u = cx + fx would leave a 40-pixel image, so scale the example down by
  // a focal length of 10 pixels: x = (u - cx) * z / fx.
  CameraIntrinsics narrow = k;
  narrow.fx = 10.0;
  DepthImage depth2(k.width, k.height, 0);
  Mask mask2(k.width, k.height, 0);
  depth2.At(30, 15) = 2000;
  mask2.At(30, 15) = 1;
  const PointCloud off_axis = Backproject(rgb, depth2, mask2, narrow, Pose::Identity());
  ASSERT_EQ(off_axis.Size(), 1U);
  EXPECT_LT((off_axis.points[0] - Eigen::Vector3d(2.0, 0.0, 2.0)).norm(), 1e-12);
}

TEST(BackprojectTest, ZeroDepthGivesEmptyCloud)
{
  const CameraIntrinsics k = TestIntrinsics();
  RgbImage rgb(k.width, k.height);
  DepthImage depth(k.width, k.height, 0);
  Mask mask(k.width, k.height, 1);
  EXPECT_TRUE(Backproject(rgb, depth, mask, k, Pose::Identity()).Empty());
}

TEST(BackprojectTest, DimensionMismatchThrows)
{
  const CameraIntrinsics k = TestIntrinsics();
  RgbImage rgb(k.width + 1, k.height);
  DepthImage depth(k.width, k.height, 0);
  Mask mask(k.width, k.height, 1);
  EXPECT_THROW(Backproject(rgb, depth, mask, k, Pose::Identity()), InputError);
}

TEST(BackprojectTest, MaxRangeAndPoseApplied)
{
  CameraIntrinsics k = TestIntrinsics();
  k.max_depth = 3.0;
  RgbImage rgb(k.width, k.height);
  DepthImage depth(k.width, k.height, 0);
  Mask mask(k.width, k.height, 1);
  depth.At(20, 15) = 2000;
  depth.At(21, 15) = 5000;  // beyond max range
  const Pose pose = Pose::FromAxisAngle(Eigen::Vector3d::UnitY(), 0.3, Eigen::Vector3d(1.0, 2.0, 3.0));
  const PointCloud cloud = Backproject(rgb, depth, mask, k, pose);
  ASSERT_EQ(cloud.Size(), 1U);
  EXPECT_LT((cloud.points[0] - pose * Eigen::Vector3d(0, 0, 2.0)).norm(), 1e-12);
}

TEST(BackprojectTest, ProjectionRoundTrip)
{
  const CameraIntrinsics k = TestIntrinsics();
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, k.width - 1.0);
  std::uniform_real_distribution<double> v(0.0, k.height - 1.0);
  std::uniform_real_distribution<double> z(0.1, 9.0);
  for (int i = 0; i < 200; ++i)
  {
    const Eigen::Vector2d px(u(rng), v(rng));
    const Eigen::Vector2d back = k.Project(k.Backproject(px.x(), px.y(), z(rng)));
    EXPECT_LT((back - px).norm(), 1e-6);
  }
}

TEST(VoxelIouTest, Examples)
{
  std::mt19937_64 rng(5);
  const PointCloud a = test::RandomCloud(rng, 100, 0.5);
  EXPECT_DOUBLE_EQ(VoxelIou(a, a, 0.05), 1.0);

  PointCloud shifted = a;
  for (auto& p : shifted.points)
  {
    p.x() += 1.2;
  }
  EXPECT_DOUBLE_EQ(VoxelIou(a, shifted, 0.05), 0.0);

  PointCloud va;
  va.points = {{0.025, 0.025, 0.025}, {0.075, 0.025, 0.025}};  // voxels (0,0,0), (1,0,0)
  PointCloud vb;
  vb.points = {{0.075, 0.025, 0.025}, {0.125, 0.025, 0.025}};  // voxels (1,0,0), (2,0,0)
  EXPECT_DOUBLE_EQ(VoxelIou(va, vb, 0.05), 1.0 / 3.0);

  EXPECT_DOUBLE_EQ(VoxelIou(PointCloud{}, PointCloud{}, 0.05), 0.0);
  EXPECT_THROW(VoxelIou(a, a, 0.0), InputError);
}

TEST(VoxelIouTest, SymmetricAndBounded)
{
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 100; ++trial)
  {
    PointCloud a = test::RandomCloud(rng, 1 + trial % 17, 0.2);
    PointCloud b = test::RandomCloud(rng, 1 + trial % 13, 0.2);
    const double ab = VoxelIou(a, b, 0.1);
    EXPECT_EQ(ab, VoxelIou(b, a, 0.1));
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 1.0);
    EXPECT_EQ(ab == 1.0, OccupiedVoxels(a, 0.1) == OccupiedVoxels(b, 0.1));
  }
}

TEST(VoxelIouTest, BoundaryResolvesToLowerIndex)
{
  EXPECT_EQ(ToVoxel(Eigen::Vector3d(0.1, -0.1, 0.0), 0.05), (VoxelKey{2, -2, 0}));
  EXPECT_EQ(ToVoxel(Eigen::Vector3d(-0.01, 0.0, 0.049), 0.05), (VoxelKey{-1, 0, 0}));
}

TEST(VoxelDownsampleTest, Examples)
{
  PointCloud two;
  two.points = {{0.1, 0.1, 0.1}, {0.2, 0.3, 0.4}};
  two.colors = {{1, 0, 0}, {0, 0, 1}};
  const PointCloud merged = VoxelDownsample(two, 1.0);
  ASSERT_EQ(merged.Size(), 1U);
  EXPECT_LT((merged.points[0] - Eigen::Vector3d(0.15, 0.2, 0.25)).norm(), 1e-12);
  EXPECT_LT((merged.colors[0] - Eigen::Vector3d(0.5, 0, 0.5)).norm(), 1e-12);

  PointCloud distinct;
  distinct.points = {{0.5, 0.5, 0.5}, {1.5, 0.5, 0.5}, {0.5, 2.5, 0.5}};
  const PointCloud kept = VoxelDownsample(distinct, 1.0);
  ASSERT_EQ(kept.Size(), 3U);
  for (const auto& p : distinct.points)
  {
    EXPECT_TRUE(std::any_of(kept.points.begin(), kept.points.end(),
                            [&](const Eigen::Vector3d& q) { return (q - p).norm() < 1e-12; }));
  }

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> unit(1e-6, 1.0 - 1e-6);
  PointCloud cube;
  for (int i = 0; i < 1000; ++i)
  {
    cube.points.emplace_back(unit(rng), unit(rng), unit(rng));
  }
  EXPECT_EQ(VoxelDownsample(cube, 0.5).Size(), 8U);
  EXPECT_THROW(VoxelDownsample(cube, -1.0), InputError);
}

TEST(VoxelDownsampleTest, ShrinksAndIsIdempotentOnOccupancy)
{
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 30; ++trial)
  {
    const PointCloud cloud = test::RandomCloud(rng, 50 + trial * 10, 1.0);
    const PointCloud once = VoxelDownsample(cloud, 0.3);
    const PointCloud twice = VoxelDownsample(once, 0.3);
    EXPECT_LE(once.Size(), cloud.Size());
    EXPECT_EQ(OccupiedVoxels(once, 0.3), OccupiedVoxels(twice, 0.3));
  }
}

// Independent reference: brute-force neighborhoods and the Darboux frame
// written out as (u, v, w) = (n_s, n_s x d, n_s x v).
std::vector<std::array<double, 33>> ReferenceFpfh(const PointCloud& cloud, double radius)
{
  const std::size_t n = cloud.Size();
  auto bin = [](double x, double lo, double hi) {
    return std::clamp(static_cast<int>(std::floor(11.0 * (x - lo) / (hi - lo))), 0, 10);
  };
  std::vector<std::array<double, 33>> spfh(n);
  std::vector<std::vector<std::pair<std::size_t, double>>> hoods(n);
  for (std::size_t i = 0; i < n; ++i)
  {
    spfh[i].fill(0.0);
    for (std::size_t j = 0; j < n; ++j)
    {
      const double d2 = (cloud.points[j] - cloud.points[i]).squaredNorm();
      if (j != i && d2 <= radius * radius)
      {
        hoods[i].push_back({j, d2});
      }
    }
    for (const auto& [j, d2] : hoods[i])
    {
      Eigen::Vector3d ps = cloud.points[i];
      Eigen::Vector3d pt = cloud.points[j];
      Eigen::Vector3d ns = cloud.normals[i];
      Eigen::Vector3d nt = cloud.normals[j];
      Eigen::Vector3d d = pt - ps;
      const double len = d.norm();
      if (std::acos(std::abs(ns.dot(d) / len)) > std::acos(std::abs(nt.dot(d) / len)))
      {
        std::swap(ps, pt);
        std::swap(ns, nt);
        d = -d;
      }
      const Eigen::Vector3d u = ns;
      const Eigen::Vector3d v = d.cross(u).normalized();
      const Eigen::Vector3d w = u.cross(v);
      const double f1 = std::atan2(w.dot(nt), u.dot(nt));
      const double f2 = v.dot(nt);
      const double f3 = u.dot(d) / len;
      const double inc = 100.0 / static_cast<double>(hoods[i].size());
      spfh[i][bin(f1, -std::numbers::pi, std::numbers::pi)] += inc;
      spfh[i][11 + bin(f2, -1, 1)] += inc;
      spfh[i][22 + bin(f3, -1, 1)] += inc;
    }
  }
  std::vector<std::array<double, 33>> fpfh(n);
  for (std::size_t i = 0; i < n; ++i)
  {
    std::array<double, 33> acc{};
    std::array<double, 3> sums{};
    for (const auto& [j, d2] : hoods[i])
    {
      for (int b = 0; b < 33; ++b)
      {
        acc[b] += spfh[j][b] / d2;
        sums[b / 11] += spfh[j][b] / d2;
      }
    }
    for (int b = 0; b < 33; ++b)
    {
      fpfh[i][b] = (sums[b / 11] > 0 ? acc[b] * 100.0 / sums[b / 11] : 0.0) + spfh[i][b];
    }
  }
  return fpfh;
}

PointCloud PlanarPatch(double step, int half)
{
  PointCloud plane;
  for (int i = -half; i <= half; ++i)
  {
    for (int j = -half; j <= half; ++j)
    {
      plane.points.emplace_back(i * step, j * step, 2.0);
    }
  }
  return plane;
}

TEST(FpfhTest, MatchesBruteForceReference)
{
  std::mt19937_64 rng(4);
  PointCloud cloud;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int i = 0; i < 150; ++i)
  {
    Eigen::Vector3d d(normal(rng), normal(rng), normal(rng));
    cloud.points.push_back(0.5 * d.normalized() + Eigen::Vector3d(0, 0, 3.0));
  }
  cloud.normals = EstimateNormals(cloud, 0.25);
  const auto result = ComputeFpfh(cloud, 0.25, 0.3);
  const auto reference = ReferenceFpfh(cloud, 0.3);
  for (std::size_t i = 0; i < cloud.Size(); ++i)
  {
    for (int b = 0; b < 33; ++b)
    {
      EXPECT_NEAR(result.features(static_cast<Eigen::Index>(i), b), reference[i][b], 1e-9);
    }
  }
}

TEST(FpfhTest, PlanarPatchIsUniformAndCoplanar)
{
  const PointCloud plane = PlanarPatch(0.02, 10);
  const auto result = ComputeFpfh(plane, 0.05, 0.1);
  const auto reference = ReferenceFpfh(
    [&] {
      PointCloud p = plane;
      p.normals = EstimateNormals(plane, 0.05);
      return p;
    }(),
    0.1);
  // Coplanar pairs land in the middle bin of every sub-histogram.
  const Eigen::Index center = 12 * 21 - 11;  // far from the patch border
  for (int sub = 0; sub < 3; ++sub)
  {
    EXPECT_NEAR(result.features(center, sub * 11 + 5), 200.0, 1e-6);
    EXPECT_NEAR(reference[static_cast<std::size_t>(center)][sub * 11 + 5], 200.0, 1e-6);
  }
  for (Eigen::Index i = 0; i < result.features.rows(); ++i)
  {
    EXPECT_LT((result.features.row(i) - result.features.row(center)).cwiseAbs().sum(), 0.05);
  }
}

TEST(FpfhTest, RotationInvariant)
{
  std::mt19937_64 rng(12);
  PointCloud cloud;
  std::uniform_real_distribution<double> uni(-0.4, 0.4);
  for (int i = 0; i < 400; ++i)
  {
    const double x = uni(rng);
    const double y = uni(rng);
    cloud.points.emplace_back(x, y, 2.0 + 0.8 * x * x - 0.5 * y * y + 0.3 * x * y);
  }
  const Pose rot = Pose::FromAxisAngle(Eigen::Vector3d(0.3, -1.0, 0.4), 0.7, Eigen::Vector3d::Zero());
  const PointCloud rotated = Transformed(cloud, rot);
  const auto a = ComputeFpfh(cloud, 0.1, 0.2);
  const auto b = ComputeFpfh(rotated, 0.1, 0.2);
  for (Eigen::Index i = 0; i < a.features.rows(); ++i)
  {
    EXPECT_LT((a.features.row(i) - b.features.row(i)).cwiseAbs().sum(), 0.1) << "point " << i;
  }
}

TEST(FpfhTest, SinglePointIsZeroRow)
{
  PointCloud one;
  one.points = {{0.0, 0.0, 1.0}};
  const auto result = ComputeFpfh(one, 0.1, 0.25);
  ASSERT_EQ(result.features.rows(), 1);
  EXPECT_EQ(result.features.cwiseAbs().sum(), 0.0);
  EXPECT_TRUE(result.isolated[0]);
  EXPECT_THROW(ComputeFpfh(PointCloud{}, 0.1, 0.25), InputError);
  EXPECT_THROW(ComputeFpfh(one, 0.0, 0.25), InputError);
}

TEST(NormalsTest, PlaneNormalsFaceViewpoint)
{
  const PointCloud plane = PlanarPatch(0.05, 5);
  for (const auto& n : EstimateNormals(plane, 0.2))
  {
    EXPECT_NEAR(n.norm(), 1.0, 1e-6);
    EXPECT_NEAR(n.z(), -1.0, 1e-9);
  }
}

TEST(CloudIoTest, BinaryAndPlyRoundTrip)
{
  std::mt19937_64 rng(2);
  for (int flags = 0; flags < 4; ++flags)
  {
    PointCloud cloud = test::RandomCloud(rng, 37, 3.0);
    if ((flags & 1) == 0)
    {
      cloud.colors.clear();
    }
    if (flags & 2)
    {
      cloud.normals = EstimateNormals(cloud, 1.0);
    }
    std::stringstream bin;
    WriteCloud(bin, cloud);
    const PointCloud back = ReadCloud(bin);
    ASSERT_EQ(back.Size(), cloud.Size());
    EXPECT_EQ(back.HasColors(), cloud.HasColors());
    EXPECT_EQ(back.HasNormals(), cloud.HasNormals());
    for (std::size_t i = 0; i < cloud.Size(); ++i)
    {
      EXPECT_LT((back.points[i] - cloud.points[i]).norm(), 1e-6);
    }
    std::stringstream ply;
    WritePly(ply, cloud);
    const PointCloud from_ply = ReadPly(ply);
    ASSERT_EQ(from_ply.Size(), cloud.Size());
    for (std::size_t i = 0; i < cloud.Size(); ++i)
    {
      EXPECT_LT((from_ply.points[i] - cloud.points[i]).norm(), 1e-6);
      if (cloud.HasColors())
      {
        EXPECT_LT((from_ply.colors[i] - cloud.colors[i]).cwiseAbs().maxCoeff(), 0.5 / 255.0 + 1e-9);
      }
    }
  }
  std::stringstream junk("XXXX");
  EXPECT_THROW(ReadCloud(junk), InputError);
}

TEST(KdTreeTest, MatchesBruteForce)
{
  std::mt19937_64 rng(8);
  const PointCloud cloud = test::RandomCloud(rng, 500, 1.0);
  const KdTree3 tree(cloud.points);
  for (int q = 0; q < 50; ++q)
  {
    const Eigen::Vector3d query = test::RandomCloud(rng, 1, 1.2).points[0];
    std::vector<std::pair<double, std::size_t>> all;
    for (std::size_t i = 0; i < cloud.Size(); ++i)
    {
      all.push_back({(cloud.points[i] - query).squaredNorm(), i});
    }
    std::sort(all.begin(), all.end());
    const auto knn = tree.Knn(query, 7, 10.0);
    ASSERT_EQ(knn.size(), 7U);
    for (std::size_t k = 0; k < 7; ++k)
    {
      EXPECT_EQ(knn[k].index, all[k].second);
    }
    const auto within = tree.Radius(query, 0.3);
    const auto expected = std::count_if(all.begin(), all.end(), [](const auto& e) { return e.first <= 0.09; });
    EXPECT_EQ(static_cast<long>(within.size()), expected);
  }
}
}  // namespace
}  // namespace instloc::geometry
