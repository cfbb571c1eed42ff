#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "instloc/common.hpp"
#include "instloc/geometry/camera.hpp"
#include "instloc/geometry/pose.hpp"
#include "instloc/ingest/detections.hpp"
#include "instloc/ingest/frames.hpp"
#include "instloc/ingest/png_io.hpp"

namespace instloc::ingest::synth
{
enum class Shape
{
  kBox,
  kSphere,
  kCylinder,
};

inline Shape ShapeFromName(const std::string& name)
{
  if (name == "box")
  {
    return Shape::kBox;
  }
  if (name == "sphere")
  {
    return Shape::kSphere;
  }
  if (name == "cylinder")
  {
    return Shape::kCylinder;
  }
  throw ConfigError("unknown primitive shape '" + name + "'");
}

inline std::string ShapeName(Shape s)
{
  switch (s)
  {
    case Shape::kBox:
      return "box";
    case Shape::kSphere:
      return "sphere";
    case Shape::kCylinder:
      return "cylinder";
  }
  return "box";
}

/// Analytic solid with a yaw about world z. Boxes use size (full extents),
/// spheres radius, cylinders radius and height along the local z axis.
struct Primitive
{
  Shape shape = Shape::kBox;
  std::string caption;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double yaw = 0.0;
  Eigen::Vector3d size = Eigen::Vector3d::Ones();
  double radius = 0.5;
  double height = 1.0;
  Eigen::Vector3d color = Eigen::Vector3d::Constant(0.5);
  instance_map::Embedding embedding;
  // Procedural shading so colored registration has gradients to follow.
  Eigen::Vector3d texture_dir = Eigen::Vector3d::UnitX();
  double texture_phase = 0.0;

  Eigen::Matrix3d Rotation() const { return Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()).toRotationMatrix(); }

  Eigen::Vector3d ToLocal(const Eigen::Vector3d& p) const { return Rotation().transpose() * (p - center); }

  void Validate() const
  {
    const bool ok = shape == Shape::kBox ? (size.array() > 0.0).all()
                    : shape == Shape::kSphere ? radius > 0.0
                                              : radius > 0.0 && height > 0.0;
    if (!ok)
    {
      throw ConfigError("primitive '" + caption + "' has non-positive dimensions");
    }
  }

  /// Radius of a sphere about center enclosing the primitive.
  double BoundingRadius() const
  {
    switch (shape)
    {
      case Shape::kBox:
        return size.norm() / 2.0;
      case Shape::kSphere:
        return radius;
      case Shape::kCylinder:
        return std::hypot(radius, height / 2.0);
    }
    return 0.0;
  }

  /// Smallest t > 0 with origin + t * dir on the surface.
  std::optional<double> Intersect(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) const
  {
    const Eigen::Matrix3d rt = Rotation().transpose();
    return IntersectLocal(rt * (origin - center), rt * dir);
  }

  /// Intersect with the ray already expressed in the primitive's frame.
  std::optional<double> IntersectLocal(const Eigen::Vector3d& o, const Eigen::Vector3d& d) const
  {
    constexpr double kMinT = 1e-9;
    double best = std::numeric_limits<double>::infinity();
    auto consider = [&](double t) {
      if (t > kMinT && t < best)
      {
        best = t;
      }
    };
    if (shape == Shape::kSphere)
    {
      const double a = d.squaredNorm();
      const double b = 2.0 * o.dot(d);
      const double c = o.squaredNorm() - radius * radius;
      const double disc = b * b - 4.0 * a * c;
      if (disc >= 0.0)
      {
        const double s = std::sqrt(disc);
        consider((-b - s) / (2.0 * a));
        consider((-b + s) / (2.0 * a));
      }
    }
    else if (shape == Shape::kBox)
    {
      const Eigen::Vector3d half = size / 2.0;
      double t0 = -std::numeric_limits<double>::infinity();
      double t1 = std::numeric_limits<double>::infinity();
      for (int i = 0; i < 3; ++i)
      {
        if (std::abs(d[i]) < 1e-15)
        {
          if (std::abs(o[i]) > half[i])
          {
            return std::nullopt;
          }
          continue;
        }
        double a = (-half[i] - o[i]) / d[i];
        double b = (half[i] - o[i]) / d[i];
        if (a > b)
        {
          std::swap(a, b);
        }
        t0 = std::max(t0, a);
        t1 = std::min(t1, b);
      }
      if (t0 <= t1)
      {
        consider(t0);
        consider(t1);
      }
    }
    else
    {
      const double hz = height / 2.0;
      const double a = d.x() * d.x() + d.y() * d.y();
      if (a > 1e-15)
      {
        const double b = 2.0 * (o.x() * d.x() + o.y() * d.y());
        const double c = o.x() * o.x() + o.y() * o.y() - radius * radius;
        const double disc = b * b - 4.0 * a * c;
        if (disc >= 0.0)
        {
          const double s = std::sqrt(disc);
          for (const double t : {(-b - s) / (2.0 * a), (-b + s) / (2.0 * a)})
          {
            if (std::abs(o.z() + t * d.z()) <= hz)
            {
              consider(t);
            }
          }
        }
      }
      if (std::abs(d.z()) > 1e-15)
      {
        for (const double zc : {-hz, hz})
        {
          const double t = (zc - o.z()) / d.z();
          const double x = o.x() + t * d.x();
          const double y = o.y() + t * d.y();
          if (x * x + y * y <= radius * radius)
          {
            consider(t);
          }
        }
      }
    }
    if (std::isinf(best))
    {
      return std::nullopt;
    }
    return best;
  }

  /// Signed distance to the surface (negative inside).
  double SignedDistance(const Eigen::Vector3d& p) const
  {
    const Eigen::Vector3d q = ToLocal(p);
    if (shape == Shape::kSphere)
    {
      return q.norm() - radius;
    }
    Eigen::Vector3d e;
    if (shape == Shape::kBox)
    {
      e = q.cwiseAbs() - size / 2.0;
    }
    else
    {
      const Eigen::Vector2d e2(std::hypot(q.x(), q.y()) - radius, std::abs(q.z()) - height / 2.0);
      const double outside = e2.cwiseMax(0.0).norm();
      return outside + std::min(e2.maxCoeff(), 0.0);
    }
    return e.cwiseMax(0.0).norm() + std::min(e.maxCoeff(), 0.0);
  }

  bool Contains(const Eigen::Vector3d& p) const { return SignedDistance(p) < 0.0; }

  Eigen::Vector3d ColorAt(const Eigen::Vector3d& p) const
  {
    const Eigen::Vector3d q = ToLocal(p);
    constexpr double kTwoPi = 6.283185307179586;
    const double s = 0.5 + 0.25 * std::sin(kTwoPi * 4.0 * texture_dir.dot(q) + texture_phase) +
                     0.25 * std::sin(kTwoPi * 3.0 * q.z() + 2.0 * texture_phase);
    return (color * (0.45 + 0.55 * s)).cwiseMin(1.0).cwiseMax(0.0);
  }
};

/// A fully resolved scene: every random choice already drawn.
struct Scene
{
  geometry::CameraIntrinsics intrinsics;
  std::vector<Primitive> objects;
  std::vector<geometry::Pose> camera_poses;
  Eigen::Index embedding_dim = 16;
  double fps = 30.0;
  bool floor = true;
  std::string floor_caption = "floor";
  instance_map::Embedding floor_embedding;
  int min_mask_pixels = 20;

  void Validate() const
  {
    intrinsics.Validate();
    if (camera_poses.empty())
    {
      throw ConfigError("scene has no camera poses");
    }
    if (!(fps > 0.0))
    {
      throw ConfigError("fps must be positive");
    }
    for (const auto& o : objects)
    {
      o.Validate();
      if (o.embedding.size() != embedding_dim)
      {
        throw ConfigError("primitive '" + o.caption + "' embedding dimension differs from scene");
      }
    }
  }
};

namespace detail
{
inline Eigen::Vector3d Vec3(const nlohmann::json& j, const char* key)
{
  const auto v = j.at(key).get<std::vector<double>>();
  if (v.size() != 3)
  {
    throw ConfigError(std::string(key) + " must have 3 entries");
  }
  return {v[0], v[1], v[2]};
}

inline std::vector<double> ToVector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

inline instance_map::Embedding RandomUnit(Eigen::Index dim, std::mt19937_64& rng)
{
  std::normal_distribution<double> n(0.0, 1.0);
  instance_map::Embedding e(dim);
  for (Eigen::Index i = 0; i < dim; ++i)
  {
    e[i] = n(rng);
  }
  return e.normalized();
}

inline const std::vector<Eigen::Vector3d>& Palette()
{
  static const std::vector<Eigen::Vector3d> palette = {
      {0.90, 0.20, 0.20}, {0.20, 0.70, 0.25}, {0.20, 0.35, 0.90}, {0.95, 0.80, 0.20}, {0.80, 0.30, 0.80},
      {0.20, 0.80, 0.80}, {0.95, 0.55, 0.15}, {0.55, 0.35, 0.20}, {0.60, 0.60, 0.95}, {0.35, 0.55, 0.20},
      {0.95, 0.60, 0.70}, {0.50, 0.50, 0.50}};
  return palette;
}

/// Camera-to-world pose looking from eye toward target with world z up;
/// camera axes x right, y down, z forward.
inline geometry::Pose LookAt(const Eigen::Vector3d& eye, const Eigen::Vector3d& target)
{
  const Eigen::Vector3d z = (target - eye).normalized();
  Eigen::Vector3d x = z.cross(Eigen::Vector3d::UnitZ());
  if (x.norm() < 1e-9)
  {
    x = Eigen::Vector3d::UnitX();
  }
  x.normalize();
  const Eigen::Vector3d y = z.cross(x);
  Eigen::Matrix3d r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  return geometry::Pose(r, eye);
}

inline Primitive PrimitiveFromJson(const nlohmann::json& j)
{
  Primitive p;
  p.shape = ShapeFromName(j.at("shape").get<std::string>());
  p.caption = j.value("caption", ShapeName(p.shape));
  p.center = Vec3(j, "center");
  p.yaw = j.value("yaw", 0.0);
  if (p.shape == Shape::kBox)
  {
    p.size = Vec3(j, "size");
  }
  else
  {
    p.radius = j.at("radius").get<double>();
    if (p.shape == Shape::kCylinder)
    {
      p.height = j.at("height").get<double>();
    }
  }
  if (j.contains("color"))
  {
    p.color = Vec3(j, "color");
  }
  if (j.contains("embedding"))
  {
    const auto e = j["embedding"].get<std::vector<double>>();
    p.embedding = Eigen::Map<const Eigen::VectorXd>(e.data(), static_cast<Eigen::Index>(e.size()));
  }
  return p;
}

/// Non-overlapping primitives resting on the floor inside area.
inline std::vector<Primitive> RandomLayout(int count, const std::vector<double>& area, std::mt19937_64& rng)
{
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  static const char* const kCaptions[3][4] = {{"crate", "cabinet", "box", "drawer"},
                                              {"ball", "globe", "melon", "lamp shade"},
                                              {"bin", "bucket", "vase", "stool"}};
  std::vector<Primitive> out;
  std::vector<double> footprint;
  int attempts = 0;
  while (static_cast<int>(out.size()) < count)
  {
    if (++attempts > 10000)
    {
      throw ConfigError("cannot place " + std::to_string(count) + " primitives in the given area");
    }
    Primitive p;
    const int kind = static_cast<int>(out.size()) % 3;
    p.shape = static_cast<Shape>(kind);
    double reach = 0.0;
    double half_height = 0.0;
    if (p.shape == Shape::kBox)
    {
      p.size = {0.3 + 0.5 * u01(rng), 0.3 + 0.5 * u01(rng), 0.3 + 0.7 * u01(rng)};
      reach = 0.5 * std::hypot(p.size.x(), p.size.y());
      half_height = p.size.z() / 2.0;
    }
    else if (p.shape == Shape::kSphere)
    {
      p.radius = 0.2 + 0.2 * u01(rng);
      reach = p.radius;
      half_height = p.radius;
    }
    else
    {
      p.radius = 0.15 + 0.2 * u01(rng);
      p.height = 0.4 + 0.6 * u01(rng);
      reach = p.radius;
      half_height = p.height / 2.0;
    }
    p.yaw = 3.141592653589793 * u01(rng);
    p.center = {area[0] + (area[1] - area[0]) * u01(rng), area[2] + (area[3] - area[2]) * u01(rng), half_height};
    bool clear = true;
    for (std::size_t i = 0; i < out.size() && clear; ++i)
    {
      clear = (out[i].center.head<2>() - p.center.head<2>()).norm() > footprint[i] + reach + 0.15;
    }
    if (!clear)
    {
      continue;
    }
    p.caption = kCaptions[kind][(out.size() / 3) % 4];
    out.push_back(p);
    footprint.push_back(reach);
  }
  return out;
}
}  // namespace detail

/// Resolves a scene description. Keys: "intrinsics", "fps", "embedding_dim",
/// "floor", "floor_caption", "min_mask_pixels", either "objects" (list) or
/// "object_count" + "area" [xmin, xmax, ymin, ymax], and either "poses"
/// (list of {"translation", "quaternion" wxyz}) or "trajectory" (orbit).
/// Colors, embeddings, and shading not given explicitly are drawn from seed.
inline Scene GenerateScene(const nlohmann::json& config, std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  Scene scene;
  try
  {
    if (config.contains("intrinsics"))
    {
      scene.intrinsics = IntrinsicsFromJson(config["intrinsics"]);
    }
    else
    {
      scene.intrinsics = {130.0, 130.0, 80.0, 60.0, 160, 120, 5000.0, 10.0};
    }
    scene.fps = config.value("fps", 30.0);
    scene.embedding_dim = config.value("embedding_dim", Eigen::Index{16});
    scene.floor = config.value("floor", true);
    scene.floor_caption = config.value("floor_caption", std::string("floor"));
    scene.min_mask_pixels = config.value("min_mask_pixels", 20);
    if (scene.embedding_dim < 1)
    {
      throw ConfigError("embedding_dim must be positive");
    }

    if (config.contains("objects"))
    {
      for (const auto& j : config["objects"])
      {
        scene.objects.push_back(detail::PrimitiveFromJson(j));
      }
    }
    else
    {
      const auto area = config.value("area", std::vector<double>{-1.5, 1.5, -1.5, 1.5});
      if (area.size() != 4 || !(area[0] < area[1] && area[2] < area[3]))
      {
        throw ConfigError("area must be [xmin, xmax, ymin, ymax]");
      }
      scene.objects = detail::RandomLayout(config.at("object_count").get<int>(), area, rng);
    }

    std::vector<std::size_t> palette(detail::Palette().size());
    for (std::size_t i = 0; i < palette.size(); ++i)
    {
      palette[i] = i;
    }
    std::shuffle(palette.begin(), palette.end(), rng);
    for (std::size_t i = 0; i < scene.objects.size(); ++i)
    {
      Primitive& p = scene.objects[i];
      const bool explicit_color = config.contains("objects") && config["objects"][i].contains("color");
      if (!explicit_color)
      {
        p.color = detail::Palette()[palette[i % palette.size()]];
      }
      if (p.embedding.size() == 0)
      {
        p.embedding = detail::RandomUnit(scene.embedding_dim, rng);
      }
      const double a = 6.283185307179586 * u01(rng);
      p.texture_dir = Eigen::Vector3d(std::cos(a), std::sin(a), 0.3).normalized();
      p.texture_phase = 6.283185307179586 * u01(rng);
    }
    scene.floor_embedding = detail::RandomUnit(scene.embedding_dim, rng);

    if (config.contains("poses"))
    {
      for (const auto& j : config["poses"])
      {
        const auto q = j.at("quaternion").get<std::vector<double>>();
        if (q.size() != 4)
        {
          throw ConfigError("quaternion must be [w, x, y, z]");
        }
        scene.camera_poses.push_back(geometry::Pose::FromQuaternion(Eigen::Quaterniond(q[0], q[1], q[2], q[3]),
                                                                    detail::Vec3(j, "translation")));
      }
    }
    else
    {
      const auto& t = config.at("trajectory");
      const int frames = t.at("frames").get<int>();
      if (frames < 1)
      {
        throw ConfigError("trajectory needs at least one frame");
      }
      const Eigen::Vector3d target =
          t.contains("target") ? detail::Vec3(t, "target") : Eigen::Vector3d(0.0, 0.0, 0.3);
      const double radius = t.value("radius", 3.0);
      const double height = t.value("height", 1.5);
      const double turns = t.value("turns", 1.0);
      const double start = t.value("start_angle", 0.0);
      const double wobble = t.value("wobble", 0.0);
      for (int i = 0; i < frames; ++i)
      {
        const double theta = start + 6.283185307179586 * turns * i / frames;
        const Eigen::Vector3d eye = target + Eigen::Vector3d(radius * std::cos(theta), radius * std::sin(theta),
                                                             height + wobble * std::sin(3.0 * theta));
        scene.camera_poses.push_back(detail::LookAt(eye, target));
      }
    }
  }
  catch (const nlohmann::json::exception& e)
  {
    throw ConfigError(std::string("scene config: ") + e.what());
  }
  scene.Validate();
  return scene;
}

/// Scene as JSON with all drawn values explicit.
inline nlohmann::json SceneToJson(const Scene& scene)
{
  nlohmann::json objects = nlohmann::json::array();
  for (const auto& p : scene.objects)
  {
    nlohmann::json j = {{"shape", ShapeName(p.shape)},
                        {"caption", p.caption},
                        {"center", detail::ToVector(p.center)},
                        {"yaw", p.yaw},
                        {"color", detail::ToVector(p.color)},
                        {"embedding", detail::ToVector(p.embedding)}};
    if (p.shape == Shape::kBox)
    {
      j["size"] = detail::ToVector(p.size);
    }
    else
    {
      j["radius"] = p.radius;
    }
    if (p.shape == Shape::kCylinder)
    {
      j["height"] = p.height;
    }
    objects.push_back(j);
  }
  return {{"intrinsics", IntrinsicsToJson(scene.intrinsics)},
          {"embedding_dim", scene.embedding_dim},
          {"fps", scene.fps},
          {"floor", scene.floor},
          {"objects", objects}};
}

inline std::string FrameName(std::size_t index)
{
  std::ostringstream os;
  os << std::setw(6) << std::setfill('0') << index;
  return os.str();
}

inline constexpr int kNoHit = -1;
inline constexpr int kFloorHit = -2;

struct RenderedFrame
{
  std::size_t index = 0;
  PosedFrame frame;
  /// Per pixel: primitive index, kFloorHit, or kNoHit.
  geometry::GrayImage<int> instance;
  DetectionRecord record;
};

/// Ray-casts one camera pose. Returns nullopt when the camera center lies
/// inside a primitive.
inline std::optional<RenderedFrame> RenderFrame(const Scene& scene, std::size_t index)
{
  const geometry::Pose& pose = scene.camera_poses.at(index);
  const Eigen::Vector3d eye = pose.Translation();
  for (const auto& o : scene.objects)
  {
    if (o.SignedDistance(eye) <= 0.0)
    {
      return std::nullopt;
    }
  }
  const auto& k = scene.intrinsics;
  RenderedFrame out;
  out.index = index;
  out.frame.frame_id = FrameName(index);
  out.frame.timestamp = static_cast<double>(index) / scene.fps;
  out.frame.pose = pose;
  out.frame.intrinsics = k;
  out.frame.rgb = geometry::RgbImage(k.width, k.height);
  out.frame.depth = geometry::DepthImage(k.width, k.height, 0);
  out.instance = geometry::GrayImage<int>(k.width, k.height, kNoHit);
  const double max_raw = std::numeric_limits<std::uint16_t>::max();
  std::vector<Eigen::Matrix3d> local_rot;
  std::vector<Eigen::Vector3d> local_eye;
  std::vector<double> bound2;
  for (const auto& o : scene.objects)
  {
    local_rot.push_back(o.Rotation().transpose());
    local_eye.push_back(local_rot.back() * (eye - o.center));
    bound2.push_back(std::pow(o.BoundingRadius() * (1.0 + 1e-9), 2));
  }

  for (int v = 0; v < k.height; ++v)
  {
    for (int u = 0; u < k.width; ++u)
    {
      // Camera-frame direction with unit z, so the hit parameter is the depth.
      const Eigen::Vector3d dir = pose.Rotation() * k.Backproject(u, v, 1.0);
      double best = std::numeric_limits<double>::infinity();
      int hit = kNoHit;
      for (std::size_t i = 0; i < scene.objects.size(); ++i)
      {
        const Eigen::Vector3d& oc = local_eye[i];
        const Eigen::Vector3d d = local_rot[i] * dir;
        // Cheap rejection against the bounding sphere.
        const double along = -oc.dot(d) / d.squaredNorm();
        if ((oc + std::max(along, 0.0) * d).squaredNorm() > bound2[i])
        {
          continue;
        }
        const auto t = scene.objects[i].IntersectLocal(oc, d);
        if (t && *t < best)
        {
          best = *t;
          hit = static_cast<int>(i);
        }
      }
      if (scene.floor && dir.z() < -1e-12)
      {
        const double t = -eye.z() / dir.z();
        if (t > 0.0 && t < best)
        {
          best = t;
          hit = kFloorHit;
        }
      }
      if (hit == kNoHit)
      {
        continue;
      }
      const double raw = std::round(best * k.depth_scale);
      if (best > k.max_depth || raw > max_raw)
      {
        continue;
      }
      const Eigen::Vector3d p = eye + best * dir;
      Eigen::Vector3d c;
      if (hit == kFloorHit)
      {
        const bool odd = (static_cast<long>(std::floor(p.x() * 2.0)) + static_cast<long>(std::floor(p.y() * 2.0))) & 1;
        c = Eigen::Vector3d::Constant(odd ? 0.35 : 0.6);
      }
      else
      {
        c = scene.objects[static_cast<std::size_t>(hit)].ColorAt(p);
      }
      out.frame.depth.At(u, v) = static_cast<std::uint16_t>(raw);
      out.instance.At(u, v) = hit;
      std::uint8_t* px = out.frame.rgb.At(u, v);
      for (int ch = 0; ch < 3; ++ch)
      {
        px[ch] = static_cast<std::uint8_t>(std::lround(255.0 * c[ch]));
      }
    }
  }

  out.record.frame_id = out.frame.frame_id;
  auto emit = [&](int id, const std::string& caption, const instance_map::Embedding& embedding) {
    geometry::Mask mask(k.width, k.height, 0);
    int count = 0;
    Box box{static_cast<double>(k.width), static_cast<double>(k.height), 0.0, 0.0};
    for (int v = 0; v < k.height; ++v)
    {
      for (int u = 0; u < k.width; ++u)
      {
        if (out.instance.At(u, v) == id)
        {
          mask.At(u, v) = 1;
          ++count;
          box.x0 = std::min(box.x0, static_cast<double>(u));
          box.y0 = std::min(box.y0, static_cast<double>(v));
          box.x1 = std::max(box.x1, u + 1.0);
          box.y1 = std::max(box.y1, v + 1.0);
        }
      }
    }
    if (count < scene.min_mask_pixels)
    {
      return;
    }
    Detection d;
    d.caption = caption;
    d.box = box;
    d.mask_rle = EncodeMask(mask);
    d.embedding = embedding;
    d.score = 1.0;
    out.record.detections.push_back(std::move(d));
  };
  for (std::size_t i = 0; i < scene.objects.size(); ++i)
  {
    emit(static_cast<int>(i), scene.objects[i].caption, scene.objects[i].embedding);
  }
  if (scene.floor && !scene.floor_caption.empty())
  {
    emit(kFloorHit, scene.floor_caption, scene.floor_embedding);
  }
  return out;
}

/// All rendered frames in index order plus their detection records.
struct SynthDataset
{
  std::vector<PosedFrame> frames;
  DetectionFile detections;
  /// Poses skipped because the camera was inside a primitive.
  std::vector<std::size_t> skipped;
};

inline SynthDataset RenderScene(const Scene& scene)
{
  scene.Validate();
  std::vector<std::optional<RenderedFrame>> rendered(scene.camera_poses.size());
  ParallelFor(rendered.size(), [&](std::size_t i) { rendered[i] = RenderFrame(scene, i); });
  SynthDataset out;
  out.detections.embedding_dim = scene.embedding_dim;
  out.detections.producer = "instloc-synth";
  for (std::size_t i = 0; i < rendered.size(); ++i)
  {
    if (!rendered[i])
    {
      out.skipped.push_back(i);
      continue;
    }
    out.frames.push_back(std::move(rendered[i]->frame));
    out.detections.records.push_back(std::move(rendered[i]->record));
  }
  return out;
}

/// TUM-style layout: rgb/, depth/, rgb.txt, depth.txt, groundtruth.txt,
/// intrinsics.json, detections.jsonl, plus scene.json with the resolved
/// scene.
inline void WriteDataset(const SynthDataset& data, const Scene& scene, const std::filesystem::path& dir)
{
  namespace fs = std::filesystem;
  fs::create_directories(dir / "rgb");
  fs::create_directories(dir / "depth");
  std::ofstream rgb_list(dir / "rgb.txt");
  std::ofstream depth_list(dir / "depth.txt");
  std::ofstream gt(dir / "groundtruth.txt");
  if (!rgb_list || !depth_list || !gt)
  {
    throw InputError("cannot write dataset into " + dir.string());
  }
  rgb_list << "# timestamp filename\n";
  depth_list << "# timestamp filename\n";
  gt << "# timestamp tx ty tz qx qy qz qw\n";
  ParallelFor(data.frames.size(), [&](std::size_t i) {
    const auto& f = data.frames[i];
    WriteRgbPng(dir / "rgb" / (f.frame_id + ".png"), f.rgb);
    WriteDepthPng(dir / "depth" / (f.frame_id + ".png"), f.depth);
  });
  for (const auto& f : data.frames)
  {
    std::ostringstream ts;
    ts << std::fixed << std::setprecision(6) << f.timestamp;
    rgb_list << ts.str() << " rgb/" << f.frame_id << ".png\n";
    depth_list << ts.str() << " depth/" << f.frame_id << ".png\n";
    gt << TumPoseLine(f.timestamp, *f.pose) << '\n';
  }
  std::ofstream(dir / "intrinsics.json") << IntrinsicsToJson(scene.intrinsics).dump(2) << '\n';
  std::ofstream(dir / "scene.json") << SceneToJson(scene).dump(2) << '\n';
  SaveDetections(dir / "detections.jsonl", data.detections);
}

/// Reads a dataset written by WriteDataset back as posed frames. Timestamps
/// are exact, so association uses a tight window.
inline std::vector<PosedFrame> LoadDataset(const std::filesystem::path& dir)
{
  return ParseTumSequence(dir, 1e-4, LoadIntrinsics(dir / "intrinsics.json"));
}
}  // namespace instloc::ingest::synth
