#pragma once

#include <cmath>

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "instloc/common.hpp"

namespace instloc::geometry
{
/// Rigid SE(3) transform mapping points x to rotation * x + translation.
class Pose
{
public:
  Pose() = default;

  Pose(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation)
    : rotation_(rotation), translation_(translation)
  {
    if (!IsRotation(rotation_, 1e-6))
    {
      throw InputError("Pose rotation is not orthonormal with det +1");
    }
  }

  static Pose Identity() { return Pose(); }

  /// From a unit quaternion (w, x, y, z); the quaternion is normalized first.
  static Pose FromQuaternion(const Eigen::Quaterniond& q, const Eigen::Vector3d& t)
  {
    if (q.norm() < 1e-12)
    {
      throw InputError("zero quaternion");
    }
    return Pose(q.normalized().toRotationMatrix(), t);
  }

  /// Rotation by angle (radians) about axis, then translation.
  static Pose FromAxisAngle(const Eigen::Vector3d& axis, double angle, const Eigen::Vector3d& t)
  {
    return Pose(Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix(), t);
  }

  /// Small-motion update exp(xi) with xi = (omega, v). Uses the exact
  /// rotation exponential; translation is applied directly.
  static Pose FromTwist(const Eigen::Matrix<double, 6, 1>& xi)
  {
    const Eigen::Vector3d omega = xi.head<3>();
    const double angle = omega.norm();
    Eigen::Matrix3d r = Eigen::Matrix3d::Identity();
    if (angle > 0.0)
    {
      r = Eigen::AngleAxisd(angle, omega / angle).toRotationMatrix();
    }
    return Pose(r, xi.tail<3>());
  }

  const Eigen::Matrix3d& Rotation() const { return rotation_; }
  const Eigen::Vector3d& Translation() const { return translation_; }

  Eigen::Quaterniond Quaternion() const { return Eigen::Quaterniond(rotation_).normalized(); }

  Eigen::Matrix4d Matrix() const
  {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation_;
    m.topRightCorner<3, 1>() = translation_;
    return m;
  }

  Eigen::Vector3d operator*(const Eigen::Vector3d& p) const { return rotation_ * p + translation_; }

  /// Composition: (a * b)(x) = a(b(x)).
  Pose operator*(const Pose& other) const
  {
    Pose out;
    out.rotation_ = rotation_ * other.rotation_;
    out.translation_ = rotation_ * other.translation_ + translation_;
    return out;
  }

  Pose Inverse() const
  {
    Pose out;
    out.rotation_ = rotation_.transpose();
    out.translation_ = -(out.rotation_ * translation_);
    return out;
  }

  /// Projects the rotation back onto SO(3); used after accumulating many
  /// incremental updates.
  Pose Orthonormalized() const
  {
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(rotation_, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d r = svd.matrixU() * svd.matrixV().transpose();
    if (r.determinant() < 0.0)
    {
      Eigen::Matrix3d u = svd.matrixU();
      u.col(2) *= -1.0;
      r = u * svd.matrixV().transpose();
    }
    Pose out;
    out.rotation_ = r;
    out.translation_ = translation_;
    return out;
  }

  static bool IsRotation(const Eigen::Matrix3d& r, double tolerance)
  {
    if (!r.allFinite())
    {
      return false;
    }
    const double ortho = (r * r.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    return ortho <= tolerance && std::abs(r.determinant() - 1.0) <= tolerance;
  }

private:
  Eigen::Matrix3d rotation_ = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation_ = Eigen::Vector3d::Zero();
};

/// Geodesic angle of the relative rotation between a and b, in radians.
inline double RotationAngleBetween(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b)
{
  const double c = ((a.transpose() * b).trace() - 1.0) / 2.0;
  return std::acos(std::clamp(c, -1.0, 1.0));
}

/// Least-squares rigid transform mapping src[i] onto dst[i] (Kabsch/Umeyama
/// without scale). Requires at least 3 pairs.
inline Pose FitRigid(const std::vector<Eigen::Vector3d>& src, const std::vector<Eigen::Vector3d>& dst)
{
  if (src.size() != dst.size() || src.size() < 3)
  {
    throw InputError("FitRigid needs >= 3 paired points");
  }
  Eigen::Vector3d mu_s = Eigen::Vector3d::Zero();
  Eigen::Vector3d mu_d = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < src.size(); ++i)
  {
    mu_s += src[i];
    mu_d += dst[i];
  }
  mu_s /= static_cast<double>(src.size());
  mu_d /= static_cast<double>(dst.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < src.size(); ++i)
  {
    cov += (dst[i] - mu_d) * (src[i] - mu_s).transpose();
  }
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0)
  {
    d(2, 2) = -1.0;
  }
  const Eigen::Matrix3d r = svd.matrixU() * d * svd.matrixV().transpose();
  return Pose(r, mu_d - r * mu_s);
}
}  // namespace instloc::geometry
