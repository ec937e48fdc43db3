#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>

namespace slung {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

inline constexpr double kPi = 3.14159265358979323846;

// Rotates a body-frame vector into the world frame. The quaternion is
// renormalized on the fly so slightly denormalized inputs stay norm-preserving.
inline Vec3 attitude_rotate(const Quat& q, const Vec3& v) {
  return q.normalized() * v;
}

inline Mat3 rotation_matrix(const Quat& q) {
  return q.normalized().toRotationMatrix();
}

// Body z-axis expressed in the world frame (third column of R).
inline Vec3 body_z_axis(const Quat& q) {
  return attitude_rotate(q, Vec3::UnitZ());
}

// Angle between body z and world z, arccos argument clamped to [-1, 1].
inline double tilt_angle(const Quat& q) {
  const double c = std::clamp(body_z_axis(q).z(), -1.0, 1.0);
  return std::acos(c);
}

// q ⊗ exp(ω·dt/2) with body-frame rates; exact identity when ω = 0.
inline Quat integrate_attitude(const Quat& q, const Vec3& body_rates,
                               double dt) {
  const double angle = body_rates.norm() * dt;
  if (angle == 0.0) return q.normalized();
  const Vec3 axis = body_rates.normalized();
  const Quat dq(Eigen::AngleAxisd(angle, axis));
  return (q * dq).normalized();
}

inline Quat quat_from_axis_angle(const Vec3& axis, double angle) {
  return Quat(Eigen::AngleAxisd(angle, axis.normalized()));
}

inline bool all_finite(const Vec3& v) { return v.allFinite(); }

}  // namespace slung
