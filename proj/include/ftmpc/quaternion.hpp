#pragma once

// Quaternion helpers.
//
// Convention (fixed across the library): Hamilton product, storage vector part
// first (Eigen's coeffs() order x, y, z, w), and C(q_WB) = q.toRotationMatrix()
// maps body-frame vectors into the world frame.

#include <cmath>

#include "ftmpc/common.hpp"

namespace ftmpc {

using Quat = Eigen::Quaterniond;

inline Quat quat_identity() { return Quat::Identity(); }

/// Flip sign so that w >= 0. Same rotation.
inline Quat canonical(const Quat& q) {
  return q.w() < 0.0 ? Quat(-q.w(), -q.x(), -q.y(), -q.z()) : q;
}

/// Exponential map of a rotation vector: [sin(|t|/2) t/|t|, cos(|t|/2)].
inline Quat quat_exp(const Vec3& dtheta) {
  const double angle = dtheta.norm();
  const double half = 0.5 * angle;
  // sinc(half) * 0.5, with a series near zero
  const double k = angle < 1e-8 ? 0.5 * (1.0 - half * half / 6.0) : std::sin(half) / angle;
  return Quat(std::cos(half), k * dtheta.x(), k * dtheta.y(), k * dtheta.z());
}

/// Rotation vector of q, taking the shortest rotation (|result| <= pi).
inline Vec3 quat_log(const Quat& q_in) {
  const Quat q = canonical(q_in);
  const Vec3 v = q.vec();
  const double s = v.norm();
  if (s < 1e-12) {
    return 2.0 * v / q.w();
  }
  const double angle = 2.0 * std::atan2(s, q.w());
  return angle * v / s;
}

/// q ⊞ dtheta = q ⊗ exp(dtheta). Result is normalized.
inline Quat quat_boxplus(const Quat& q, const Vec3& dtheta) {
  Quat r = q * quat_exp(dtheta);
  r.normalize();
  return r;
}

/// q ⊟ q_bar = log(q_bar⁻¹ ⊗ q); inverse of boxplus for |dtheta| < pi.
inline Vec3 quat_boxminus(const Quat& q, const Quat& q_bar) {
  return quat_log(q_bar.conjugate() * q);
}

/// Left multiplication matrix: q ⊗ p = left_matrix(q) * p.coeffs().
inline Mat4 quat_left_matrix(const Quat& q) {
  const double x = q.x(), y = q.y(), z = q.z(), w = q.w();
  Mat4 m;
  m << w, -z, y, x,
       z, w, -x, y,
       -y, x, w, z,
       -x, -y, -z, w;
  return m;
}

/// Right multiplication matrix: p ⊗ q = right_matrix(q) * p.coeffs().
inline Mat4 quat_right_matrix(const Quat& q) {
  const double x = q.x(), y = q.y(), z = q.z(), w = q.w();
  Mat4 m;
  m << w, z, -y, x,
       -z, w, x, y,
       y, -x, w, z,
       -x, -y, -z, w;
  return m;
}

/// Heading angle of the body x axis projected onto the world xy plane.
inline double yaw_of(const Quat& q) {
  const Vec3 bx = q.toRotationMatrix().col(0);
  return std::atan2(bx.y(), bx.x());
}

inline Quat quat_from_yaw(double yaw) {
  return Quat(Eigen::AngleAxisd(yaw, Vec3::UnitZ()));
}

inline double wrap_angle(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a < 0.0) a += 2.0 * kPi;
  return a - kPi;
}

}  // namespace ftmpc
