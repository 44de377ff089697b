#pragma once

// Tracking error functions and their Jacobians in minimal coordinates.

#include "ftmpc/dynamics.hpp"

namespace ftmpc::nmpc {

struct ReferencePoint {
  Vec3 r_ref = Vec3::Zero();
  Quat q_ref = Quat::Identity();
  Vec3 v_ref = Vec3::Zero();
  Vec3 omega_ref = Vec3::Zero();  // in the reference body frame
  ControlInput u_ref;

  static ReferencePoint hover(const Vec3& position, double yaw, const MavParams& params) {
    ReferencePoint p;
    p.r_ref = position;
    p.q_ref = quat_from_yaw(yaw);
    p.u_ref.thrust = params.hover_thrust();
    return p;
  }
};

struct TrackingErrors {
  Vec3 e_r;
  Vec3 e_v;
  Vec3 e_omega;
  Vec3 e_q;
  Vec4 e_u;
};

/// Relative attitude q⁻¹ ⊗ q_ref, sign-flipped so its scalar part is >= 0.
inline Quat relative_attitude(const Quat& q, const Quat& q_ref) {
  return canonical(q.conjugate() * q_ref);
}

inline TrackingErrors tracking_errors(const MavState& x, const ReferencePoint& ref, const ControlInput& u) {
  const Quat p = relative_attitude(x.q_WB, ref.q_ref);
  TrackingErrors e;
  e.e_r = x.r_WB - ref.r_ref;
  e.e_v = x.v_WB - ref.v_ref;
  e.e_omega = x.omega_B - p.toRotationMatrix() * ref.omega_ref;
  e.e_q = p.vec();
  e.e_u = u.as_vector() - ref.u_ref.as_vector();
  return e;
}

/// Stacked state residual [e_r, e_q, e_v, e_omega] (ordered like the tangent
/// space) and its Jacobian with respect to x ⊞ dx at dx = 0.
struct StateResidual {
  TangentVec e;
  TangentMat J;
};

inline StateResidual state_residual(const MavState& x, const ReferencePoint& ref) {
  const Quat p = relative_attitude(x.q_WB, ref.q_ref);
  const Mat3 c = p.toRotationMatrix();
  const Vec3 w_ref_b = c * ref.omega_ref;
  StateResidual s;
  s.e.segment<3>(0) = x.r_WB - ref.r_ref;
  s.e.segment<3>(3) = p.vec();
  s.e.segment<3>(6) = x.v_WB - ref.v_ref;
  s.e.segment<3>(9) = x.omega_B - w_ref_b;
  s.J.setZero();
  s.J.block<3, 3>(0, 0).setIdentity();
  // p(dtheta) = exp(dtheta)⁻¹ ⊗ p  =>  d vec(p) / d dtheta = -1/2 (p_w I - [p_v]x)
  s.J.block<3, 3>(3, 3) = -0.5 * (p.w() * Mat3::Identity() - skew(p.vec()));
  s.J.block<3, 3>(6, 6).setIdentity();
  s.J.block<3, 3>(9, 3) = -skew(w_ref_b);
  s.J.block<3, 3>(9, 9).setIdentity();
  return s;
}

}  // namespace ftmpc::nmpc
