#pragma once

// Rigid-body Newton-Euler dynamics of the multirotor and its RK4 discretization.

#include "ftmpc/allocation/matrix.hpp"
#include "ftmpc/quaternion.hpp"
#include "ftmpc/types.hpp"

namespace ftmpc {

inline constexpr int kAmbientDim = 13;  // r(3) q(4) v(3) omega(3)
inline constexpr int kTangentDim = 12;  // dr dtheta dv domega
inline constexpr int kInputDim = 4;

using AmbientVec = Eigen::Matrix<double, kAmbientDim, 1>;
using AmbientJac = Eigen::Matrix<double, kAmbientDim, kAmbientDim>;
using AmbientInputJac = Eigen::Matrix<double, kAmbientDim, kInputDim>;
using TangentVec = Eigen::Matrix<double, kTangentDim, 1>;
using TangentMat = Eigen::Matrix<double, kTangentDim, kTangentDim>;
using TangentInputMat = Eigen::Matrix<double, kTangentDim, kInputDim>;

struct StateDerivative {
  Vec3 r_dot;
  Vec4 q_dot;  // (x, y, z, w)
  Vec3 v_dot;
  Vec3 omega_dot;
};

namespace detail {

inline AmbientVec pack(const MavState& s) {
  AmbientVec x;
  x << s.r_WB, s.q_WB.coeffs(), s.v_WB, s.omega_B;
  return x;
}

// Quaternion is copied as-is; callers normalize when needed.
inline MavState unpack(const AmbientVec& x) {
  MavState s;
  s.r_WB = x.segment<3>(0);
  s.q_WB.coeffs() = x.segment<4>(3);
  s.v_WB = x.segment<3>(7);
  s.omega_B = x.segment<3>(10);
  return s;
}

// Third column of the rotation matrix, in the unit-quaternion form.
inline Vec3 body_z_in_world(const Vec4& q) {
  const double x = q(0), y = q(1), z = q(2), w = q(3);
  return {2.0 * (x * z + w * y), 2.0 * (y * z - w * x), 1.0 - 2.0 * (x * x + y * y)};
}

inline Eigen::Matrix<double, 3, 4> body_z_in_world_jacobian(const Vec4& q) {
  const double x = q(0), y = q(1), z = q(2), w = q(3);
  Eigen::Matrix<double, 3, 4> j;
  j << 2.0 * z, 2.0 * w, 2.0 * x, 2.0 * y,
       -2.0 * w, 2.0 * z, 2.0 * y, -2.0 * x,
       -4.0 * x, -4.0 * y, 0.0, 0.0;
  return j;
}

inline AmbientVec ambient_rate(const AmbientVec& x, const Vec4& u, const MavParams& p, const Mat3& inertia_inv) {
  const Vec4 q = x.segment<4>(3);
  const Vec3 omega = x.segment<3>(10);
  AmbientVec dx;
  dx.segment<3>(0) = x.segment<3>(7);
  // q_dot = 1/2 q ⊗ [omega, 0]
  Quat qq;
  qq.coeffs() = q;
  dx.segment<4>(3) = 0.5 * quat_left_matrix(qq).leftCols<3>() * omega;
  dx.segment<3>(7) = (u(3) / p.mass) * body_z_in_world(q) + p.gravity;
  dx.segment<3>(10) = inertia_inv * (u.head<3>() - omega.cross(p.inertia * omega));
  return dx;
}

inline void ambient_rate_jacobian(const AmbientVec& x, const Vec4& u, const MavParams& p, const Mat3& inertia_inv,
                                  AmbientJac& fx, AmbientInputJac& fu) {
  const Vec4 q = x.segment<4>(3);
  const Vec3 omega = x.segment<3>(10);
  fx.setZero();
  fu.setZero();
  fx.block<3, 3>(0, 7).setIdentity();
  Quat qq;
  qq.coeffs() = q;
  Quat wq(0.0, omega.x(), omega.y(), omega.z());
  fx.block<4, 4>(3, 3) = 0.5 * quat_right_matrix(wq);
  fx.block<4, 3>(3, 10) = 0.5 * quat_left_matrix(qq).leftCols<3>();
  fx.block<3, 4>(7, 3) = (u(3) / p.mass) * body_z_in_world_jacobian(q);
  fu.block<3, 1>(7, 3) = body_z_in_world(q) / p.mass;
  fx.block<3, 3>(10, 10) = inertia_inv * (skew(p.inertia * omega) - skew(omega) * p.inertia);
  fu.block<3, 3>(10, 0) = inertia_inv;
}

inline AmbientVec rk4(const AmbientVec& x, const Vec4& u, const MavParams& p, const Mat3& inertia_inv, double dt) {
  const AmbientVec k1 = ambient_rate(x, u, p, inertia_inv);
  const AmbientVec k2 = ambient_rate(x + 0.5 * dt * k1, u, p, inertia_inv);
  const AmbientVec k3 = ambient_rate(x + 0.5 * dt * k2, u, p, inertia_inv);
  const AmbientVec k4 = ambient_rate(x + dt * k3, u, p, inertia_inv);
  AmbientVec out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  out.segment<4>(3).normalize();
  return out;
}

}  // namespace detail

/// Time derivative of the state under input u (Newton-Euler, body rates).
inline StateDerivative continuous_dynamics(const MavState& state, const ControlInput& input, const MavParams& params) {
  const Mat3 jinv = params.inertia.inverse();
  const AmbientVec dx = detail::ambient_rate(detail::pack(state), input.as_vector(), params, jinv);
  return {dx.segment<3>(0), dx.segment<4>(3), dx.segment<3>(7), dx.segment<3>(10)};
}

/// One classical RK4 step of length dt with the input held constant; the
/// attitude quaternion is re-normalized afterwards.
inline MavState integrate_step(const MavState& state, const ControlInput& input, const MavParams& params, double dt) {
  if (!(dt > 0.0)) throw ConfigError("integrate_step: dt must be positive");
  if (!state.finite() || !input.as_vector().allFinite())
    throw NumericalError("integrate_step: non-finite state or input");
  const Mat3 jinv = params.inertia.inverse();
  return detail::unpack(detail::rk4(detail::pack(state), input.as_vector(), params, jinv, dt));
}

/// x ⊞ dx on R³ × S³ × R⁶.
inline MavState state_boxplus(const MavState& s, const TangentVec& dx) {
  MavState out;
  out.r_WB = s.r_WB + dx.segment<3>(0);
  out.q_WB = quat_boxplus(s.q_WB, dx.segment<3>(3));
  out.v_WB = s.v_WB + dx.segment<3>(6);
  out.omega_B = s.omega_B + dx.segment<3>(9);
  return out;
}

/// x ⊟ x_bar, the inverse of state_boxplus.
inline TangentVec state_boxminus(const MavState& s, const MavState& s_bar) {
  TangentVec dx;
  dx.segment<3>(0) = s.r_WB - s_bar.r_WB;
  dx.segment<3>(3) = quat_boxminus(s.q_WB, s_bar.q_WB);
  dx.segment<3>(6) = s.v_WB - s_bar.v_WB;
  dx.segment<3>(9) = s.omega_B - s_bar.omega_B;
  return dx;
}

/// Wrench [M_B, T] = A(d) f produced by per-motor thrusts f.
inline ControlInput motor_wrench(const MotorVec& f, const DirectionVector& d, const MavParams& params) {
  return ControlInput::from_vector(allocation::allocation_matrix(d, params) * f);
}

/// Discrete dynamics f_d(x, u) with its exact Jacobians in minimal
/// coordinates. A maps a perturbation of x (tangent at x) to a perturbation
/// of the successor (tangent at f_d(x, u)); B does the same for u.
struct DiscreteLinearization {
  MavState next;
  TangentMat A;
  TangentInputMat B;
};

class DiscreteDynamics {
 public:
  DiscreteDynamics(const MavParams& params, double dt)
      : params_(params), inertia_inv_(params.inertia.inverse()), dt_(dt) {
    if (!(dt > 0.0)) throw ConfigError("DiscreteDynamics: dt must be positive");
  }

  const MavParams& params() const { return params_; }
  double dt() const { return dt_; }

  MavState step(const MavState& x, const Vec4& u) const {
    return detail::unpack(detail::rk4(detail::pack(x), u, params_, inertia_inv_, dt_));
  }

  /// Chain rule through the four RK4 stages in ambient coordinates, wrapped by
  /// the boxplus chart at the input and the boxminus chart at the output.
  DiscreteLinearization linearize(const MavState& x, const Vec4& u) const {
    const AmbientVec x0 = detail::pack(x);
    const double h = dt_;

    AmbientJac f1x, f2x, f3x, f4x;
    AmbientInputJac f1u, f2u, f3u, f4u;
    const AmbientVec k1 = detail::ambient_rate(x0, u, params_, inertia_inv_);
    detail::ambient_rate_jacobian(x0, u, params_, inertia_inv_, f1x, f1u);
    const AmbientVec x2 = x0 + 0.5 * h * k1;
    const AmbientVec k2 = detail::ambient_rate(x2, u, params_, inertia_inv_);
    detail::ambient_rate_jacobian(x2, u, params_, inertia_inv_, f2x, f2u);
    const AmbientVec x3 = x0 + 0.5 * h * k2;
    const AmbientVec k3 = detail::ambient_rate(x3, u, params_, inertia_inv_);
    detail::ambient_rate_jacobian(x3, u, params_, inertia_inv_, f3x, f3u);
    const AmbientVec x4 = x0 + h * k3;
    const AmbientVec k4 = detail::ambient_rate(x4, u, params_, inertia_inv_);
    detail::ambient_rate_jacobian(x4, u, params_, inertia_inv_, f4x, f4u);

    // Stage sensitivities with respect to the ambient state and the input.
    const AmbientJac d1x = f1x;
    const AmbientJac d2x = f2x + (0.5 * h) * (f2x * d1x);
    const AmbientJac d3x = f3x + (0.5 * h) * (f3x * d2x);
    const AmbientJac d4x = f4x + h * (f4x * d3x);
    const AmbientInputJac d1u = f1u;
    const AmbientInputJac d2u = f2u + (0.5 * h) * (f2x * d1u);
    const AmbientInputJac d3u = f3u + (0.5 * h) * (f3x * d2u);
    const AmbientInputJac d4u = f4u + h * (f4x * d3u);

    AmbientVec x1 = x0 + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    const AmbientJac jx = AmbientJac::Identity() + (h / 6.0) * (d1x + 2.0 * d2x + 2.0 * d3x + d4x);
    const AmbientInputJac ju = (h / 6.0) * (d1u + 2.0 * d2u + 2.0 * d3u + d4u);

    const double qnorm = x1.segment<4>(3).norm();
    x1.segment<4>(3) /= qnorm;
    const MavState next = detail::unpack(x1);

    // Input chart: ambient = x ⊞ dx, derivative at dx = 0.
    Eigen::Matrix<double, kAmbientDim, kTangentDim> chart_in = Eigen::Matrix<double, kAmbientDim, kTangentDim>::Zero();
    chart_in.block<3, 3>(0, 0).setIdentity();
    chart_in.block<4, 3>(3, 3) = 0.5 * quat_left_matrix(x.q_WB).leftCols<3>();
    chart_in.block<3, 3>(7, 6).setIdentity();
    chart_in.block<3, 3>(10, 9).setIdentity();

    // Output chart: normalization followed by ⊟ next, derivative at next.
    const Vec4 qn = next.q_WB.coeffs();
    const Mat4 normalize_jac = (Mat4::Identity() - qn * qn.transpose()) / qnorm;
    Eigen::Matrix<double, kTangentDim, kAmbientDim> chart_out = Eigen::Matrix<double, kTangentDim, kAmbientDim>::Zero();
    chart_out.block<3, 3>(0, 0).setIdentity();
    chart_out.block<3, 4>(3, 3) = 2.0 * quat_left_matrix(next.q_WB.conjugate()).topRows<3>() * normalize_jac;
    chart_out.block<3, 3>(6, 7).setIdentity();
    chart_out.block<3, 3>(9, 10).setIdentity();

    DiscreteLinearization lin;
    lin.next = next;
    lin.A = chart_out * jx * chart_in;
    lin.B = chart_out * ju;
    return lin;
  }

 private:
  MavParams params_;
  Mat3 inertia_inv_;
  double dt_;
};

/// Continuous-time error-state Jacobians around (x, u) in the coordinates
/// [dr, dtheta, dv, domega]; the attitude rows follow
/// dtheta_dot = domega - omega × dtheta.
inline void continuous_error_jacobians(const MavState& x, const ControlInput& u, const MavParams& params,
                                       TangentMat& a, TangentInputMat& b) {
  const Mat3 jinv = params.inertia.inverse();
  const Mat3 c = x.q_WB.toRotationMatrix();
  const Vec3 w = x.omega_B;
  a.setZero();
  b.setZero();
  a.block<3, 3>(0, 6).setIdentity();
  a.block<3, 3>(3, 3) = -skew(w);
  a.block<3, 3>(3, 9).setIdentity();
  a.block<3, 3>(6, 3) = -(u.thrust / params.mass) * c * skew(Vec3::UnitZ());
  a.block<3, 3>(9, 9) = jinv * (skew(params.inertia * w) - skew(w) * params.inertia);
  b.block<3, 1>(6, 3) = c.col(2) / params.mass;
  b.block<3, 3>(9, 0) = jinv;
}

}  // namespace ftmpc
