#pragma once

#include <array>
#include <cmath>

#include "ftmpc/common.hpp"
#include "ftmpc/quaternion.hpp"

namespace ftmpc {

/// Control state x = [r_WB, q_WB, v_WB, omega_B].
struct MavState {
  Vec3 r_WB = Vec3::Zero();
  Quat q_WB = Quat::Identity();
  Vec3 v_WB = Vec3::Zero();
  Vec3 omega_B = Vec3::Zero();

  bool finite() const {
    return r_WB.allFinite() && q_WB.coeffs().allFinite() && v_WB.allFinite() && omega_B.allFinite();
  }
};

/// Control input u = [M_B, T].
struct ControlInput {
  Vec3 moment_B = Vec3::Zero();
  double thrust = 0.0;

  Vec4 as_vector() const { return {moment_B.x(), moment_B.y(), moment_B.z(), thrust}; }
  static ControlInput from_vector(const Vec4& u) { return {u.head<3>(), u(3)}; }
};

/// Rotation direction per motor: false = normal (positive thrust), true = inverted.
using DirectionVector = std::array<bool, kNumMotors>;

inline DirectionVector all_normal() { return DirectionVector{}; }

struct MavParams {
  double mass = 2.0;
  Mat3 inertia = Vec3(0.03, 0.03, 0.05).asDiagonal();
  Vec3 gravity = Vec3(0.0, 0.0, -9.81);
  double arm_length = 0.275;
  // Angular position of each arm, measured from body +x towards +y. The
  // default is the hexacopter layout whose allocation rows read
  // l*[s30, 1, s30, -s30, -1, -s30] (roll) and l*[-c30, 0, c30, c30, 0, -c30] (pitch).
  std::array<double, kNumMotors> motor_angles = {kPi / 6.0, kPi / 6.0 * 3.0, kPi / 6.0 * 5.0,
                                                 kPi / 6.0 * 7.0, kPi / 6.0 * 9.0, kPi / 6.0 * 11.0};
  double kT_pos = 1.2e-5;
  double kT_neg = 0.8e-5;
  double kM_pos = 0.016;
  double kM_neg = 0.012;
  double f_min_pos = 0.0;
  double f_max_pos = 8.5;
  double f_min_neg = -5.0;
  double f_max_neg = 0.0;

  double hover_thrust() const { return -mass * gravity.z(); }

  void validate() const {
    if (!(mass > 0.0)) throw ConfigError("mass must be positive");
    if (!(arm_length > 0.0)) throw ConfigError("arm_length must be positive");
    if ((inertia - inertia.transpose()).norm() > 1e-12 * inertia.norm())
      throw ConfigError("inertia must be symmetric");
    Eigen::SelfAdjointEigenSolver<Mat3> es(inertia);
    if (es.eigenvalues().minCoeff() <= 0.0) throw ConfigError("inertia must be positive definite");
    if (!(f_min_neg <= f_max_neg && f_max_neg <= 0.0 && 0.0 <= f_min_pos && f_min_pos <= f_max_pos))
      throw ConfigError("thrust bounds must satisfy f_min_neg <= f_max_neg <= 0 <= f_min_pos <= f_max_pos");
    if (!(kT_pos > 0.0 && kT_neg > 0.0 && kM_pos > 0.0 && kM_neg > 0.0))
      throw ConfigError("motor coefficients must be positive");
  }
};

}  // namespace ftmpc
