#pragma once

#include <cmath>

#include "ftmpc/types.hpp"

namespace ftmpc::allocation {

using AllocationMatrix = Eigen::Matrix<double, 4, kNumMotors>;

/// Yaw moment ratio of motor i for the given rotation direction.
inline double moment_ratio(bool inverted, const MavParams& params) {
  return inverted ? params.kM_neg : params.kM_pos;
}

/// A(d): maps motor thrusts to [M_x, M_y, M_z, T].
///
/// Column i is [l sin(a_i), -l cos(a_i), ±k_M(d_i), 1] where a_i is the arm
/// angle; the yaw sign alternates starting with + on the first motor.
inline AllocationMatrix allocation_matrix(const DirectionVector& d, const MavParams& params) {
  AllocationMatrix a;
  const double l = params.arm_length;
  for (int i = 0; i < kNumMotors; ++i) {
    const double ang = params.motor_angles[static_cast<std::size_t>(i)];
    const double sign = (i % 2 == 0) ? 1.0 : -1.0;
    a(0, i) = l * std::sin(ang);
    a(1, i) = -l * std::cos(ang);
    a(2, i) = sign * moment_ratio(d[static_cast<std::size_t>(i)], params);
    a(3, i) = 1.0;
  }
  return a;
}

}  // namespace ftmpc::allocation
