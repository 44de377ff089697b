#pragma once

#include <cstdint>
#include <random>

#include "ftmpc/fault_ekf.hpp"
#include "ftmpc/types.hpp"

namespace ftmpc::sim {

/// Seeded Gaussian noise stream for the synthetic IMU.
class NoiseSource {
 public:
  explicit NoiseSource(std::uint64_t seed, bool enabled = true) : rng_(seed), enabled_(enabled) {}

  double gaussian(double sigma) {
    if (!enabled_) return 0.0;
    return sigma * normal_(rng_);
  }

  bool enabled() const { return enabled_; }

 private:
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  bool enabled_;
};

/// Gyro = omega + N(0, sigma_gyro^2); accel_z = T/m (+ [omega x v_B]_z) + N(0, (sigma_T/m)^2).
inline fault::ImuMeasurement imu_measure(const MavState& truth, double true_thrust, double mass,
                                         const fault::EkfParams& noise_params, bool cross_term, NoiseSource& noise) {
  fault::ImuMeasurement z;
  const Vec3 n(noise.gaussian(noise_params.sigma_gyro), noise.gaussian(noise_params.sigma_gyro),
               noise.gaussian(noise_params.sigma_gyro));
  z.gyro = truth.omega_B + n;
  double az = true_thrust / mass;
  if (cross_term) {
    const Vec3 v_b = truth.q_WB.conjugate() * truth.v_WB;
    az += truth.omega_B.cross(v_b).z();
  }
  z.accel_z = az + noise.gaussian(noise_params.sigma_T / mass);
  return z;
}

}  // namespace ftmpc::sim
