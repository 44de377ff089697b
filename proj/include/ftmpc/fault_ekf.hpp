#pragma once

// Motor health EKF.
//
// State s = [omega (3), h (6), f (6)]. Effective thrust of motor i is
// L(h_i) f_i with the scaled logistic L(h) = 1.05 / (1 + exp(-h)); the body
// wrench follows from A(d) applied to the effective thrusts. Measurements are
// the gyro rate and the collective thrust m * a_z.

#include <array>
#include <cmath>
#include <set>

#include "ftmpc/allocation/matrix.hpp"
#include "ftmpc/types.hpp"

namespace ftmpc::fault {

inline constexpr int kBeliefDim = 3 + 2 * kNumMotors;
inline constexpr double kLogisticScale = 1.05;

using BeliefVec = Eigen::Matrix<double, kBeliefDim, 1>;
using BeliefMat = Eigen::Matrix<double, kBeliefDim, kBeliefDim>;

inline double logistic(double h) { return kLogisticScale / (1.0 + std::exp(-h)); }

inline double logistic_derivative(double h) {
  const double l = logistic(h);
  return l * (1.0 - l / kLogisticScale);
}

/// Inverse of logistic for y in (0, 1.05).
inline double logistic_inverse(double y) {
  if (!(y > 0.0 && y < kLogisticScale)) throw ConfigError("logistic_inverse: argument outside (0, 1.05)");
  return -std::log(kLogisticScale / y - 1.0);
}

struct EkfParams {
  double sigma_omega = 3.16;  // rad/(s sqrt(Hz))
  double sigma_h = 0.31;      // 1/sqrt(Hz)
  double sigma_f = 0.94;      // N/sqrt(Hz)
  double sigma_gyro = 0.01;   // rad/s
  double sigma_T = 0.1;       // N
  double tau_h = 0.3;         // s
  double tau_f = 0.01;        // s
  double h_bar = 2.99;
  double rate_hz = 400.0;
  int substeps = 4;
  // Initial standard deviations.
  double init_sigma_h = 0.1;
  double init_sigma_f = 0.5;
  double init_sigma_omega = 0.05;

  double dt() const { return 1.0 / rate_hz; }

  void validate() const {
    if (!(sigma_omega > 0 && sigma_h > 0 && sigma_f > 0 && sigma_gyro > 0 && sigma_T > 0 && tau_h > 0 &&
          tau_f > 0 && h_bar > 0 && rate_hz > 0 && substeps >= 1))
      throw ConfigError("EKF parameters must be positive");
    if (std::abs(logistic(h_bar) - 1.0) > 1e-3) throw ConfigError("h_bar inconsistent with L(h_bar) = 1");
  }
};

struct ImuMeasurement {
  Vec3 gyro = Vec3::Zero();
  double accel_z = 0.0;  // specific force along body z, m/s^2
};

struct HealthBelief {
  BeliefVec mean = BeliefVec::Zero();
  BeliefMat cov = BeliefMat::Identity();

  Vec3 omega() const { return mean.segment<3>(0); }
  double h(int i) const { return mean(3 + i); }
  double f(int i) const { return mean(3 + kNumMotors + i); }
  double sigma_h(int i) const { return std::sqrt(std::max(cov(3 + i, 3 + i), 0.0)); }

  /// Optimistic health bound L(h_i + 3 sigma_i).
  double health_upper(int i) const { return logistic(h(i) + 3.0 * sigma_h(i)); }
  double health_lower(int i) const { return logistic(h(i) - 3.0 * sigma_h(i)); }
  double health(int i) const { return logistic(h(i)); }
};

struct Innovation {
  Vec4 residual = Vec4::Zero();
  Mat4 covariance = Mat4::Identity();

  /// Normalized innovation squared.
  double nis() const { return residual.dot(covariance.ldlt().solve(residual)); }
};

class FilterReset : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

inline HealthBelief initial_belief(const EkfParams& p, const Vec3& omega0, double hover_share) {
  HealthBelief b;
  b.mean.segment<3>(0) = omega0;
  b.mean.segment<kNumMotors>(3).setConstant(p.h_bar);
  b.mean.segment<kNumMotors>(3 + kNumMotors).setConstant(hover_share);
  b.cov.setZero();
  b.cov.diagonal().segment<3>(0).setConstant(p.init_sigma_omega * p.init_sigma_omega);
  b.cov.diagonal().segment<kNumMotors>(3).setConstant(p.init_sigma_h * p.init_sigma_h);
  b.cov.diagonal().segment<kNumMotors>(3 + kNumMotors).setConstant(p.init_sigma_f * p.init_sigma_f);
  return b;
}

namespace detail {

inline BeliefVec belief_rate(const BeliefVec& s, const MotorVec& f_ref, const allocation::AllocationMatrix& a,
                             const MavParams& mav, const Mat3& jinv, const EkfParams& p) {
  MotorVec eff;
  for (int i = 0; i < kNumMotors; ++i) eff(i) = logistic(s(3 + i)) * s(3 + kNumMotors + i);
  const Vec3 moment = a.topRows<3>() * eff;
  const Vec3 w = s.segment<3>(0);
  BeliefVec ds;
  ds.segment<3>(0) = jinv * (moment - w.cross(mav.inertia * w));
  ds.segment<kNumMotors>(3) = (MotorVec::Constant(p.h_bar) - s.segment<kNumMotors>(3)) / p.tau_h;
  ds.segment<kNumMotors>(3 + kNumMotors) = (f_ref - s.segment<kNumMotors>(3 + kNumMotors)) / p.tau_f;
  return ds;
}

inline BeliefMat belief_jacobian(const BeliefVec& s, const allocation::AllocationMatrix& a, const MavParams& mav,
                                 const Mat3& jinv, const EkfParams& p) {
  BeliefMat fjac = BeliefMat::Zero();
  const Vec3 w = s.segment<3>(0);
  fjac.block<3, 3>(0, 0) = jinv * (skew(mav.inertia * w) - skew(w) * mav.inertia);
  for (int i = 0; i < kNumMotors; ++i) {
    const double h = s(3 + i);
    const double f = s(3 + kNumMotors + i);
    fjac.block<3, 1>(0, 3 + i) = jinv * a.block<3, 1>(0, i) * (logistic_derivative(h) * f);
    fjac.block<3, 1>(0, 3 + kNumMotors + i) = jinv * a.block<3, 1>(0, i) * logistic(h);
    fjac(3 + i, 3 + i) = -1.0 / p.tau_h;
    fjac(3 + kNumMotors + i, 3 + kNumMotors + i) = -1.0 / p.tau_f;
  }
  return fjac;
}

}  // namespace detail

/// Health EKF for one vehicle. Owned by a single stepping context.
class HealthEkf {
 public:
  HealthEkf(const MavParams& mav, const EkfParams& params)
      : mav_(mav), params_(params), jinv_(mav.inertia.inverse()) {
    params_.validate();
  }

  const EkfParams& params() const { return params_; }
  const Innovation& last_innovation() const { return innovation_; }

  /// Propagate over dt with Euler sub-steps. f_ref and d are the most recent
  /// allocation output, held constant over the interval.
  HealthBelief predict(const HealthBelief& b, const MotorVec& f_ref, const DirectionVector& d, double dt) const {
    const allocation::AllocationMatrix a = allocation::allocation_matrix(d, mav_);
    const int n = params_.substeps;
    const double h = dt / n;
    BeliefMat qc = BeliefMat::Zero();
    qc.diagonal().segment<3>(0).setConstant(params_.sigma_omega * params_.sigma_omega);
    qc.diagonal().segment<kNumMotors>(3).setConstant(params_.sigma_h * params_.sigma_h);
    qc.diagonal().segment<kNumMotors>(3 + kNumMotors).setConstant(params_.sigma_f * params_.sigma_f);

    HealthBelief out = b;
    for (int k = 0; k < n; ++k) {
      const BeliefMat phi = BeliefMat::Identity() + h * detail::belief_jacobian(out.mean, a, mav_, jinv_, params_);
      out.mean += h * detail::belief_rate(out.mean, f_ref, a, mav_, jinv_, params_);
      out.cov = phi * out.cov * phi.transpose() + h * qc;
    }
    out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
    if (!out.mean.allFinite() || !out.cov.allFinite()) throw FilterReset("EKF predict produced non-finite values");
    return out;
  }

  /// Predicted observation [omega; sum_i L(h_i) f_i].
  static Vec4 observe(const HealthBelief& b) {
    double t = 0.0;
    for (int i = 0; i < kNumMotors; ++i) t += b.health(i) * b.f(i);
    return {b.mean(0), b.mean(1), b.mean(2), t};
  }

  /// EKF update with gyro and collective thrust m * a_z (Joseph form).
  HealthBelief update(const HealthBelief& b, const ImuMeasurement& z) {
    if (!z.gyro.allFinite() || !std::isfinite(z.accel_z)) throw NumericalError("EKF update: non-finite measurement");
    Eigen::Matrix<double, 4, kBeliefDim> hm = Eigen::Matrix<double, 4, kBeliefDim>::Zero();
    hm.block<3, 3>(0, 0).setIdentity();
    for (int i = 0; i < kNumMotors; ++i) {
      hm(3, 3 + i) = logistic_derivative(b.h(i)) * b.f(i);
      hm(3, 3 + kNumMotors + i) = b.health(i);
    }
    const Vec4 zv(z.gyro.x(), z.gyro.y(), z.gyro.z(), mav_.mass * z.accel_z);
    Mat4 r = Mat4::Zero();
    r.diagonal().head<3>().setConstant(params_.sigma_gyro * params_.sigma_gyro);
    r(3, 3) = params_.sigma_T * params_.sigma_T;

    innovation_.residual = zv - observe(b);
    innovation_.covariance = hm * b.cov * hm.transpose() + r;
    const Eigen::LDLT<Mat4> ldlt(innovation_.covariance);
    if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 0.0).all())
      throw NumericalError("EKF update: innovation covariance singular");
    const Eigen::Matrix<double, kBeliefDim, 4> gain = ldlt.solve(hm * b.cov).transpose();

    HealthBelief out;
    out.mean = b.mean + gain * innovation_.residual;
    const BeliefMat ikh = BeliefMat::Identity() - gain * hm;
    out.cov = ikh * b.cov * ikh.transpose() + gain * r * gain.transpose();
    out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
    return out;
  }

 private:
  MavParams mav_;
  EkfParams params_;
  Mat3 jinv_;
  Innovation innovation_;
};

/// Latching 3-sigma detector: motor i fails once L(h_i + 3 sigma_i) < 0.5.
class FailureDetector {
 public:
  explicit FailureDetector(double threshold = 0.5) : threshold_(threshold) {}

  /// Returns motors newly flagged by this belief.
  std::set<int> update(const HealthBelief& b) {
    std::set<int> fresh;
    for (int i : detect(b, threshold_)) {
      if (failed_.insert(i).second) fresh.insert(i);
    }
    return fresh;
  }

  const std::set<int>& failed() const { return failed_; }

  /// Stateless check of the rule on one belief.
  static std::set<int> detect(const HealthBelief& b, double threshold = 0.5) {
    std::set<int> out;
    for (int i = 0; i < kNumMotors; ++i)
      if (b.health_upper(i) < threshold) out.insert(i);
    return out;
  }

 private:
  double threshold_;
  std::set<int> failed_;
};

}  // namespace ftmpc::fault
