#include <gtest/gtest.h>

#include <random>

#include "ftmpc/fault_ekf.hpp"

using namespace ftmpc;
using namespace ftmpc::fault;

namespace {

double min_eigenvalue(const BeliefMat& m) { return Eigen::SelfAdjointEigenSolver<BeliefMat>(m).eigenvalues().minCoeff(); }

HealthBelief hover_belief(const MavParams& mav, const EkfParams& p) {
  return initial_belief(p, Vec3::Zero(), mav.hover_thrust() / kNumMotors);
}

ImuMeasurement consistent_measurement(const HealthBelief& b, const MavParams& mav) {
  const Vec4 y = HealthEkf::observe(b);
  return {y.head<3>(), y(3) / mav.mass};
}

}  // namespace

TEST(Logistic, ReferenceValues) {
  EXPECT_DOUBLE_EQ(logistic(0.0), 0.525);
  EXPECT_NEAR(logistic(2.99), 1.0, 1e-3);
  EXPECT_NEAR(logistic_inverse(0.5), -std::log(1.1), 1e-15);
  EXPECT_NEAR(logistic_inverse(0.5), -0.09531, 1e-5);
  for (double y : {0.01, 0.3, 0.5, 0.9, 1.0, 1.04}) EXPECT_NEAR(logistic(logistic_inverse(y)), y, 1e-12);
  EXPECT_LE(logistic(40.0), 1.05);
  EXPECT_GT(logistic(-40.0), 0.0);
}

TEST(Logistic, InverseAndDerivative) {
  for (double h = -6.0; h <= 6.0; h += 0.25) {
    EXPECT_NEAR(logistic_inverse(logistic(h)), h, 1e-9);
    const double fd = (logistic(h + 1e-6) - logistic(h - 1e-6)) / 2e-6;
    EXPECT_NEAR(logistic_derivative(h), fd, 1e-9);
  }
  EXPECT_THROW(logistic_inverse(0.0), ConfigError);
  EXPECT_THROW(logistic_inverse(1.05), ConfigError);
}

TEST(HealthEkf, InitialBelief) {
  const EkfParams p;
  const auto b = initial_belief(p, Vec3(0.1, 0.2, 0.3), 3.0);
  EXPECT_EQ(b.omega(), Vec3(0.1, 0.2, 0.3));
  for (int i = 0; i < kNumMotors; ++i) {
    EXPECT_EQ(b.h(i), p.h_bar);
    EXPECT_EQ(b.f(i), 3.0);
    EXPECT_NEAR(b.sigma_h(i), p.init_sigma_h, 1e-15);
  }
}

TEST(HealthEkf, HealthRelaxesTowardNominalWithoutMeasurements) {
  const MavParams mav;
  const EkfParams p;
  const HealthEkf ekf(mav, p);
  HealthBelief b = hover_belief(mav, p);
  for (int i = 0; i < kNumMotors; ++i) b.mean(3 + i) = 0.0;
  const int ticks = 120;  // 0.3 s at 400 Hz
  for (int k = 0; k < ticks; ++k) b = ekf.predict(b, MotorVec::Constant(b.f(0)), all_normal(), p.dt());
  // Explicit Euler on dh/dt = (h_bar - h) / tau_h with 4 sub-steps per tick.
  const double n = ticks * p.substeps;
  const double euler = p.h_bar * (1.0 - std::pow(1.0 - p.dt() / p.substeps / p.tau_h, n));
  for (int i = 0; i < kNumMotors; ++i) {
    EXPECT_NEAR(b.h(i), euler, 1e-12);
    EXPECT_NEAR(b.h(i), 1.890, 2e-3);
  }
}

TEST(HealthEkf, HoverIsAFixedPoint) {
  const MavParams mav;
  const EkfParams p;
  HealthEkf ekf(mav, p);
  const HealthBelief b0 = hover_belief(mav, p);
  HealthBelief b = b0;
  for (int k = 0; k < 400; ++k) {
    b = ekf.predict(b, MotorVec::Constant(b0.f(0)), all_normal(), p.dt());
    b = ekf.update(b, consistent_measurement(b0, mav));
  }
  EXPECT_LT((b.mean - b0.mean).cwiseAbs().maxCoeff(), 1e-9);
  for (int i = 0; i < kNumMotors; ++i) EXPECT_NEAR(b.health(i), logistic(p.h_bar), 1e-9);
}

TEST(HealthEkf, JosephUpdateMatchesTextbookKalmanStep) {
  const MavParams mav;
  const EkfParams p;
  HealthEkf ekf(mav, p);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    HealthBelief b = hover_belief(mav, p);
    for (int i = 0; i < kBeliefDim; ++i) b.mean(i) += 0.2 * g(rng);
    BeliefMat l = BeliefMat::Random() * 0.1;
    b.cov = l * l.transpose() + 0.01 * BeliefMat::Identity();
    const ImuMeasurement z{Vec3(g(rng), g(rng), g(rng)) * 0.1, 9.81 + 0.5 * g(rng)};

    // Observation Jacobian by central differences on the observation model.
    Eigen::Matrix<double, 4, kBeliefDim> h;
    for (int j = 0; j < kBeliefDim; ++j) {
      HealthBelief bp = b, bm = b;
      bp.mean(j) += 1e-6;
      bm.mean(j) -= 1e-6;
      h.col(j) = (HealthEkf::observe(bp) - HealthEkf::observe(bm)) / 2e-6;
    }
    Mat4 r = Mat4::Zero();
    r.diagonal() << p.sigma_gyro * p.sigma_gyro, p.sigma_gyro * p.sigma_gyro, p.sigma_gyro * p.sigma_gyro,
        p.sigma_T * p.sigma_T;
    const Vec4 y(z.gyro.x(), z.gyro.y(), z.gyro.z(), mav.mass * z.accel_z);
    const Mat4 s = h * b.cov * h.transpose() + r;
    const Eigen::Matrix<double, kBeliefDim, 4> k = b.cov * h.transpose() * s.inverse();
    const BeliefVec mean = b.mean + k * (y - HealthEkf::observe(b));
    const BeliefMat cov = (BeliefMat::Identity() - k * h) * b.cov;

    const auto out = ekf.update(b, z);
    EXPECT_LT((out.mean - mean).cwiseAbs().maxCoeff(), 1e-6) << "trial " << trial;
    EXPECT_LT((out.cov - cov).cwiseAbs().maxCoeff(), 1e-6) << "trial " << trial;
    EXPECT_EQ(out.cov, out.cov.transpose());
  }
}

TEST(HealthEkf, CovarianceStaysPositiveSemidefinite) {
  const MavParams mav;
  const EkfParams p;
  HealthEkf ekf(mav, p);
  std::mt19937_64 rng(10);
  std::normal_distribution<double> g(0.0, 1.0);
  const HealthBelief b0 = hover_belief(mav, p);
  HealthBelief b = b0;
  double worst = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 100000; ++k) {
    b = ekf.predict(b, MotorVec::Constant(b0.f(0)), all_normal(), p.dt());
    ImuMeasurement z = consistent_measurement(b0, mav);
    z.gyro += p.sigma_gyro * Vec3(g(rng), g(rng), g(rng));
    z.accel_z += p.sigma_T / mav.mass * g(rng);
    b = ekf.update(b, z);
    if (k % 500 == 0) worst = std::min(worst, min_eigenvalue(b.cov));
    ASSERT_EQ(b.cov, b.cov.transpose());
  }
  worst = std::min(worst, min_eigenvalue(b.cov));
  EXPECT_GE(worst, 0.0);
}

TEST(FailureDetector, ThreeSigmaRuleAndLatching) {
  const MavParams mav;
  const EkfParams p;
  HealthBelief b = hover_belief(mav, p);
  EXPECT_TRUE(FailureDetector::detect(b).empty());
  b.mean(3 + 1) = -1.0;
  b.cov(3 + 1, 3 + 1) = 0.1 * 0.1;  // L(-0.7) < 0.5
  b.mean(3 + 4) = -0.2;
  b.cov(3 + 4, 3 + 4) = 0.2 * 0.2;  // L(0.4) > 0.5
  EXPECT_EQ(FailureDetector::detect(b), std::set<int>{1});

  FailureDetector det;
  EXPECT_EQ(det.update(b), std::set<int>{1});
  EXPECT_TRUE(det.update(b).empty());
  b.mean(3 + 1) = p.h_bar;
  EXPECT_TRUE(det.update(b).empty());
  EXPECT_EQ(det.failed(), std::set<int>{1});
}

TEST(HealthEkf, NoisyHealthyHoverKeepsHealthNearOne) {
  const MavParams mav;
  const EkfParams p;
  HealthEkf ekf(mav, p);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  const HealthBelief b0 = hover_belief(mav, p);
  HealthBelief b = b0;
  for (int k = 0; k < 400; ++k) {
    b = ekf.predict(b, MotorVec::Constant(b0.f(0)), all_normal(), p.dt());
    ImuMeasurement z = consistent_measurement(b0, mav);
    z.gyro += p.sigma_gyro * Vec3(g(rng), g(rng), g(rng));
    z.accel_z += p.sigma_T / mav.mass * g(rng);
    b = ekf.update(b, z);
  }
  for (int i = 0; i < kNumMotors; ++i) EXPECT_LT(std::abs(b.health(i) - 1.0), 0.05);
}

// Truth drawn from the filter's own stochastic model: the mean normalized
// innovation squared must fall in the two-sided 95% chi-square band.
TEST(HealthEkf, InnovationsAreConsistentWithTheirCovariance) {
  const MavParams mav;
  const EkfParams p;
  HealthEkf ekf(mav, p);
  std::mt19937_64 rng(77);
  std::normal_distribution<double> g(0.0, 1.0);
  const auto a = allocation::allocation_matrix(all_normal(), mav);
  const Mat3 jinv = mav.inertia.inverse();
  const double share = mav.hover_thrust() / kNumMotors;
  HealthBelief b = hover_belief(mav, p);
  BeliefVec truth = b.mean;
  for (int i = 0; i < kBeliefDim; ++i) truth(i) += std::sqrt(b.cov(i, i)) * g(rng);
  const MotorVec f_ref = MotorVec::Constant(share);
  const double hs = p.dt() / p.substeps;
  const int n = 4000;
  double nis = 0.0;
  for (int k = 0; k < n; ++k) {
    for (int s = 0; s < p.substeps; ++s) {
      truth += hs * fault::detail::belief_rate(truth, f_ref, a, mav, jinv, p);
      for (int i = 0; i < 3; ++i) truth(i) += std::sqrt(hs) * p.sigma_omega * g(rng);
      for (int i = 0; i < kNumMotors; ++i) {
        truth(3 + i) += std::sqrt(hs) * p.sigma_h * g(rng);
        truth(3 + kNumMotors + i) += std::sqrt(hs) * p.sigma_f * g(rng);
      }
    }
    b = ekf.predict(b, f_ref, all_normal(), p.dt());
    HealthBelief tb;
    tb.mean = truth;
    const Vec4 y = HealthEkf::observe(tb);
    const ImuMeasurement z{y.head<3>() + p.sigma_gyro * Vec3(g(rng), g(rng), g(rng)),
                           (y(3) + p.sigma_T * g(rng)) / mav.mass};
    b = ekf.update(b, z);
    nis += ekf.last_innovation().nis();
  }
  // chi2(4n) quantiles via the Wilson-Hilferty approximation.
  const double dof = 4.0 * n;
  const auto quantile = [&](double zq) {
    const double c = 2.0 / (9.0 * dof);
    return dof * std::pow(1.0 - c + zq * std::sqrt(c), 3.0);
  };
  EXPECT_GT(nis, quantile(-1.959964));
  EXPECT_LT(nis, quantile(1.959964));
}

TEST(HealthEkf, LostThrustPullsThatHealthBelowTheHealthyRun) {
  const MavParams mav;
  const EkfParams p;
  HealthEkf healthy_ekf(mav, p), cut_ekf(mav, p);
  const double share = mav.hover_thrust() / kNumMotors;
  HealthBelief healthy = hover_belief(mav, p), cut = healthy;
  MotorVec f_true = MotorVec::Constant(share);
  f_true(0) = 0.0;
  const auto a = allocation::allocation_matrix(all_normal(), mav);
  const Mat3 jinv = mav.inertia.inverse();
  Vec3 w = Vec3::Zero();
  const ImuMeasurement still = consistent_measurement(healthy, mav);
  for (int k = 0; k < 80; ++k) {
    const Vec4 wrench = a * f_true;
    w += p.dt() * jinv * (wrench.head<3>() - w.cross(mav.inertia * w));
    healthy = healthy_ekf.update(healthy_ekf.predict(healthy, MotorVec::Constant(share), all_normal(), p.dt()), still);
    cut = cut_ekf.update(cut_ekf.predict(cut, MotorVec::Constant(share), all_normal(), p.dt()),
                         {w, wrench(3) / mav.mass});
    EXPECT_LT(cut.h(0), healthy.h(0)) << "tick " << k;
  }
}

TEST(HealthEkf, RejectsInvalidInput) {
  const MavParams mav;
  EkfParams p;
  p.sigma_f = -1.0;
  EXPECT_THROW(HealthEkf(mav, p), ConfigError);
  p = EkfParams{};
  p.h_bar = 1.0;
  EXPECT_THROW(HealthEkf(mav, p), ConfigError);
  p = EkfParams{};
  p.substeps = 0;
  EXPECT_THROW(HealthEkf(mav, p), ConfigError);

  HealthEkf ekf(mav, EkfParams{});
  const auto b = hover_belief(mav, EkfParams{});
  EXPECT_THROW(ekf.update(b, {Vec3(std::nan(""), 0, 0), 9.81}), NumericalError);
  HealthBelief blown = b;
  blown.mean(0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(ekf.predict(blown, MotorVec::Zero(), all_normal(), 0.0025), FilterReset);
}
