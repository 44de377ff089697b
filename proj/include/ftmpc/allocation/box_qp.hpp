#pragma once

// Primal active-set solver for the weighted, regularized, box-constrained
// least-squares problem
//
//   min_f  ||A f - u||_W^2 + lambda ||f||^2   s.t.  lb <= f <= ub
//
// with A 4 x n, n <= 6. Every matrix lives on the stack.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "ftmpc/common.hpp"

namespace ftmpc::allocation {

using WrenchVec = Vec4;
using WeightMat = Mat4;

struct BoxQpResult {
  MotorVec f = MotorVec::Zero();
  double cost = 0.0;      // full objective
  double residual = 0.0;  // ||A f - u||_W^2 only
  int iterations = 0;
};

enum class BoundState : unsigned char { free, lower, upper };

namespace detail {

template <int MaxN>
using DynMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, MaxN, MaxN>;
template <int MaxN>
using DynVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, MaxN, 1>;

}  // namespace detail

/// Objective value ||A f - u||_W^2 + lambda ||f||^2.
template <typename MatA>
double box_qp_objective(const MatA& a, const WrenchVec& u, const WeightMat& w, double lambda, const MotorVec& f) {
  const WrenchVec r = a * f - u;
  return r.dot(w * r) + lambda * f.squaredNorm();
}

/// Gradient of the objective.
template <typename MatA>
MotorVec box_qp_gradient(const MatA& a, const WrenchVec& u, const WeightMat& w, double lambda, const MotorVec& f) {
  return 2.0 * a.transpose() * (w * (a * f - u)) + 2.0 * lambda * f;
}

/// Largest violation of the box KKT conditions (projected gradient norm).
template <typename MatA>
double box_qp_kkt_residual(const MatA& a, const WrenchVec& u, const WeightMat& w, double lambda, const MotorVec& f,
                           const MotorVec& lb, const MotorVec& ub) {
  const MotorVec g = box_qp_gradient(a, u, w, lambda, f);
  double worst = 0.0;
  for (int i = 0; i < kNumMotors; ++i) {
    double gi = g(i);
    const bool at_lb = f(i) <= lb(i);
    const bool at_ub = f(i) >= ub(i);
    if (at_lb && at_ub) continue;
    if (at_lb) gi = std::min(gi, 0.0);
    if (at_ub) gi = std::max(gi, 0.0);
    worst = std::max(worst, std::abs(gi));
  }
  return worst;
}

class BoxQpSolver {
 public:
  BoxQpSolver(const WeightMat& w, double lambda) : w_(w), lambda_(lambda) {
    if (lambda < 0.0) throw ConfigError("allocation regularizer must be non-negative");
    Eigen::SelfAdjointEigenSolver<WeightMat> es(w);
    if (es.eigenvalues().minCoeff() < -1e-12) throw ConfigError("allocation weight must be PSD");
    w_pd_ = es.eigenvalues().minCoeff() > 1e-12;
    if (w_pd_) w_inv_ = w.inverse();
  }

  const WeightMat& weight() const { return w_; }
  double lambda() const { return lambda_; }

  template <typename MatA>
  BoxQpResult solve(const MatA& a, const WrenchVec& u, const MotorVec& lb, const MotorVec& ub) const {
    for (int i = 0; i < kNumMotors; ++i)
      if (!(lb(i) <= ub(i))) throw ConfigError("allocation bounds inconsistent (lb > ub)");

    std::array<BoundState, kNumMotors> state{};
    MotorVec f;
    for (int i = 0; i < kNumMotors; ++i) {
      if (lb(i) == ub(i)) {
        state[i] = BoundState::lower;
        f(i) = lb(i);
      } else {
        state[i] = BoundState::free;
        f(i) = std::clamp(0.0, lb(i), ub(i));
      }
    }

    BoxQpResult res;
    constexpr int kMaxIter = 64;
    for (int iter = 1; iter <= kMaxIter; ++iter) {
      res.iterations = iter;
      const MotorVec target = subproblem(a, u, f, state);
      // Step towards the subproblem minimizer, stopping at the first bound.
      double alpha = 1.0;
      int blocking = -1;
      for (int i = 0; i < kNumMotors; ++i) {
        if (state[i] != BoundState::free) continue;
        const double step = target(i) - f(i);
        if (step > 0.0 && target(i) > ub(i)) {
          const double ai = (ub(i) - f(i)) / step;
          if (ai < alpha) { alpha = ai; blocking = i; }
        } else if (step < 0.0 && target(i) < lb(i)) {
          const double ai = (lb(i) - f(i)) / step;
          if (ai < alpha) { alpha = ai; blocking = i; }
        }
      }
      for (int i = 0; i < kNumMotors; ++i)
        if (state[i] == BoundState::free) f(i) += alpha * (target(i) - f(i));

      if (blocking >= 0) {
        const bool upper = target(blocking) > ub(blocking);
        state[blocking] = upper ? BoundState::upper : BoundState::lower;
        f(blocking) = upper ? ub(blocking) : lb(blocking);
        continue;
      }

      // Subproblem optimum is feasible: check the bound multipliers.
      const MotorVec g = box_qp_gradient(a, u, w_, lambda_, f);
      int release = -1;
      double worst = 0.0;
      const double tol = 1e-12 * (1.0 + g.cwiseAbs().maxCoeff());
      for (int i = 0; i < kNumMotors; ++i) {
        if (lb(i) == ub(i) || state[i] == BoundState::free) continue;
        const double violation = state[i] == BoundState::lower ? -g(i) : g(i);
        if (violation > tol && violation > worst) { worst = violation; release = i; }
      }
      if (release < 0) break;
      state[release] = BoundState::free;
    }

    res.f = f;
    const WrenchVec r = a * f - u;
    res.residual = r.dot(w_ * r);
    res.cost = res.residual + lambda_ * f.squaredNorm();
    return res;
  }

 private:
  // Minimizer over the free coordinates with the bound ones held fixed.
  template <typename MatA>
  MotorVec subproblem(const MatA& a, const WrenchVec& u, const MotorVec& f,
                      const std::array<BoundState, kNumMotors>& state) const {
    std::array<int, kNumMotors> idx{};
    int nfree = 0;
    WrenchVec r = u;
    for (int i = 0; i < kNumMotors; ++i) {
      if (state[i] == BoundState::free) idx[nfree++] = i;
      else r -= a.col(i) * f(i);
    }
    MotorVec out = f;
    if (nfree == 0) return out;

    Eigen::Matrix<double, 4, Eigen::Dynamic, 0, 4, kNumMotors> af(4, nfree);
    for (int k = 0; k < nfree; ++k) af.col(k) = a.col(idx[k]);

    detail::DynVec<kNumMotors> ff(nfree);
    if (w_pd_ && nfree >= 4) {
      // Push-through identity keeps a 4 x 4 system that stays well conditioned
      // for tiny lambda: (A'WA + lI)^-1 A'W = A'(AA' + l W^-1)^-1.
      const Mat4 s = af * af.transpose() + lambda_ * w_inv_;
      ff = af.transpose() * s.ldlt().solve(r);
    } else {
      detail::DynMat<kNumMotors> h = af.transpose() * w_ * af;
      h.diagonal().array() += lambda_;
      const detail::DynVec<kNumMotors> rhs = af.transpose() * (w_ * r);
      ff = h.ldlt().solve(rhs);
    }
    for (int k = 0; k < nfree; ++k) out(idx[k]) = ff(k);
    return out;
  }

  WeightMat w_;
  WeightMat w_inv_ = WeightMat::Zero();
  double lambda_;
  bool w_pd_ = false;
};

}  // namespace ftmpc::allocation
