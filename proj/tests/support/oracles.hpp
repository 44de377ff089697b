#pragma once

// Reference solutions computed independently of the library's solvers.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>
#include <limits>

#include "ftmpc/allocation/allocator.hpp"

namespace oracle {

using namespace ftmpc;

struct BoxQpOptimum {
  MotorVec f = MotorVec::Zero();
  double cost = std::numeric_limits<double>::infinity();
};

/// Global minimizer of ||A f - u||_W^2 + lambda ||f||^2 on the box by
/// enumerating every face (each motor at lower bound, upper bound or free).
/// On each face the stacked least-squares problem
///   [W^1/2 A_F; sqrt(lambda) I] f_F ~ [W^1/2 r; 0]
/// is solved by column-pivoted QR. Requires W positive definite.
inline BoxQpOptimum brute_force_box_qp(const allocation::AllocationMatrix& a, const Vec4& u, const Mat4& w,
                                       double lambda, const MotorVec& lb, const MotorVec& ub) {
  const Mat4 w_half = Eigen::LLT<Mat4>(w).matrixU();
  BoxQpOptimum best;
  int faces = 1;
  for (int i = 0; i < kNumMotors; ++i) faces *= 3;
  for (int code = 0; code < faces; ++code) {
    MotorVec f = MotorVec::Zero();
    std::vector<int> free;
    int c = code;
    bool skip = false;
    for (int i = 0; i < kNumMotors; ++i, c /= 3) {
      const int s = c % 3;
      if (lb(i) == ub(i)) {
        if (s != 0) skip = true;  // fixed motors only need one face
        f(i) = lb(i);
      } else if (s == 0) {
        f(i) = lb(i);
      } else if (s == 1) {
        f(i) = ub(i);
      } else {
        free.push_back(i);
      }
    }
    if (skip) continue;
    if (!free.empty()) {
      const int nf = static_cast<int>(free.size());
      Vec4 r = u;
      for (int i = 0; i < kNumMotors; ++i)
        if (std::find(free.begin(), free.end(), i) == free.end()) r -= a.col(i) * f(i);
      Eigen::MatrixXd m = Eigen::MatrixXd::Zero(4 + nf, nf);
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(4 + nf);
      for (int k = 0; k < nf; ++k) m.block(0, k, 4, 1) = w_half * a.col(free[static_cast<std::size_t>(k)]);
      m.block(4, 0, nf, nf) = std::sqrt(lambda) * Eigen::MatrixXd::Identity(nf, nf);
      rhs.head<4>() = w_half * r;
      const Eigen::VectorXd x = m.colPivHouseholderQr().solve(rhs);
      bool feasible = true;
      for (int k = 0; k < nf; ++k) {
        const int i = free[static_cast<std::size_t>(k)];
        const double tol = 1e-9 * (1.0 + std::abs(ub(i) - lb(i)));
        if (x(k) < lb(i) - tol || x(k) > ub(i) + tol) feasible = false;
        f(i) = std::clamp(x(k), lb(i), ub(i));
      }
      if (!feasible) continue;
    }
    const Vec4 res = a * f - u;
    const double cost = res.dot(w * res) + lambda * f.squaredNorm();
    if (cost < best.cost) best = {f, cost};
  }
  return best;
}

/// Exhaustive minimum over every admissible direction vector.
struct AllocationOptimum {
  double cost = std::numeric_limits<double>::infinity();
  DirectionVector d{};
  MotorVec f = MotorVec::Zero();
};

inline AllocationOptimum brute_force_allocation(const Vec4& u, const MavParams& p,
                                                const allocation::AllocationConfig& cfg) {
  AllocationOptimum best;
  for (unsigned bits = 0; bits < (1u << kNumMotors); ++bits) {
    DirectionVector d{};
    bool ok = true;
    for (int i = 0; i < kNumMotors; ++i) {
      d[static_cast<std::size_t>(i)] = (bits >> i) & 1u;
      if (d[static_cast<std::size_t>(i)] && cfg.status[static_cast<std::size_t>(i)] != allocation::MotorStatus::bidirectional)
        ok = false;
    }
    if (!ok) continue;
    MotorVec lb, ub;
    for (int i = 0; i < kNumMotors; ++i) {
      const auto k = static_cast<std::size_t>(i);
      if (cfg.status[k] == allocation::MotorStatus::failed) lb(i) = ub(i) = 0.0;
      else if (d[k]) lb(i) = p.f_min_neg, ub(i) = p.f_max_neg;
      else lb(i) = p.f_min_pos, ub(i) = p.f_max_pos;
    }
    // Allocation matrix written out from the arm angles.
    allocation::AllocationMatrix a;
    for (int i = 0; i < kNumMotors; ++i) {
      const double ang = p.motor_angles[static_cast<std::size_t>(i)];
      const double km = d[static_cast<std::size_t>(i)] ? p.kM_neg : p.kM_pos;
      a.col(i) << p.arm_length * std::sin(ang), -p.arm_length * std::cos(ang), (i % 2 == 0 ? km : -km), 1.0;
    }
    const auto opt = brute_force_box_qp(a, u, cfg.W, cfg.lambda, lb, ub);
    if (opt.cost < best.cost) best = {opt.cost, d, opt.f};
  }
  return best;
}

}  // namespace oracle
