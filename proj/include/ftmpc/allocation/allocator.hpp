#pragma once

// Direction-aware control allocation.
//
// For every admissible rotation-direction vector d the box-constrained QP is
// solved with the direction-dependent bounds; candidates are ranked by cost
// and the cheapest one that does not reverse a recently reversed motor is
// returned. The hysteresis window is halved until the hysteresis-respecting
// choice is within epsilon of the global optimum.

#include <algorithm>
#include <array>
#include <bit>
#include <limits>
#include <vector>

#include "ftmpc/allocation/box_qp.hpp"
#include "ftmpc/allocation/matrix.hpp"
#include "ftmpc/types.hpp"

namespace ftmpc::allocation {

enum class MotorStatus : unsigned char { healthy, failed, bidirectional };

class UncontrollableError : public Error {
 public:
  using Error::Error;
};

struct AllocationConfig {
  WeightMat W = Vec4(10.0, 10.0, 1.0, 10.0).asDiagonal();
  double lambda = 1e-10;
  double t_hyst = 0.5;
  // Hysteresis acceptance: epsilon = epsilon_rel * ||u*||_W^2.
  double epsilon_rel = 1e-3;
  std::array<MotorStatus, kNumMotors> status{};
  // Set when two opposing motors have both failed.
  bool controllability_warning = false;

  void validate() const {
    if (lambda < 0.0) throw ConfigError("lambda must be non-negative");
    if (t_hyst < 0.0) throw ConfigError("t_hyst must be non-negative");
    if (epsilon_rel < 0.0) throw ConfigError("epsilon must be non-negative");
    if ((W - W.transpose()).norm() > 1e-12) throw ConfigError("W must be symmetric");
  }
};

struct AllocationResult {
  MotorVec f = MotorVec::Zero();
  DirectionVector d{};
  Vec4 achieved = Vec4::Zero();
  double cost = 0.0;      // ||A f - u||_W^2 + lambda ||f||^2
  double residual = 0.0;  // ||A f - u||_W^2
  std::array<bool, kNumMotors> saturated{};
  bool degraded = false;
  int candidates = 0;
};

/// Rotation direction currently commanded per motor and when it last changed.
struct HysteresisState {
  DirectionVector d{};
  std::array<double, kNumMotors> last_change{
      -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
      -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
      -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
};

inline int opposite_motor(int i) { return (i + kNumMotors / 2) % kNumMotors; }

inline unsigned direction_bits(const DirectionVector& d) {
  // Motor 0 is the most significant bit, so integer order is lexicographic order.
  unsigned bits = 0;
  for (int i = 0; i < kNumMotors; ++i)
    if (d[static_cast<std::size_t>(i)]) bits |= 1u << (kNumMotors - 1 - i);
  return bits;
}

inline DirectionVector direction_from_bits(unsigned bits) {
  DirectionVector d{};
  for (int i = 0; i < kNumMotors; ++i) d[static_cast<std::size_t>(i)] = (bits >> (kNumMotors - 1 - i)) & 1u;
  return d;
}

/// Per-motor bounds for direction d (inverted motors take the negative range).
inline void motor_bounds(const DirectionVector& d, const std::array<MotorStatus, kNumMotors>& status,
                         const MavParams& p, MotorVec& lb, MotorVec& ub) {
  for (int i = 0; i < kNumMotors; ++i) {
    const auto k = static_cast<std::size_t>(i);
    if (status[k] == MotorStatus::failed) {
      lb(i) = ub(i) = 0.0;
    } else if (d[k]) {
      lb(i) = p.f_min_neg;
      ub(i) = p.f_max_neg;
    } else {
      lb(i) = p.f_min_pos;
      ub(i) = p.f_max_pos;
    }
  }
}

/// Every direction vector the configuration allows: failed and normal motors
/// pinned to d = 0, bidirectional motors free.
inline std::vector<DirectionVector> admissible_directions(const std::array<MotorStatus, kNumMotors>& status) {
  unsigned free_mask = 0;
  for (int i = 0; i < kNumMotors; ++i)
    if (status[static_cast<std::size_t>(i)] == MotorStatus::bidirectional) free_mask |= 1u << (kNumMotors - 1 - i);
  std::vector<DirectionVector> out;
  out.reserve(std::size_t{1} << std::popcount(free_mask));
  // Enumerate subsets of free_mask in increasing integer order.
  unsigned sub = 0;
  do {
    out.push_back(direction_from_bits(sub));
    sub = (sub - free_mask) & free_mask;
  } while (sub != 0);
  return out;
}

/// Mark a motor failed and unlock reversed rotation on the opposite motor.
inline AllocationConfig apply_failure(int motor, AllocationConfig config) {
  if (motor < 0 || motor >= kNumMotors) throw ConfigError("motor index out of range");
  config.status[static_cast<std::size_t>(motor)] = MotorStatus::failed;
  const auto opp = static_cast<std::size_t>(opposite_motor(motor));
  if (config.status[opp] == MotorStatus::failed) {
    config.controllability_warning = true;
  } else {
    config.status[opp] = MotorStatus::bidirectional;
  }
  return config;
}

inline bool opposing_pair_failed(const std::array<MotorStatus, kNumMotors>& status) {
  for (int i = 0; i < kNumMotors / 2; ++i)
    if (status[static_cast<std::size_t>(i)] == MotorStatus::failed &&
        status[static_cast<std::size_t>(opposite_motor(i))] == MotorStatus::failed)
      return true;
  return false;
}

/// Baseline f = A⁺ u with all motors in normal rotation; no bounds.
inline MotorVec pseudo_inverse_allocate(const Vec4& u_star, const MavParams& params) {
  const AllocationMatrix a = allocation_matrix(all_normal(), params);
  const Mat4 aat = a * a.transpose();
  return a.transpose() * aat.ldlt().solve(u_star);
}

struct Candidate {
  DirectionVector d{};
  BoxQpResult qp;
  int flips = 0;
  unsigned bits = 0;
};

/// Solve the QP for every admissible d, sorted by cost. Near-equal costs are
/// ordered by number of reversals relative to `current`, then lexicographically.
inline std::vector<Candidate> enumerate_candidates(const Vec4& u_star, const MavParams& params,
                                                   const AllocationConfig& config, const DirectionVector& current) {
  const BoxQpSolver solver(config.W, config.lambda);
  std::vector<Candidate> cands;
  for (const auto& d : admissible_directions(config.status)) {
    MotorVec lb, ub;
    motor_bounds(d, config.status, params, lb, ub);
    Candidate c;
    c.d = d;
    c.qp = solver.solve(allocation_matrix(d, params), u_star, lb, ub);
    c.bits = direction_bits(d);
    c.flips = std::popcount(c.bits ^ direction_bits(current));
    cands.push_back(c);
  }
  std::sort(cands.begin(), cands.end(), [](const Candidate& x, const Candidate& y) {
    if (x.qp.cost != y.qp.cost) return x.qp.cost < y.qp.cost;
    if (x.flips != y.flips) return x.flips < y.flips;
    return x.bits < y.bits;
  });
  // Costs equal up to rounding are ties.
  std::size_t start = 0;
  while (start < cands.size()) {
    std::size_t end = start + 1;
    const double tol = 1e-12 * (1.0 + std::abs(cands[start].qp.cost));
    while (end < cands.size() && cands[end].qp.cost - cands[start].qp.cost <= tol) ++end;
    std::stable_sort(cands.begin() + static_cast<std::ptrdiff_t>(start), cands.begin() + static_cast<std::ptrdiff_t>(end),
                     [](const Candidate& x, const Candidate& y) {
                       if (x.flips != y.flips) return x.flips < y.flips;
                       return x.bits < y.bits;
                     });
    start = end;
  }
  return cands;
}

struct AllocationStep {
  AllocationResult result;
  HysteresisState next;
};

/// Pure allocation: explicit hysteresis state in, updated state out.
inline AllocationStep allocate(const Vec4& u_star, const MavParams& params, const AllocationConfig& config,
                               const HysteresisState& hyst, double t_now) {
  bool any_alive = false;
  for (auto s : config.status) any_alive = any_alive || s != MotorStatus::failed;
  if (!any_alive) throw UncontrollableError("all motors failed");
  if (!u_star.allFinite()) throw NumericalError("allocate: non-finite wrench request");

  const std::vector<Candidate> cands = enumerate_candidates(u_star, params, config, hyst.d);
  const double best_cost = cands.front().qp.cost;
  const double eps = config.epsilon_rel * u_star.dot(config.W * u_star) + 1e-12;

  const auto respects = [&](const Candidate& c, double window) {
    for (int i = 0; i < kNumMotors; ++i) {
      const auto k = static_cast<std::size_t>(i);
      if (c.d[k] != hyst.d[k] && t_now - hyst.last_change[k] < window) return false;
    }
    return true;
  };

  const Candidate* chosen = nullptr;
  double window = config.t_hyst;
  while (chosen == nullptr) {
    for (const auto& c : cands) {
      if (respects(c, window)) {
        if (c.qp.cost - best_cost <= eps) chosen = &c;
        break;
      }
    }
    if (chosen != nullptr) break;
    if (window <= 1e-6) {
      chosen = &cands.front();
      break;
    }
    window *= 0.5;
  }

  AllocationStep out;
  AllocationResult& r = out.result;
  r.f = chosen->qp.f;
  r.d = chosen->d;
  r.cost = chosen->qp.cost;
  r.residual = chosen->qp.residual;
  r.achieved = allocation_matrix(r.d, params) * r.f;
  r.candidates = static_cast<int>(cands.size());
  r.degraded = opposing_pair_failed(config.status) || config.controllability_warning;
  // A motor is saturated when its bound is active with a non-zero multiplier.
  MotorVec lb, ub;
  motor_bounds(r.d, config.status, params, lb, ub);
  const MotorVec g = box_qp_gradient(allocation_matrix(r.d, params), u_star, config.W, config.lambda, r.f);
  const double gtol = 1e-9 * (1.0 + g.cwiseAbs().maxCoeff());
  for (int i = 0; i < kNumMotors; ++i) {
    const auto k = static_cast<std::size_t>(i);
    if (lb(i) == ub(i)) continue;
    r.saturated[k] = (r.f(i) <= lb(i) && g(i) > gtol) || (r.f(i) >= ub(i) && g(i) < -gtol);
  }

  out.next = hyst;
  for (int i = 0; i < kNumMotors; ++i) {
    const auto k = static_cast<std::size_t>(i);
    if (r.d[k] != hyst.d[k]) out.next.last_change[k] = t_now;
  }
  out.next.d = r.d;
  return out;
}

/// Stateful wrapper owning the hysteresis timestamps. Single writer.
class Allocator {
 public:
  Allocator(MavParams params, AllocationConfig config) : params_(std::move(params)), config_(std::move(config)) {
    config_.validate();
  }

  AllocationResult allocate(const ControlInput& u_star, double t_now) {
    AllocationStep step = allocation::allocate(u_star.as_vector(), params_, config_, hyst_, t_now);
    hyst_ = step.next;
    return step.result;
  }

  void fail_motor(int motor) { config_ = apply_failure(motor, config_); }

  const AllocationConfig& config() const { return config_; }
  const HysteresisState& hysteresis() const { return hyst_; }
  const MavParams& params() const { return params_; }

 private:
  MavParams params_;
  AllocationConfig config_;
  HysteresisState hyst_;
};

}  // namespace ftmpc::allocation
