#pragma once

// Gauss-Newton multiple shooting for the quaternion tracking problem.
//
// Each iteration linearizes the discrete dynamics and the quadratic tracking
// cost along the current node trajectory (X̄, Ū), solves the resulting LQ
// problem with defects by a Riccati backward pass (inputs clamped inside the
// pass), and updates the nodes with x̄ ⊞ α δx, ū + α δu. The step length α is
// chosen by backtracking on cost + μ · Σ |defect|₁.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "ftmpc/dynamics.hpp"
#include "ftmpc/nmpc/tracking.hpp"

namespace ftmpc::nmpc {

using FeedbackGain = Eigen::Matrix<double, kInputDim, kTangentDim>;

struct NmpcConfig {
  Mat3 Q_r = 10.0 * Mat3::Identity();
  Mat3 Q_v = 2.0 * Mat3::Identity();
  Mat3 Q_q = 50.0 * Mat3::Identity();
  Mat3 Q_omega = 5.0 * Mat3::Identity();
  Mat4 Q_u = Vec4(5.0, 5.0, 5.0, 0.1).asDiagonal();
  int horizon_steps = 200;
  double dt = 0.01;
  Vec4 u_lb = Vec4(-2.0, -2.0, -0.4, 0.0);
  Vec4 u_ub = Vec4(2.0, 2.0, 0.4, 40.0);
  int max_iterations = 10;
  // Stop when the merit decrease falls below tolerance * (1 + merit).
  double tolerance = 1e-9;
  double defect_weight = 1e3;
  double min_step = 1.0 / 1024.0;

  static NmpcConfig high_attitude_gain() {
    NmpcConfig c;
    c.Q_q = 500.0 * Mat3::Identity();
    return c;
  }

  void validate() const {
    if (horizon_steps < 1) throw ConfigError("horizon must have at least one step");
    if (!(dt > 0.0)) throw ConfigError("dt must be positive");
    if ((u_lb.array() > u_ub.array()).any()) throw ConfigError("infeasible input bounds (u_lb > u_ub)");
    if (max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
    const auto psd = [](const auto& m, const char* name, bool strict) {
      using M = std::decay_t<decltype(m)>;
      Eigen::SelfAdjointEigenSolver<M> es(m);
      const double lo = es.eigenvalues().minCoeff();
      if (strict ? lo <= 0.0 : lo < -1e-12)
        throw ConfigError(std::string(name) + (strict ? " must be positive definite" : " must be PSD"));
    };
    psd(Q_r, "Q_r", false);
    psd(Q_v, "Q_v", false);
    psd(Q_q, "Q_q", false);
    psd(Q_omega, "Q_omega", false);
    psd(Q_u, "Q_u", true);
  }

  TangentMat state_weight() const {
    TangentMat q = TangentMat::Zero();
    q.block<3, 3>(0, 0) = Q_r;
    q.block<3, 3>(3, 3) = Q_q;
    q.block<3, 3>(6, 6) = Q_v;
    q.block<3, 3>(9, 9) = Q_omega;
    return q;
  }
};

struct Solution {
  std::vector<Vec4> u;              // N inputs
  std::vector<MavState> x;          // N + 1 nodes
  std::vector<FeedbackGain> K;      // N gains, du = K (x ⊟ x̄)
  double cost = 0.0;
  double merit = 0.0;
  double max_defect = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> merit_history;  // one entry per accepted iterate, initial guess first

  ControlInput first_input() const { return ControlInput::from_vector(u.front()); }
  int horizon() const { return static_cast<int>(u.size()); }
};

/// Quadratic model of one stage around (x̄, ū).
struct StageLinearization {
  TangentMat A;
  TangentInputMat B;
  MavState next;
  double cost = 0.0;
  TangentVec lx;
  Vec4 lu;
  TangentMat lxx;
  Mat4 luu;
};

class DivergedSolve : public DivergedError {
 public:
  using DivergedError::DivergedError;
};

class Solver {
 public:
  Solver(const MavParams& model, NmpcConfig config)
      : dyn_(model, config.dt), config_(std::move(config)), q_state_(config_.state_weight()) {
    config_.validate();
  }

  const NmpcConfig& config() const { return config_; }
  const DiscreteDynamics& dynamics() const { return dyn_; }

  double stage_cost(const MavState& x, const Vec4& u, const ReferencePoint& ref) const {
    const StateResidual r = state_residual(x, ref);
    const Vec4 eu = u - ref.u_ref.as_vector();
    return r.e.dot(q_state_ * r.e) + eu.dot(config_.Q_u * eu);
  }

  double terminal_cost(const MavState& x, const ReferencePoint& ref) const {
    const StateResidual r = state_residual(x, ref);
    return r.e.dot(q_state_ * r.e);
  }

  /// Dynamics Jacobians and Gauss-Newton cost expansion of a stage.
  StageLinearization linearize(const MavState& x, const Vec4& u, const ReferencePoint& ref) const {
    StageLinearization s;
    const DiscreteLinearization d = dyn_.linearize(x, u);
    s.A = d.A;
    s.B = d.B;
    s.next = d.next;
    const StateResidual r = state_residual(x, ref);
    const TangentVec qe = q_state_ * r.e;
    const Vec4 eu = u - ref.u_ref.as_vector();
    s.cost = r.e.dot(qe) + eu.dot(config_.Q_u * eu);
    s.lx = 2.0 * r.J.transpose() * qe;
    s.lxx = 2.0 * r.J.transpose() * q_state_ * r.J;
    s.lu = 2.0 * config_.Q_u * eu;
    s.luu = 2.0 * config_.Q_u;
    return s;
  }

  /// Shift a solution one step forward in time for warm starting: drop the
  /// first stage, repeat the last input and extend the last node with f_d.
  Solution shift(const Solution& s) const {
    Solution out = s;
    const std::size_t n = s.u.size();
    if (n == 0) return out;
    std::rotate(out.u.begin(), out.u.begin() + 1, out.u.end());
    out.u[n - 1] = s.u[n - 1];
    std::rotate(out.K.begin(), out.K.begin() + 1, out.K.end());
    out.K[n - 1] = s.K[n - 1];
    std::rotate(out.x.begin(), out.x.begin() + 1, out.x.end());
    out.x[n] = dyn_.step(s.x[n], s.u[n - 1]);
    return out;
  }

  /// Reference of exactly N + 1 points; a shorter one is padded with its last point.
  std::vector<ReferencePoint> padded_reference(std::span<const ReferencePoint> reference) const {
    if (reference.empty()) throw ConfigError("empty reference");
    const auto need = static_cast<std::size_t>(config_.horizon_steps + 1);
    std::vector<ReferencePoint> ref(reference.begin(), reference.begin() + std::min(reference.size(), need));
    while (ref.size() < need) ref.push_back(ref.back());
    return ref;
  }

  Solution solve(const MavState& x0, std::span<const ReferencePoint> reference, const Solution* warm_start = nullptr) {
    if (!x0.finite()) throw NumericalError("nmpc: non-finite initial state");
    const int n = config_.horizon_steps;
    const std::vector<ReferencePoint> ref = padded_reference(reference);
    const auto nu = static_cast<std::size_t>(n);

    Solution sol;
    if (warm_start != nullptr && warm_start->horizon() == n && warm_start->x.size() == nu + 1) {
      sol.u = warm_start->u;
      sol.x = warm_start->x;
      for (auto& u : sol.u) u = u.cwiseMax(config_.u_lb).cwiseMin(config_.u_ub);
    } else {
      sol.u.resize(nu);
      sol.x.resize(nu + 1);
      sol.x[0] = x0;
      for (std::size_t i = 0; i < nu; ++i) {
        sol.u[i] = ref[i].u_ref.as_vector().cwiseMax(config_.u_lb).cwiseMin(config_.u_ub);
        sol.x[i + 1] = dyn_.step(sol.x[i], sol.u[i]);
      }
    }
    sol.K.assign(nu, FeedbackGain::Zero());

    stages_.resize(nu);
    defects_.resize(nu);
    k_.resize(nu);
    dx_.resize(nu + 1);
    du_.resize(nu);
    cand_x_.resize(nu + 1);
    cand_u_.resize(nu);

    double merit = evaluate(x0, sol.x, sol.u, ref, sol.cost, sol.max_defect);
    if (!std::isfinite(merit)) throw DivergedSolve("nmpc: non-finite cost");
    sol.merit = merit;
    sol.merit_history.push_back(merit);

    for (int iter = 1; iter <= config_.max_iterations; ++iter) {
      sol.iterations = iter;
      // Linearize along the nodes and collect the defects.
      for (std::size_t i = 0; i < nu; ++i) {
        stages_[i] = linearize(sol.x[i], sol.u[i], ref[i]);
        defects_[i] = state_boxminus(stages_[i].next, sol.x[i + 1]);
      }
      backward_pass(sol, ref[nu]);

      // Linear forward pass of the LQ subproblem.
      dx_[0] = state_boxminus(x0, sol.x[0]);
      for (std::size_t i = 0; i < nu; ++i) {
        du_[i] = k_[i] + sol.K[i] * dx_[i];
        dx_[i + 1] = stages_[i].A * dx_[i] + stages_[i].B * du_[i] + defects_[i];
      }

      bool accepted = false;
      double cand_cost = 0.0, cand_defect = 0.0, cand_merit = merit;
      for (double alpha = 1.0; alpha >= config_.min_step; alpha *= 0.5) {
        for (std::size_t i = 0; i <= nu; ++i) cand_x_[i] = state_boxplus(sol.x[i], alpha * dx_[i]);
        for (std::size_t i = 0; i < nu; ++i)
          cand_u_[i] = (sol.u[i] + alpha * du_[i]).cwiseMax(config_.u_lb).cwiseMin(config_.u_ub);
        cand_merit = evaluate(x0, cand_x_, cand_u_, ref, cand_cost, cand_defect);
        if (std::isfinite(cand_merit) && cand_merit <= merit) {
          accepted = true;
          break;
        }
      }
      if (!accepted) break;

      const double decrease = merit - cand_merit;
      std::swap(sol.x, cand_x_);
      std::swap(sol.u, cand_u_);
      merit = cand_merit;
      sol.cost = cand_cost;
      sol.max_defect = cand_defect;
      sol.merit = merit;
      sol.merit_history.push_back(merit);
      if (decrease <= config_.tolerance * (1.0 + merit)) {
        sol.converged = true;
        break;
      }
    }
    if (!std::isfinite(sol.cost)) throw DivergedSolve("nmpc: non-finite cost");
    return sol;
  }

 private:
  // Cost of the node trajectory plus the weighted l1 norm of all defects
  // (including the initial-state mismatch).
  double evaluate(const MavState& x0, const std::vector<MavState>& xs, const std::vector<Vec4>& us,
                  const std::vector<ReferencePoint>& ref, double& cost, double& max_defect) const {
    const std::size_t nu = us.size();
    cost = 0.0;
    double defect_l1 = state_boxminus(x0, xs[0]).lpNorm<1>();
    max_defect = state_boxminus(x0, xs[0]).lpNorm<Eigen::Infinity>();
    for (std::size_t i = 0; i < nu; ++i) {
      cost += stage_cost(xs[i], us[i], ref[i]);
      const TangentVec d = state_boxminus(dyn_.step(xs[i], us[i]), xs[i + 1]);
      defect_l1 += d.lpNorm<1>();
      max_defect = std::max(max_defect, d.lpNorm<Eigen::Infinity>());
    }
    cost += terminal_cost(xs[nu], ref[nu]);
    return cost + config_.defect_weight * defect_l1;
  }

  void backward_pass(Solution& sol, const ReferencePoint& terminal_ref) {
    const std::size_t nu = sol.u.size();
    const StateResidual rt = state_residual(sol.x[nu], terminal_ref);
    TangentMat p = 2.0 * rt.J.transpose() * q_state_ * rt.J;
    TangentVec pv = 2.0 * rt.J.transpose() * (q_state_ * rt.e);

    for (std::size_t ii = nu; ii-- > 0;) {
      const StageLinearization& s = stages_[ii];
      const TangentVec pc = pv + p * defects_[ii];
      const TangentVec qx = s.lx + s.A.transpose() * pc;
      const Vec4 qu = s.lu + s.B.transpose() * pc;
      const TangentMat pa = p * s.A;
      const TangentMat qxx = s.lxx + s.A.transpose() * pa;
      Mat4 quu = s.luu + s.B.transpose() * p * s.B;
      quu = 0.5 * (quu + quu.transpose()).eval();
      const FeedbackGain qux = s.B.transpose() * pa;

      Vec4 k;
      FeedbackGain kk;
      clamped_step(quu, qu, qux, sol.u[ii], k, kk);
      k_[ii] = k;
      sol.K[ii] = kk;

      p = qxx + kk.transpose() * quu * kk + kk.transpose() * qux + qux.transpose() * kk;
      p = 0.5 * (p + p.transpose()).eval();
      pv = qx + kk.transpose() * (quu * k) + kk.transpose() * qu + qux.transpose() * k;
    }
  }

  // Minimizes the local input model subject to u_lb <= ū + k <= u_ub by
  // fixing violating channels at their bound and re-solving the rest.
  void clamped_step(const Mat4& quu, const Vec4& qu, const FeedbackGain& qux, const Vec4& u_bar, Vec4& k,
                    FeedbackGain& kk) const {
    using SmallMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 4, 4>;
    using SmallVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 4, 1>;
    using SmallGain = Eigen::Matrix<double, Eigen::Dynamic, kTangentDim, 0, 4, kTangentDim>;
    // 0 free, +1 at upper bound, -1 at lower bound
    std::array<int, kInputDim> clamp{};
    for (int pass = 0; pass <= kInputDim; ++pass) {
      k.setZero();
      kk.setZero();
      std::array<int, kInputDim> fidx{};
      int nf = 0;
      for (int j = 0; j < kInputDim; ++j) {
        const auto jj = static_cast<std::size_t>(j);
        if (clamp[jj] == 0) fidx[static_cast<std::size_t>(nf++)] = j;
        else k(j) = (clamp[jj] > 0 ? config_.u_ub(j) : config_.u_lb(j)) - u_bar(j);
      }
      if (nf > 0) {
        SmallMat hff(nf, nf);
        SmallVec gf(nf);
        SmallGain xf(nf, kTangentDim);
        for (int a = 0; a < nf; ++a) {
          const int ja = fidx[static_cast<std::size_t>(a)];
          gf(a) = qu(ja) + quu.row(ja).dot(k);
          xf.row(a) = qux.row(ja);
          for (int b = 0; b < nf; ++b) hff(a, b) = quu(ja, fidx[static_cast<std::size_t>(b)]);
        }
        const Eigen::LLT<SmallMat> llt(hff);
        const SmallVec kf = -llt.solve(gf);
        const SmallGain kkf = -llt.solve(xf);
        for (int a = 0; a < nf; ++a) {
          const int ja = fidx[static_cast<std::size_t>(a)];
          k(ja) = kf(a);
          kk.row(ja) = kkf.row(a);
        }
      }
      bool changed = false;
      for (int j = 0; j < kInputDim; ++j) {
        const auto jj = static_cast<std::size_t>(j);
        if (clamp[jj] != 0) continue;
        const double un = u_bar(j) + k(j);
        if (un > config_.u_ub(j) + 1e-12) {
          clamp[jj] = 1;
          changed = true;
        } else if (un < config_.u_lb(j) - 1e-12) {
          clamp[jj] = -1;
          changed = true;
        }
      }
      if (!changed) return;
    }
  }

  DiscreteDynamics dyn_;
  NmpcConfig config_;
  TangentMat q_state_;

  // Per-solve workspace.
  std::vector<StageLinearization> stages_;
  std::vector<TangentVec> defects_;
  std::vector<Vec4> k_;
  std::vector<TangentVec> dx_;
  std::vector<Vec4> du_;
  std::vector<MavState> cand_x_;
  std::vector<Vec4> cand_u_;
};

}  // namespace ftmpc::nmpc
