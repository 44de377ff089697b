#pragma once

// Closed-loop simulation: plant and EKF at the plant rate, NMPC and allocation
// every control_divider-th tick, with scheduled motor faults.

#include <cmath>
#include <optional>
#include <string>

#include "ftmpc/allocation/allocator.hpp"
#include "ftmpc/dynamics.hpp"
#include "ftmpc/fault_ekf.hpp"
#include "ftmpc/motor_map.hpp"
#include "ftmpc/nmpc/solver.hpp"
#include "ftmpc/sim/imu.hpp"
#include "ftmpc/sim/runlog.hpp"
#include "ftmpc/sim/scenario.hpp"

namespace ftmpc::sim {

/// Simulated rotors: commanded thrust goes through the command table (with
/// saturation), then a first-order lag; faults override the target.
class MotorBank {
 public:
  MotorBank(const MavParams& params, motor::CommandTable table, double voltage, double tau)
      : coeffs_(motor::MotorCoeffs::from_params(params)), table_(std::move(table)), voltage_(voltage), tau_(tau) {}

  /// Sets new thrust targets; returns true if any command saturated.
  bool command(const MotorVec& f, const DirectionVector& d) {
    bool sat = false;
    for (int i = 0; i < kNumMotors; ++i) {
      const bool inv = d[static_cast<std::size_t>(i)];
      const double omega = motor::thrust_to_speed(f(i), inv, coeffs_);
      const motor::CommandResult c = table_.speed_to_command(omega, voltage_);
      // Only a clipped-from-above command changes the delivered speed; below
      // idle the rotor simply stops.
      sat = sat || (c.saturated && c.command >= 1.0);
      const double achieved = c.saturated && c.command >= 1.0 ? table_.command_to_speed(1.0, voltage_) : omega;
      target_(i) = motor::speed_to_thrust(achieved, inv, coeffs_);
    }
    return sat;
  }

  void inject(const FaultEvent& e) {
    mode_[static_cast<std::size_t>(e.motor)] = e.mode;
    faulted_[static_cast<std::size_t>(e.motor)] = true;
    stuck_(e.motor) = e.stuck_thrust;
  }

  /// Advances the rotor thrusts by dt.
  void advance(double dt, double cut_tau) {
    for (int i = 0; i < kNumMotors; ++i) {
      const auto k = static_cast<std::size_t>(i);
      if (faulted_[k] && mode_[k] == FaultMode::stuck) {
        thrust_(i) = stuck_(i);
        continue;
      }
      const double target = faulted_[k] ? 0.0 : target_(i);
      const double tau = faulted_[k] ? cut_tau : tau_;
      if (tau <= 0.0) thrust_(i) = target;
      else thrust_(i) = target + (thrust_(i) - target) * std::exp(-dt / tau);
    }
  }

  void reset(const MotorVec& f) {
    thrust_ = f;
    target_ = f;
  }

  const MotorVec& thrust() const { return thrust_; }

  /// Wrench of the actual rotor thrusts; the yaw moment ratio follows each
  /// rotor's actual spin direction.
  Vec4 wrench(const MavParams& p) const {
    DirectionVector d{};
    for (int i = 0; i < kNumMotors; ++i) d[static_cast<std::size_t>(i)] = thrust_(i) < 0.0;
    return allocation::allocation_matrix(d, p) * thrust_;
  }

 private:
  motor::MotorCoeffs coeffs_;
  motor::CommandTable table_;
  double voltage_;
  double tau_;
  MotorVec thrust_ = MotorVec::Zero();
  MotorVec target_ = MotorVec::Zero();
  MotorVec stuck_ = MotorVec::Zero();
  std::array<FaultMode, kNumMotors> mode_{};
  std::array<bool, kNumMotors> faulted_{};
};

struct RunResult {
  RunLog log;
  Metrics metrics;
  bool diverged = false;
  std::string message;
};

inline RunResult run(const Scenario& sc, const motor::CommandTable& table = motor::CommandTable::synthetic()) {
  sc.validate();
  const double dt = sc.sim_dt();
  const auto n_ticks = static_cast<long>(std::llround(sc.duration * sc.sim_rate_hz));
  const MavParams plant = sc.plant();
  const double plant_tau = sc.mismatch.enabled ? sc.mismatch.motor_tau : 0.0;
  const bool cross_term = sc.mismatch.enabled && sc.mismatch.accel_cross_term;

  nmpc::Solver solver(sc.model, sc.nmpc);
  allocation::Allocator allocator(sc.model, sc.allocation);
  fault::HealthEkf ekf(sc.model, sc.ekf);
  fault::FailureDetector detector;
  NoiseSource noise(sc.seed, sc.noise);
  MotorBank motors(plant, table, sc.voltage, plant_tau);

  RunResult result;
  RunLog& log = result.log;
  log.rows.reserve(static_cast<std::size_t>(n_ticks));

  MavState x;
  {
    const auto& s0 = sc.reference.active(0.0);
    x.r_WB = s0.position;
    x.q_WB = quat_from_yaw(s0.yaw);
  }
  const double hover_share = sc.model.hover_thrust() / kNumMotors;
  motors.reset(MotorVec::Constant(hover_share));

  fault::ImuMeasurement z0 = imu_measure(x, motors.wrench(plant)(3), plant.mass, sc.ekf, cross_term, noise);
  fault::HealthBelief belief = fault::initial_belief(sc.ekf, z0.gyro, hover_share);

  std::optional<nmpc::Solution> last_solution;
  Vec4 u_cmd = Vec4(0.0, 0.0, 0.0, sc.model.hover_thrust());
  allocation::AllocationResult alloc;
  alloc.f = MotorVec::Constant(hover_share);
  bool sat = false;
  std::vector<bool> fault_done(sc.faults.size(), false);

  for (long k = 0; k < n_ticks; ++k) {
    const double t = static_cast<double>(k) * dt;

    // Fault injection happens at the first tick at or after its time.
    for (std::size_t i = 0; i < sc.faults.size(); ++i) {
      if (!fault_done[i] && t + 1e-12 >= sc.faults[i].time) {
        fault_done[i] = true;
        motors.inject(sc.faults[i]);
        log.events.push_back({t, EventKind::fault_injected, sc.faults[i].motor});
      }
    }

    if (k % sc.control_divider == 0) {
      const auto ref = sc.reference.window(t, sc.nmpc.horizon_steps, sc.nmpc.dt, sc.model);
      std::optional<nmpc::Solution> warm;
      if (last_solution) warm = solver.shift(*last_solution);
      try {
        last_solution = solver.solve(x, ref, warm ? &*warm : nullptr);
      } catch (const DivergedError& e) {
        result.diverged = true;
        result.message = e.what();
        log.events.push_back({t, EventKind::diverged, -1});
        break;
      }
      u_cmd = last_solution->u.front();
      alloc = allocator.allocate(ControlInput::from_vector(u_cmd), t);
      sat = motors.command(alloc.f, alloc.d);
      for (bool s : alloc.saturated) sat = sat || s;
    }

    const Vec4 wrench = motors.wrench(plant);
    x = integrate_step(x, ControlInput::from_vector(wrench), plant, dt);
    motors.advance(dt, sc.ekf.tau_f);
    const Vec4 wrench_after = motors.wrench(plant);

    const fault::ImuMeasurement z = imu_measure(x, wrench_after(3), plant.mass, sc.ekf, cross_term, noise);
    try {
      belief = ekf.predict(belief, alloc.f, alloc.d, dt);
      belief = ekf.update(belief, z);
    } catch (const NumericalError&) {
      belief = fault::initial_belief(sc.ekf, z.gyro, hover_share);
    }

    const double t_next = t + dt;
    for (int m : detector.update(belief)) {
      log.events.push_back({t_next, EventKind::fault_detected, m});
      allocator.fail_motor(m);
      log.events.push_back({t_next, EventKind::reconfigured, m});
    }

    LogRow row;
    row.t = t_next;
    row.state = x;
    const auto& sp = sc.reference.active(t_next);
    row.r_ref = sp.position;
    row.yaw_ref = sp.yaw;
    row.u_cmd = u_cmd;
    row.f_alloc = alloc.f;
    row.d = alloc.d;
    row.f_true = motors.thrust();
    row.gyro = z.gyro;
    row.accel_z = z.accel_z;
    for (int i = 0; i < kNumMotors; ++i) {
      const auto s = static_cast<std::size_t>(i);
      row.health[s] = belief.health(i);
      row.health_upper[s] = belief.health_upper(i);
      row.health_lower[s] = belief.health_lower(i);
    }
    row.saturated = sat;
    log.rows.push_back(row);

    if (!x.finite() || x.r_WB.norm() > sc.divergence_bound) {
      result.diverged = true;
      result.message = "position left the divergence bound";
      log.events.push_back({t_next, EventKind::diverged, -1});
      break;
    }
  }

  if (!log.rows.empty()) result.metrics = metrics_from_log(log);
  result.metrics.diverged = result.diverged;
  return result;
}

}  // namespace ftmpc::sim
