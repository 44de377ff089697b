#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "ftmpc/allocation/allocator.hpp"
#include "ftmpc/fault_ekf.hpp"
#include "ftmpc/nmpc/solver.hpp"

namespace ftmpc::sim {

enum class FaultMode { cut, stuck };

struct FaultEvent {
  double time = 0.0;
  int motor = 0;  // 0-based
  FaultMode mode = FaultMode::cut;
  double stuck_thrust = 0.0;
};

/// Piecewise-constant setpoints (position, yaw). The setpoint active at time t
/// is the last one whose time is <= t.
struct ReferenceSchedule {
  struct Setpoint {
    double time = 0.0;
    Vec3 position = Vec3::Zero();
    double yaw = 0.0;  // rad
  };
  std::vector<Setpoint> setpoints{Setpoint{}};
  // When set, horizon nodes see future setpoint changes.
  bool preview = false;

  void sort() {
    std::stable_sort(setpoints.begin(), setpoints.end(),
                     [](const Setpoint& a, const Setpoint& b) { return a.time < b.time; });
  }

  const Setpoint& active(double t) const {
    const Setpoint* cur = &setpoints.front();
    for (const auto& s : setpoints) {
      if (s.time <= t) cur = &s;
      else break;
    }
    return *cur;
  }

  nmpc::ReferencePoint at(double t, const MavParams& model) const {
    const Setpoint& s = active(t);
    return nmpc::ReferencePoint::hover(s.position, s.yaw, model);
  }

  std::vector<nmpc::ReferencePoint> window(double t, int steps, double dt, const MavParams& model) const {
    std::vector<nmpc::ReferencePoint> out;
    out.reserve(static_cast<std::size_t>(steps + 1));
    for (int n = 0; n <= steps; ++n) out.push_back(at(preview ? t + n * dt : t, model));
    return out;
  }
};

/// Knobs that make the simulated vehicle differ from the controller's model.
struct PlantMismatch {
  bool enabled = true;
  double motor_tau = 0.015;     // first-order thrust lag, s
  double inertia_scale = 1.05;  // plant inertia = scale * model inertia
  bool accel_cross_term = true; // accel_z includes [omega x v_B]_z
};

struct Scenario {
  std::string name = "scenario";
  MavParams model;  // used by controller, allocator and EKF
  nmpc::NmpcConfig nmpc = default_nmpc();
  allocation::AllocationConfig allocation;
  fault::EkfParams ekf;
  ReferenceSchedule reference;
  std::vector<FaultEvent> faults;
  PlantMismatch mismatch;
  std::uint64_t seed = 1;
  bool noise = true;
  double duration = 15.0;
  double voltage = 16.0;
  double sim_rate_hz = 400.0;
  int control_divider = 4;  // control runs every N-th plant tick
  double divergence_bound = 50.0;

  static nmpc::NmpcConfig default_nmpc() {
    nmpc::NmpcConfig c;
    c.max_iterations = 2;
    return c;
  }

  double sim_dt() const { return 1.0 / sim_rate_hz; }

  /// Plant parameters after applying the mismatch knobs.
  MavParams plant() const {
    MavParams p = model;
    if (mismatch.enabled) p.inertia *= mismatch.inertia_scale;
    return p;
  }

  void validate() const {
    model.validate();
    nmpc.validate();
    allocation.validate();
    ekf.validate();
    if (!(duration > 0.0)) throw ConfigError("duration must be positive");
    if (!(sim_rate_hz > 0.0) || control_divider < 1) throw ConfigError("invalid loop rates");
    if (std::abs(nmpc.dt - control_divider / sim_rate_hz) > 1e-12)
      throw ConfigError("nmpc dt must equal the control period");
    if (std::abs(ekf.rate_hz - sim_rate_hz) > 1e-9) throw ConfigError("EKF rate must equal the plant rate");
    if (reference.setpoints.empty()) throw ConfigError("reference needs at least one setpoint");
    for (const auto& f : faults) {
      if (f.time < 0.0 || f.time > duration) throw ConfigError("fault time outside duration");
      if (f.motor < 0 || f.motor >= kNumMotors) throw ConfigError("fault motor index out of range");
    }
    if (!(divergence_bound > 0.0)) throw ConfigError("divergence bound must be positive");
    if (mismatch.motor_tau < 0.0 || mismatch.inertia_scale <= 0.0) throw ConfigError("invalid mismatch knobs");
  }
};

}  // namespace ftmpc::sim
