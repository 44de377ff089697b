#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "ftmpc/fault_ekf.hpp"
#include "ftmpc/types.hpp"

namespace ftmpc::sim {

enum class EventKind { fault_injected, fault_detected, reconfigured, diverged };

inline const char* event_name(EventKind k) {
  switch (k) {
    case EventKind::fault_injected: return "inject";
    case EventKind::fault_detected: return "detect";
    case EventKind::reconfigured: return "reconfig";
    case EventKind::diverged: return "diverged";
  }
  return "?";
}

struct Event {
  double time = 0.0;
  EventKind kind = EventKind::fault_injected;
  int motor = -1;  // 0-based, -1 if not motor specific
};

struct LogRow {
  double t = 0.0;
  MavState state;
  Vec3 r_ref = Vec3::Zero();
  double yaw_ref = 0.0;
  Vec4 u_cmd = Vec4::Zero();       // NMPC output [M_B, T]
  MotorVec f_alloc = MotorVec::Zero();
  DirectionVector d{};
  MotorVec f_true = MotorVec::Zero();
  Vec3 gyro = Vec3::Zero();
  double accel_z = 0.0;
  std::array<double, kNumMotors> health{};
  std::array<double, kNumMotors> health_upper{};
  std::array<double, kNumMotors> health_lower{};
  bool saturated = false;

  double yaw_error() const { return wrap_angle(yaw_of(state.q_WB) - yaw_ref); }
  double position_error() const { return (state.r_WB - r_ref).norm(); }
};

struct RunLog {
  std::vector<LogRow> rows;
  std::vector<Event> events;

  std::optional<double> first_event(EventKind k) const {
    for (const auto& e : events)
      if (e.kind == k) return e.time;
    return std::nullopt;
  }
};

struct Metrics {
  std::optional<double> detection_delay;   // s
  double height_loss = 0.0;                // m
  double rmse_pre_fault = 0.0;             // m
  std::optional<double> rmse_post_fault;   // m
  std::optional<double> yaw_convergence_time;  // s after injection until |yaw error| stays < 5 deg
  double saturation_fraction = 0.0;
  double final_position_error = 0.0;       // m
  double max_position_norm = 0.0;          // m
  bool diverged = false;
};

/// Metrics derived from a run log. Faults windows start at the first
/// injection event; without one the post-fault quantities are absent or zero.
inline Metrics metrics_from_log(const RunLog& log, double yaw_tolerance = 5.0 * kPi / 180.0) {
  if (log.rows.empty()) throw ParseError("run log has no rows");
  for (std::size_t i = 1; i < log.rows.size(); ++i)
    if (!(log.rows[i].t > log.rows[i - 1].t)) throw ParseError("run log timestamps not strictly increasing");

  Metrics m;
  const auto inject = log.first_event(EventKind::fault_injected);
  const auto detect = log.first_event(EventKind::fault_detected);
  if (inject && detect) m.detection_delay = *detect - *inject;
  m.diverged = log.first_event(EventKind::diverged).has_value();

  double sse_pre = 0.0, sse_post = 0.0;
  std::size_t n_pre = 0, n_post = 0, n_sat = 0;
  for (const auto& r : log.rows) {
    const double e2 = (r.state.r_WB - r.r_ref).squaredNorm();
    m.max_position_norm = std::max(m.max_position_norm, r.state.r_WB.norm());
    if (r.saturated) ++n_sat;
    if (inject && r.t >= *inject) {
      sse_post += e2;
      ++n_post;
      m.height_loss = std::max(m.height_loss, r.r_ref.z() - r.state.r_WB.z());
    } else {
      sse_pre += e2;
      ++n_pre;
    }
  }
  if (n_pre > 0) m.rmse_pre_fault = std::sqrt(sse_pre / static_cast<double>(n_pre));
  if (n_post > 0) m.rmse_post_fault = std::sqrt(sse_post / static_cast<double>(n_post));
  m.saturation_fraction = static_cast<double>(n_sat) / static_cast<double>(log.rows.size());
  m.final_position_error = log.rows.back().position_error();

  if (inject) {
    // Last sample outside the tolerance band after the injection.
    double last_bad = *inject;
    bool any_after = false;
    for (const auto& r : log.rows) {
      if (r.t < *inject) continue;
      any_after = true;
      if (std::abs(r.yaw_error()) >= yaw_tolerance) last_bad = r.t;
    }
    if (any_after && last_bad < log.rows.back().t) m.yaw_convergence_time = last_bad - *inject;
  }
  return m;
}

}  // namespace ftmpc::sim
