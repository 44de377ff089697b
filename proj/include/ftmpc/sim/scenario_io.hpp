#pragma once

// Scenario files: "[section]" headers, "key = value" lines, '#' comments.
// Vectors are whitespace-separated numbers; motors are numbered 1..6; angles
// are in degrees. See README.md for the full key list.

#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ftmpc/sim/scenario.hpp"

namespace ftmpc::sim {

namespace scenario_detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// 1-based motor number in a file to 0-based index.
inline int motor_index(double m, int line) {
  if (!(m >= 1 && m <= kNumMotors) || m != static_cast<double>(static_cast<int>(m)))
    throw ParseError("motor must be an integer in 1..6", line);
  return static_cast<int>(m) - 1;
}

struct Value {
  std::string_view text;
  int line;

  std::vector<double> numbers(std::size_t expect) const {
    std::vector<double> out;
    std::size_t i = 0;
    while (i < text.size()) {
      while (i < text.size() && (text[i] == ' ' || text[i] == '\t')) ++i;
      if (i == text.size()) break;
      std::size_t j = i;
      while (j < text.size() && text[j] != ' ' && text[j] != '\t') ++j;
      double v = 0.0;
      const auto r = std::from_chars(text.data() + i, text.data() + j, v);
      if (r.ec != std::errc() || r.ptr != text.data() + j)
        throw ParseError("bad number '" + std::string(text.substr(i, j - i)) + "'", line);
      out.push_back(v);
      i = j;
    }
    if (out.size() != expect)
      throw ParseError("expected " + std::to_string(expect) + " number(s), got " + std::to_string(out.size()), line);
    return out;
  }
  double number() const { return numbers(1)[0]; }
  int integer() const {
    const double v = number();
    if (!(std::abs(v) < 1e9) || v != static_cast<double>(static_cast<long long>(v)))
      throw ParseError("expected an integer", line);
    return static_cast<int>(v);
  }
  Vec3 vec3() const {
    const auto v = numbers(3);
    return Vec3(v[0], v[1], v[2]);
  }
  Vec4 vec4() const {
    const auto v = numbers(4);
    return Vec4(v[0], v[1], v[2], v[3]);
  }
  bool flag() const {
    if (text == "on" || text == "true" || text == "1") return true;
    if (text == "off" || text == "false" || text == "0") return false;
    throw ParseError("expected on/off, got '" + std::string(text) + "'", line);
  }
  int motor() const { return motor_index(number(), line); }
};

using Handler = std::function<void(Scenario&, const Value&)>;
using Section = std::map<std::string, Handler, std::less<>>;

inline double deg(double d) { return d * kPi / 180.0; }

inline ReferenceSchedule::Setpoint setpoint_from(const std::vector<double>& v, bool timed) {
  ReferenceSchedule::Setpoint sp;
  const std::size_t o = timed ? 1 : 0;
  sp.time = timed ? v[0] : 0.0;
  sp.position = Vec3(v[o], v[o + 1], v[o + 2]);
  sp.yaw = deg(v[o + 3]);
  return sp;
}

inline std::map<std::string, Section, std::less<>> sections() {
  std::map<std::string, Section, std::less<>> s;
  s["sim"] = {
      {"name", [](Scenario& c, const Value& v) { c.name = std::string(v.text); }},
      {"duration", [](Scenario& c, const Value& v) { c.duration = v.number(); }},
      {"seed",
       [](Scenario& c, const Value& v) {
         const int seed = v.integer();
         if (seed < 0) throw ParseError("seed must be non-negative", v.line);
         c.seed = static_cast<std::uint64_t>(seed);
       }},
      {"noise", [](Scenario& c, const Value& v) { c.noise = v.flag(); }},
      {"voltage", [](Scenario& c, const Value& v) { c.voltage = v.number(); }},
      {"rate", [](Scenario& c, const Value& v) { c.sim_rate_hz = v.number(); }},
      {"control_divider", [](Scenario& c, const Value& v) { c.control_divider = v.integer(); }},
      {"divergence_bound", [](Scenario& c, const Value& v) { c.divergence_bound = v.number(); }},
  };
  s["plant"] = {
      {"mass", [](Scenario& c, const Value& v) { c.model.mass = v.number(); }},
      {"inertia", [](Scenario& c, const Value& v) { c.model.inertia = v.vec3().asDiagonal(); }},
      {"arm_length", [](Scenario& c, const Value& v) { c.model.arm_length = v.number(); }},
      {"kT_pos", [](Scenario& c, const Value& v) { c.model.kT_pos = v.number(); }},
      {"kT_neg", [](Scenario& c, const Value& v) { c.model.kT_neg = v.number(); }},
      {"kM_pos", [](Scenario& c, const Value& v) { c.model.kM_pos = v.number(); }},
      {"kM_neg", [](Scenario& c, const Value& v) { c.model.kM_neg = v.number(); }},
      {"f_max_pos", [](Scenario& c, const Value& v) { c.model.f_max_pos = v.number(); }},
      {"f_min_neg", [](Scenario& c, const Value& v) { c.model.f_min_neg = v.number(); }},
      {"mismatch", [](Scenario& c, const Value& v) { c.mismatch.enabled = v.flag(); }},
      {"motor_tau", [](Scenario& c, const Value& v) { c.mismatch.motor_tau = v.number(); }},
      {"inertia_scale", [](Scenario& c, const Value& v) { c.mismatch.inertia_scale = v.number(); }},
      {"accel_cross_term", [](Scenario& c, const Value& v) { c.mismatch.accel_cross_term = v.flag(); }},
  };
  s["nmpc"] = {
      {"horizon", [](Scenario& c, const Value& v) { c.nmpc.horizon_steps = v.integer(); }},
      {"dt", [](Scenario& c, const Value& v) { c.nmpc.dt = v.number(); }},
      {"q_r", [](Scenario& c, const Value& v) { c.nmpc.Q_r = v.vec3().asDiagonal(); }},
      {"q_v", [](Scenario& c, const Value& v) { c.nmpc.Q_v = v.vec3().asDiagonal(); }},
      {"q_q", [](Scenario& c, const Value& v) { c.nmpc.Q_q = v.vec3().asDiagonal(); }},
      {"q_omega", [](Scenario& c, const Value& v) { c.nmpc.Q_omega = v.vec3().asDiagonal(); }},
      {"q_u", [](Scenario& c, const Value& v) { c.nmpc.Q_u = v.vec4().asDiagonal(); }},
      {"u_lb", [](Scenario& c, const Value& v) { c.nmpc.u_lb = v.vec4(); }},
      {"u_ub", [](Scenario& c, const Value& v) { c.nmpc.u_ub = v.vec4(); }},
      {"max_iterations", [](Scenario& c, const Value& v) { c.nmpc.max_iterations = v.integer(); }},
      {"tolerance", [](Scenario& c, const Value& v) { c.nmpc.tolerance = v.number(); }},
      {"attitude_gain",
       [](Scenario& c, const Value& v) {
         if (v.text == "high") c.nmpc.Q_q = 500.0 * Mat3::Identity();
         else if (v.text == "low") c.nmpc.Q_q = 50.0 * Mat3::Identity();
         else throw ParseError("attitude_gain must be low or high", v.line);
       }},
  };
  s["allocation"] = {
      {"w", [](Scenario& c, const Value& v) { c.allocation.W = v.vec4().asDiagonal(); }},
      {"lambda", [](Scenario& c, const Value& v) { c.allocation.lambda = v.number(); }},
      {"t_hyst", [](Scenario& c, const Value& v) { c.allocation.t_hyst = v.number(); }},
      {"epsilon_rel", [](Scenario& c, const Value& v) { c.allocation.epsilon_rel = v.number(); }},
      {"bidirectional",
       [](Scenario& c, const Value& v) {
         c.allocation.status[static_cast<std::size_t>(v.motor())] = allocation::MotorStatus::bidirectional;
       }},
  };
  s["ekf"] = {
      {"sigma_omega", [](Scenario& c, const Value& v) { c.ekf.sigma_omega = v.number(); }},
      {"sigma_h", [](Scenario& c, const Value& v) { c.ekf.sigma_h = v.number(); }},
      {"sigma_f", [](Scenario& c, const Value& v) { c.ekf.sigma_f = v.number(); }},
      {"sigma_gyro", [](Scenario& c, const Value& v) { c.ekf.sigma_gyro = v.number(); }},
      {"sigma_T", [](Scenario& c, const Value& v) { c.ekf.sigma_T = v.number(); }},
      {"tau_h", [](Scenario& c, const Value& v) { c.ekf.tau_h = v.number(); }},
      {"tau_f", [](Scenario& c, const Value& v) { c.ekf.tau_f = v.number(); }},
      {"h_bar", [](Scenario& c, const Value& v) { c.ekf.h_bar = v.number(); }},
      {"substeps", [](Scenario& c, const Value& v) { c.ekf.substeps = v.integer(); }},
  };
  // "hover" and "start" set the initial setpoint; "step" and "setpoint" add a
  // timed one.
  const Handler initial = [](Scenario& c, const Value& v) {
    c.reference.setpoints.front() = setpoint_from(v.numbers(4), false);
  };
  const Handler timed = [](Scenario& c, const Value& v) {
    const auto sp = setpoint_from(v.numbers(5), true);
    if (sp.time < 0.0) throw ParseError("setpoint time must be non-negative", v.line);
    c.reference.setpoints.push_back(sp);
  };
  s["reference"] = {
      {"hover", initial},
      {"start", initial},
      {"step", timed},
      {"setpoint", timed},
      {"preview", [](Scenario& c, const Value& v) { c.reference.preview = v.flag(); }},
  };
  s["faults"] = {
      {"cut",
       [](Scenario& c, const Value& v) {
         const auto n = v.numbers(2);
         c.faults.push_back({n[0], motor_index(n[1], v.line), FaultMode::cut, 0.0});
       }},
      {"stuck",
       [](Scenario& c, const Value& v) {
         const auto n = v.numbers(3);
         c.faults.push_back({n[0], motor_index(n[1], v.line), FaultMode::stuck, n[2]});
       }},
  };
  return s;
}

}  // namespace scenario_detail

/// Parses a scenario; unspecified keys keep their defaults. Throws ParseError
/// with the offending line number, or ConfigError if the result is invalid.
inline Scenario parse_scenario(std::istream& is) {
  using namespace scenario_detail;
  const auto table = sections();
  Scenario sc;
  const Section* current = nullptr;
  std::string raw;
  int n = 0;
  while (std::getline(is, raw)) {
    ++n;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError("unterminated section header", n);
      const auto name = trim(line.substr(1, line.size() - 2));
      const auto it = table.find(name);
      if (it == table.end()) throw ParseError("unknown section [" + std::string(name) + "]", n);
      current = &it->second;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected 'key = value'", n);
    if (current == nullptr) throw ParseError("key outside of a section", n);
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    const auto h = current->find(key);
    if (h == current->end()) throw ParseError("unknown key '" + std::string(key) + "'", n);
    if (value.empty()) throw ParseError("missing value for '" + std::string(key) + "'", n);
    h->second(sc, Value{value, n});
  }
  sc.reference.sort();
  sc.validate();
  return sc;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open scenario file " + path);
  return parse_scenario(is);
}

}  // namespace ftmpc::sim
