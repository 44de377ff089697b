#pragma once

// Run log CSV and metrics key-value files.
//
// CSV layout: a version comment line, one header row, then one row per plant
// tick. Events are attached to the first row whose time is >= the event time
// and serialized as "kind:motor" (1-based motor, 0 if not motor specific),
// several events separated by ';'.

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ftmpc/sim/runlog.hpp"

namespace ftmpc::sim {

inline constexpr const char* kLogVersionLine = "# ftmpc-runlog v1";

inline std::vector<std::string> log_columns() {
  std::vector<std::string> c = {"t",  "x",  "y",  "z",  "qx",    "qy",    "qz",    "qw",      "vx",     "vy",
                                "vz", "wx", "wy", "wz", "x_ref", "y_ref", "z_ref", "yaw_ref", "Mx_cmd", "My_cmd",
                                "Mz_cmd", "T_cmd"};
  const auto per_motor = [&c](const char* prefix) {
    for (int i = 1; i <= kNumMotors; ++i) c.push_back(std::string(prefix) + std::to_string(i));
  };
  per_motor("f_alloc");
  c.emplace_back("d");
  per_motor("f_true");
  for (const char* s : {"gyro_x", "gyro_y", "gyro_z", "accel_z"}) c.emplace_back(s);
  per_motor("health");
  per_motor("health_hi");
  per_motor("health_lo");
  c.emplace_back("saturated");
  c.emplace_back("events");
  return c;
}

namespace detail {

inline void put_double(std::string& out, double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, r.ptr);
}

inline double get_double(std::string_view s, int line) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw ParseError("bad number '" + std::string(s) + "'", line);
  return v;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

inline std::string join_columns() {
  std::string h;
  for (const auto& c : log_columns()) {
    if (!h.empty()) h += ',';
    h += c;
  }
  return h;
}

inline EventKind event_from_name(std::string_view s, int line) {
  for (EventKind k : {EventKind::fault_injected, EventKind::fault_detected, EventKind::reconfigured, EventKind::diverged})
    if (s == event_name(k)) return k;
  throw ParseError("unknown event '" + std::string(s) + "'", line);
}

}  // namespace detail

inline void write_log_csv(std::ostream& os, const RunLog& log) {
  os << kLogVersionLine << '\n' << detail::join_columns() << '\n';
  std::size_t ev = 0;
  std::string line;
  for (const auto& r : log.rows) {
    line.clear();
    const auto num = [&line](double v) {
      if (!line.empty()) line += ',';
      detail::put_double(line, v);
    };
    num(r.t);
    for (int i = 0; i < 3; ++i) num(r.state.r_WB(i));
    for (int i = 0; i < 4; ++i) num(r.state.q_WB.coeffs()(i));
    for (int i = 0; i < 3; ++i) num(r.state.v_WB(i));
    for (int i = 0; i < 3; ++i) num(r.state.omega_B(i));
    for (int i = 0; i < 3; ++i) num(r.r_ref(i));
    num(r.yaw_ref);
    for (int i = 0; i < 4; ++i) num(r.u_cmd(i));
    for (int i = 0; i < kNumMotors; ++i) num(r.f_alloc(i));
    line += ',';
    for (bool b : r.d) line += b ? '1' : '0';
    for (int i = 0; i < kNumMotors; ++i) num(r.f_true(i));
    for (int i = 0; i < 3; ++i) num(r.gyro(i));
    num(r.accel_z);
    for (double h : r.health) num(h);
    for (double h : r.health_upper) num(h);
    for (double h : r.health_lower) num(h);
    line += r.saturated ? ",1," : ",0,";
    bool first = true;
    while (ev < log.events.size() && log.events[ev].time <= r.t + 1e-9) {
      if (!first) line += ';';
      first = false;
      line += event_name(log.events[ev].kind);
      line += ':';
      line += std::to_string(log.events[ev].motor + 1);
      ++ev;
    }
    os << line << '\n';
  }
}

inline RunLog read_log_csv(std::istream& is) {
  RunLog log;
  std::string line;
  int n = 0;
  if (!std::getline(is, line)) throw ParseError("empty log file");
  ++n;
  if (line != kLogVersionLine) throw ParseError("missing or unsupported version line", n);
  if (!std::getline(is, line)) throw ParseError("missing header row");
  ++n;
  if (line != detail::join_columns()) throw ParseError("unexpected column header", n);
  const std::size_t ncol = log_columns().size();

  while (std::getline(is, line)) {
    ++n;
    if (line.empty()) continue;
    const auto f = detail::split(line, ',');
    if (f.size() != ncol) throw ParseError("expected " + std::to_string(ncol) + " fields", n);
    std::size_t c = 0;
    const auto num = [&] { return detail::get_double(f[c++], n); };
    LogRow r;
    r.t = num();
    for (int i = 0; i < 3; ++i) r.state.r_WB(i) = num();
    for (int i = 0; i < 4; ++i) r.state.q_WB.coeffs()(i) = num();
    for (int i = 0; i < 3; ++i) r.state.v_WB(i) = num();
    for (int i = 0; i < 3; ++i) r.state.omega_B(i) = num();
    for (int i = 0; i < 3; ++i) r.r_ref(i) = num();
    r.yaw_ref = num();
    for (int i = 0; i < 4; ++i) r.u_cmd(i) = num();
    for (int i = 0; i < kNumMotors; ++i) r.f_alloc(i) = num();
    const std::string_view d = f[c++];
    if (d.size() != kNumMotors || d.find_first_not_of("01") != std::string_view::npos)
      throw ParseError("bad direction field '" + std::string(d) + "'", n);
    for (std::size_t i = 0; i < kNumMotors; ++i) r.d[i] = d[i] == '1';
    for (int i = 0; i < kNumMotors; ++i) r.f_true(i) = num();
    for (int i = 0; i < 3; ++i) r.gyro(i) = num();
    r.accel_z = num();
    for (auto& h : r.health) h = num();
    for (auto& h : r.health_upper) h = num();
    for (auto& h : r.health_lower) h = num();
    const std::string_view sat = f[c++];
    if (sat != "0" && sat != "1") throw ParseError("bad saturated flag", n);
    r.saturated = sat == "1";
    const std::string_view evs = f[c++];
    if (!evs.empty()) {
      for (std::string_view e : detail::split(evs, ';')) {
        const auto colon = e.find(':');
        if (colon == std::string_view::npos) throw ParseError("bad event '" + std::string(e) + "'", n);
        const EventKind k = detail::event_from_name(e.substr(0, colon), n);
        int motor = 0;
        const auto m = e.substr(colon + 1);
        const auto res = std::from_chars(m.data(), m.data() + m.size(), motor);
        if (res.ec != std::errc() || res.ptr != m.data() + m.size() || motor < 0 || motor > kNumMotors)
          throw ParseError("bad event motor in '" + std::string(e) + "'", n);
        log.events.push_back({r.t, k, motor - 1});
      }
    }
    if (!log.rows.empty() && !(r.t > log.rows.back().t)) throw ParseError("timestamps not strictly increasing", n);
    log.rows.push_back(r);
  }
  return log;
}

inline void save_log_csv(const std::string& path, const RunLog& log) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path);
  write_log_csv(os, log);
  if (!os) throw Error("write failed for " + path);
}

inline RunLog load_log_csv(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open " + path);
  return read_log_csv(is);
}

namespace detail {
inline std::string opt_value(const std::optional<double>& v) {
  if (!v) return "na";
  std::string s;
  put_double(s, *v);
  return s;
}
inline std::string value(double v) {
  std::string s;
  put_double(s, v);
  return s;
}
}  // namespace detail

/// One "key = value" per line; absent quantities are written as "na".
inline void write_metrics(std::ostream& os, const Metrics& m) {
  os << "detection_delay = " << detail::opt_value(m.detection_delay) << '\n'
     << "height_loss = " << detail::value(m.height_loss) << '\n'
     << "rmse_pre_fault = " << detail::value(m.rmse_pre_fault) << '\n'
     << "rmse_post_fault = " << detail::opt_value(m.rmse_post_fault) << '\n'
     << "yaw_convergence_time = " << detail::opt_value(m.yaw_convergence_time) << '\n'
     << "saturation_fraction = " << detail::value(m.saturation_fraction) << '\n'
     << "final_position_error = " << detail::value(m.final_position_error) << '\n'
     << "max_position_norm = " << detail::value(m.max_position_norm) << '\n'
     << "diverged = " << (m.diverged ? "true" : "false") << '\n';
}

inline void save_metrics(const std::string& path, const Metrics& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path);
  write_metrics(os, m);
}

}  // namespace ftmpc::sim
