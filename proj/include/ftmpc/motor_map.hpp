#pragma once

// Bidirectional motor model: thrust <-> rotor speed (f = k_T omega^2) and
// rotor speed <-> normalized command, the latter through per-voltage
// quadratic fits omega(cmd) = a cmd^2 + b cmd + c.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ftmpc/types.hpp"

namespace ftmpc::motor {

struct MotorCoeffs {
  double kT_pos = 1.2e-5;
  double kT_neg = 0.8e-5;
  double kM_pos = 0.016;
  double kM_neg = 0.012;

  static MotorCoeffs from_params(const MavParams& p) { return {p.kT_pos, p.kT_neg, p.kM_pos, p.kM_neg}; }

  void validate() const {
    if (!(kT_pos > 0 && kT_neg > 0 && kM_pos > 0 && kM_neg > 0))
      throw ConfigError("motor coefficients must be strictly positive");
    if (kT_neg > kT_pos) throw ConfigError("inverted thrust coefficient must not exceed the normal one");
  }
};

/// Thrust sign does not match the commanded rotation direction.
class DirectionMismatch : public Error {
 public:
  using Error::Error;
};

inline double thrust_to_speed(double f, bool inverted, const MotorCoeffs& c) {
  if ((f > 0.0 && inverted) || (f < 0.0 && !inverted))
    throw DirectionMismatch("thrust sign inconsistent with rotation direction");
  return std::sqrt(std::abs(f) / (inverted ? c.kT_neg : c.kT_pos));
}

/// Signed thrust for a rotor spinning at omega (>= 0) in the given direction.
inline double speed_to_thrust(double omega, bool inverted, const MotorCoeffs& c) {
  const double mag = (inverted ? c.kT_neg : c.kT_pos) * omega * omega;
  return inverted ? -mag : mag;
}

struct Quadratic {
  double a = 0.0, b = 0.0, c = 0.0;

  double operator()(double x) const { return (a * x + b) * x + c; }

  /// Smallest root of q(x) = y on the increasing branch; may fall outside [0, 1].
  double inverse(double y) const {
    if (std::abs(a) < 1e-300) return (y - c) / b;
    const double disc = b * b - 4.0 * a * (c - y);
    const double sq = std::sqrt(std::max(disc, 0.0));
    // Numerically stable form of (-b + sq) / (2a).
    if (b >= 0.0) return 2.0 * (y - c) / (b + sq);
    return (-b + sq) / (2.0 * a);
  }

  bool increasing_on_unit_interval() const { return b > 0.0 && (2.0 * a + b) > 0.0; }
};

struct CommandResult {
  double command = 0.0;
  bool saturated = false;
};

class CommandTable {
 public:
  struct Level {
    double voltage;
    Quadratic fit;
  };

  CommandTable() = default;
  explicit CommandTable(std::vector<Level> levels) : levels_(std::move(levels)) {
    if (levels_.empty()) throw ConfigError("command table needs at least one voltage level");
    std::sort(levels_.begin(), levels_.end(), [](const Level& x, const Level& y) { return x.voltage < y.voltage; });
    for (std::size_t i = 0; i < levels_.size(); ++i) {
      if (!levels_[i].fit.increasing_on_unit_interval())
        throw ConfigError("command table quadratic at " + std::to_string(levels_[i].voltage) +
                          " V is not increasing on [0, 1]");
      if (i > 0 && levels_[i].voltage == levels_[i - 1].voltage)
        throw ConfigError("duplicate voltage level in command table");
    }
  }

  /// Synthetic family omega = s(V) (cmd^2 + 0.6 cmd - 0.05), s(V) = 40.3 V.
  /// Not fitted to measured data.
  static CommandTable synthetic() {
    std::vector<Level> levels;
    for (int i = 0; i <= 10; ++i) {
      const double v = 13.2 + 0.4 * i;
      const double s = 40.3 * v;
      levels.push_back({v, Quadratic{s, 0.6 * s, -0.05 * s}});
    }
    return CommandTable(std::move(levels));
  }

  /// Plain text: one "V a b c" line per level; '#' starts a comment.
  static CommandTable parse(std::istream& in) {
    std::vector<Level> levels;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto pos = line.find('#'); pos != std::string::npos) line.erase(pos);
      std::istringstream ls(line);
      Level lv{};
      if (!(ls >> lv.voltage)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        throw ParseError("expected 'V a b c'", lineno);
      }
      if (!(ls >> lv.fit.a >> lv.fit.b >> lv.fit.c)) throw ParseError("expected 'V a b c'", lineno);
      std::string extra;
      if (ls >> extra) throw ParseError("trailing token '" + extra + "'", lineno);
      levels.push_back(lv);
    }
    return CommandTable(std::move(levels));
  }

  static CommandTable load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open command table '" + path + "'");
    return parse(in);
  }

  const std::vector<Level>& levels() const { return levels_; }
  double min_voltage() const { return levels_.front().voltage; }
  double max_voltage() const { return levels_.back().voltage; }

  /// Normalized command achieving rotor speed omega at the given voltage:
  /// inverse of each bracketing quadratic, then linear in voltage. Commands
  /// outside [0, 1] are clamped and flagged.
  CommandResult speed_to_command(double omega, double voltage) const {
    check_voltage(voltage);
    const double cmd = raw_command(omega, voltage);
    CommandResult r{cmd, false};
    if (cmd > 1.0 || cmd < 0.0) {
      r.saturated = true;
      r.command = std::clamp(cmd, 0.0, 1.0);
    }
    return r;
  }

  /// Rotor speed reached by a command; inverse of speed_to_command on the
  /// unsaturated range. Commands below idle give zero speed.
  double command_to_speed(double command, double voltage) const {
    check_voltage(voltage);
    if (command <= raw_command(0.0, voltage)) return 0.0;
    double lo = 0.0;
    double hi = 0.0;
    for (const auto& l : levels_) hi = std::max(hi, l.fit(1.0));
    hi *= 1.5;
    for (int i = 0; i < 80; ++i) {
      const double mid = 0.5 * (lo + hi);
      if (raw_command(mid, voltage) < command) lo = mid; else hi = mid;
    }
    return 0.5 * (lo + hi);
  }

 private:
  void check_voltage(double voltage) const {
    if (levels_.empty()) throw ConfigError("empty command table");
    if (voltage < min_voltage() || voltage > max_voltage())
      throw ConfigError("voltage " + std::to_string(voltage) + " V outside command table range");
  }

  double raw_command(double omega, double voltage) const {
    auto hi = std::lower_bound(levels_.begin(), levels_.end(), voltage,
                               [](const Level& l, double v) { return l.voltage < v; });
    if (hi->voltage == voltage) return hi->fit.inverse(omega);
    auto lo = std::prev(hi);
    const double t = (voltage - lo->voltage) / (hi->voltage - lo->voltage);
    return (1.0 - t) * lo->fit.inverse(omega) + t * hi->fit.inverse(omega);
  }

  std::vector<Level> levels_;
};

}  // namespace ftmpc::motor
