#pragma once

// Subcommand implementations behind the ftmpc executable. Human-readable text
// goes to the given stream; data goes to files only.

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <mutex>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "ftmpc/cli/svg.hpp"
#include "ftmpc/sim/log_io.hpp"
#include "ftmpc/sim/scenario_io.hpp"
#include "ftmpc/sim/simulator.hpp"

namespace ftmpc::cli {

namespace fs = std::filesystem;

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,     // I/O errors, failed self-test checks
  kExitBadInput = 2,    // missing file, parse or configuration error
  kExitDiverged = 3,
};

struct RunOptions {
  std::string scenario;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  std::optional<bool> mismatch;
  bool no_noise = false;
  int verbosity = 0;
};

/// Loads the scenario and applies command-line overrides.
inline sim::Scenario prepare_scenario(const RunOptions& o) {
  if (!fs::exists(o.scenario)) throw ConfigError("scenario file not found: " + o.scenario);
  sim::Scenario sc = sim::load_scenario(o.scenario);
  if (o.seed) sc.seed = *o.seed;
  if (o.mismatch) sc.mismatch.enabled = *o.mismatch;
  if (o.no_noise) sc.noise = false;
  return sc;
}

inline std::string format_metrics(const sim::Metrics& m) {
  std::ostringstream os;
  sim::write_metrics(os, m);
  return os.str();
}

inline int cmd_run(const RunOptions& o, std::ostream& out) {
  sim::Scenario sc;
  try {
    sc = prepare_scenario(o);
  } catch (const Error& e) {
    out << "error: " << o.scenario << ": " << e.what() << '\n';
    return kExitBadInput;
  }
  const std::string stem = fs::path(o.scenario).stem().string();
  const auto t0 = std::chrono::steady_clock::now();
  const sim::RunResult r = sim::run(sc);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  try {
    fs::create_directories(o.out_dir);
    const fs::path dir(o.out_dir);
    sim::save_log_csv((dir / (stem + ".csv")).string(), r.log);
    sim::save_metrics((dir / (stem + ".metrics")).string(), r.metrics);
  } catch (const std::exception& e) {
    out << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  out << stem << ": " << r.log.rows.size() << " samples, " << std::fixed << std::setprecision(2) << wall
      << " s wall\n";
  if (o.verbosity > 0) out << format_metrics(r.metrics);
  if (r.diverged) {
    out << "diverged: " << r.message << '\n';
    return kExitDiverged;
  }
  return kExitOk;
}

struct BatchOptions {
  std::vector<std::string> scenarios;
  std::string out_dir = ".";
  int seeds = 1;          // runs seeds first_seed .. first_seed + seeds - 1
  std::uint64_t first_seed = 1;
  std::optional<bool> mismatch;
  bool no_noise = false;
  int jobs = 0;           // 0: hardware concurrency
};

/// Runs every (scenario, seed) pair on a small thread pool and writes one
/// CSV/metrics pair per run plus summary.csv.
inline int cmd_batch(const BatchOptions& o, std::ostream& out) {
  struct Job {
    sim::Scenario scenario;
    std::string stem;
  };
  std::vector<Job> jobs;
  for (const auto& path : o.scenarios) {
    for (int k = 0; k < o.seeds; ++k) {
      RunOptions ro;
      ro.scenario = path;
      ro.seed = o.first_seed + static_cast<std::uint64_t>(k);
      ro.mismatch = o.mismatch;
      ro.no_noise = o.no_noise;
      try {
        jobs.push_back({prepare_scenario(ro), fs::path(path).stem().string() + "_s" + std::to_string(*ro.seed)});
      } catch (const Error& e) {
        out << "error: " << path << ": " << e.what() << '\n';
        return kExitBadInput;
      }
    }
  }
  try {
    fs::create_directories(o.out_dir);
  } catch (const std::exception& e) {
    out << "error: " << e.what() << '\n';
    return kExitFailure;
  }

  std::vector<std::optional<sim::Metrics>> metrics(jobs.size());
  std::vector<std::string> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        const auto r = sim::run(jobs[i].scenario);
        const fs::path dir(o.out_dir);
        sim::save_log_csv((dir / (jobs[i].stem + ".csv")).string(), r.log);
        sim::save_metrics((dir / (jobs[i].stem + ".metrics")).string(), r.metrics);
        metrics[i] = r.metrics;
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  unsigned n_threads = o.jobs > 0 ? static_cast<unsigned>(o.jobs) : std::max(1u, std::thread::hardware_concurrency());
  n_threads = std::min<unsigned>(n_threads, static_cast<unsigned>(std::max<std::size_t>(1, jobs.size())));
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  std::ofstream summary(fs::path(o.out_dir) / "summary.csv");
  summary << "run,detection_delay,height_loss,rmse_pre_fault,rmse_post_fault,yaw_convergence_time,"
             "saturation_fraction,final_position_error,diverged\n";
  int status = kExitOk;
  const auto opt = [](const std::optional<double>& v) { return v ? std::to_string(*v) : std::string("na"); };
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (!metrics[i]) {
      out << jobs[i].stem << ": error: " << errors[i] << '\n';
      status = kExitFailure;
      continue;
    }
    const auto& m = *metrics[i];
    summary << jobs[i].stem << ',' << opt(m.detection_delay) << ',' << m.height_loss << ',' << m.rmse_pre_fault << ','
            << opt(m.rmse_post_fault) << ',' << opt(m.yaw_convergence_time) << ',' << m.saturation_fraction << ','
            << m.final_position_error << ',' << (m.diverged ? 1 : 0) << '\n';
    out << jobs[i].stem << ": " << (m.diverged ? "diverged" : "ok") << '\n';
    if (m.diverged && status == kExitOk) status = kExitDiverged;
  }
  return status;
}

namespace plot_detail {

// At most ~max_points samples per chart, always keeping the first and last.
inline std::vector<std::size_t> decimate(std::size_t n, std::size_t max_points) {
  std::vector<std::size_t> idx;
  const std::size_t stride = std::max<std::size_t>(1, (n + max_points - 1) / max_points);
  for (std::size_t i = 0; i < n; i += stride) idx.push_back(i);
  if (n > 0 && idx.back() != n - 1) idx.push_back(n - 1);
  return idx;
}

inline const char* motor_color(int i) {
  static const char* c[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"};
  return c[i % 6];
}

}  // namespace plot_detail

/// Builds the four standard charts from a run log.
inline std::vector<std::pair<std::string, Chart>> build_charts(const sim::RunLog& log) {
  if (log.rows.empty()) throw Error("log has no rows; nothing to plot");
  const auto idx = plot_detail::decimate(log.rows.size(), 4000);
  std::vector<double> t;
  for (auto i : idx) t.push_back(log.rows[i].t);
  const auto column = [&](auto&& get) {
    std::vector<double> v;
    v.reserve(idx.size());
    for (auto i : idx) v.push_back(get(log.rows[i]));
    return v;
  };

  Chart pos{"Position vs reference", "t [s]", "position [m]", t};
  const char* axes = "xyz";
  for (int a = 0; a < 3; ++a) {
    const std::string n(1, axes[a]);
    pos.series.push_back({n, column([a](const sim::LogRow& r) { return r.state.r_WB(a); }),
                          plot_detail::motor_color(a)});
    pos.series.push_back({n + " ref", column([a](const sim::LogRow& r) { return r.r_ref(a); }),
                          plot_detail::motor_color(a), true});
  }

  Chart yaw{"Yaw error", "t [s]", "yaw error [deg]", t};
  yaw.series.push_back({"yaw error", column([](const sim::LogRow& r) { return r.yaw_error() * 180.0 / kPi; })});

  Chart health{"Motor health L(h) with 3-sigma band", "t [s]", "health", t};
  health.h_lines.push_back(0.5);
  for (int m = 0; m < kNumMotors; ++m) {
    const auto s = static_cast<std::size_t>(m);
    const std::string c = plot_detail::motor_color(m);
    health.bands.push_back({column([s](const sim::LogRow& r) { return r.health_lower[s]; }),
                            column([s](const sim::LogRow& r) { return r.health_upper[s]; }), c});
    health.series.push_back(
        {"motor " + std::to_string(m + 1), column([s](const sim::LogRow& r) { return r.health[s]; }), c});
  }

  Chart thrust{"Motor thrusts", "t [s]", "thrust [N]", t};
  for (int m = 0; m < kNumMotors; ++m)
    thrust.series.push_back({"motor " + std::to_string(m + 1),
                             column([m](const sim::LogRow& r) { return r.f_true(m); }), plot_detail::motor_color(m)});

  return {{"position", pos}, {"yaw", yaw}, {"health", health}, {"thrust", thrust}};
}

inline int cmd_plot(const std::string& log_path, const std::string& out_dir, std::ostream& out) {
  sim::RunLog log;
  try {
    if (!fs::exists(log_path)) throw ConfigError("log file not found: " + log_path);
    log = sim::load_log_csv(log_path);
    if (log.rows.empty()) throw ParseError("log has no rows; nothing to plot");
  } catch (const Error& e) {
    out << "error: " << log_path << ": " << e.what() << '\n';
    return kExitBadInput;
  }
  try {
    fs::create_directories(out_dir);
    const std::string stem = fs::path(log_path).stem().string();
    for (const auto& [name, chart] : build_charts(log)) {
      const fs::path p = fs::path(out_dir) / (stem + "_" + name + ".svg");
      std::ofstream os(p);
      if (!os) throw Error("cannot write " + p.string());
      write_svg(os, chart);
      out << "wrote " << p.string() << '\n';
    }
  } catch (const std::exception& e) {
    out << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

struct SelftestOptions {
  // Test hook: hand the allocator a model with the yaw moment coefficient
  // sign flipped, which the independent allocation check must catch.
  bool corrupt_km = false;
};

struct SelftestCheck {
  std::string name;
  bool passed;
  std::string detail;
};

namespace selftest_detail {

// Allocation matrix written out from the arm layout, independent of
// allocation_matrix().
inline Eigen::Matrix<double, 4, kNumMotors> reference_allocation(const MavParams& p) {
  Eigen::Matrix<double, 4, kNumMotors> a;
  const double s30 = 0.5, c30 = std::sqrt(3.0) / 2.0, l = p.arm_length, k = p.kM_pos;
  a << l * s30, l, l * s30, -l * s30, -l, -l * s30,  //
      -l * c30, 0.0, l * c30, l * c30, 0.0, -l * c30,  //
      k, -k, k, -k, k, -k,                            //
      1, 1, 1, 1, 1, 1;
  return a;
}

}  // namespace selftest_detail

inline std::vector<SelftestCheck> run_selftest(const SelftestOptions& o) {
  std::vector<SelftestCheck> out;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  const auto fmt = [](double v) {
    std::ostringstream s;
    s << std::scientific << std::setprecision(2) << v;
    return s.str();
  };

  {  // quaternion boxplus/boxminus round trips
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const Quat q = Quat(Eigen::Vector4d(uni(rng), uni(rng), uni(rng), uni(rng)).normalized());
      const Vec3 d = 1.8 * Vec3(uni(rng), uni(rng), uni(rng));  // |d| < pi
      worst = std::max(worst, (quat_boxminus(quat_boxplus(q, d), q) - d).norm());
      worst = std::max(worst, quat_boxminus(q, q).norm());
    }
    out.push_back({"quaternion boxplus/boxminus round trip", worst < 1e-12, "max err " + fmt(worst)});
  }

  {  // allocation equals the pseudo-inverse on interior wrenches
    MavParams truth;
    MavParams model = truth;
    if (o.corrupt_km) model.kM_pos = -model.kM_pos;
    const auto a_ref = selftest_detail::reference_allocation(truth);
    const Eigen::Matrix<double, kNumMotors, 4> pinv = a_ref.transpose() * (a_ref * a_ref.transpose()).inverse();
    allocation::AllocationConfig cfg;
    double worst = 0.0;
    int tested = 0;
    for (int i = 0; i < 200; ++i) {
      const Vec4 u(0.5 * uni(rng), 0.5 * uni(rng), 0.1 * uni(rng), truth.hover_thrust() * (1.0 + 0.3 * uni(rng)));
      const MotorVec f_ref = pinv * u;
      if (f_ref.minCoeff() <= 0.1 || f_ref.maxCoeff() >= truth.f_max_pos - 0.1) continue;
      const auto step = allocation::allocate(u, model, cfg, allocation::HysteresisState{}, 0.0);
      worst = std::max(worst, (step.result.f - f_ref).cwiseAbs().maxCoeff());
      ++tested;
    }
    out.push_back({"allocation matches pseudo-inverse (" + std::to_string(tested) + " wrenches)",
                   tested > 0 && worst < 1e-6, "max err " + fmt(worst)});
  }

  {  // EKF fixed point at hover with consistent measurements
    MavParams mav;
    fault::EkfParams p;
    p.substeps = 4;
    fault::HealthEkf ekf(mav, p);
    const double share = mav.hover_thrust() / kNumMotors;
    fault::HealthBelief b = fault::initial_belief(p, Vec3::Zero(), share);
    const fault::BeliefVec mean0 = b.mean;
    // Measurement the filter itself predicts at the initial belief.
    fault::ImuMeasurement z;
    z.accel_z = fault::HealthEkf::observe(b)(3) / mav.mass;
    double min_eig = 1.0;
    for (int k = 0; k < 400; ++k) {
      b = ekf.predict(b, MotorVec::Constant(share), all_normal(), p.dt());
      b = ekf.update(b, z);
      min_eig = std::min(min_eig, Eigen::SelfAdjointEigenSolver<fault::BeliefMat>(b.cov).eigenvalues().minCoeff());
    }
    const double drift = (b.mean - mean0).cwiseAbs().maxCoeff();
    out.push_back({"EKF hover fixed point", drift < 1e-6 && min_eig > 0.0,
                   "mean drift " + fmt(drift) + ", min eig " + fmt(min_eig)});
  }

  {  // motor map round trip across the table's operating range
    const auto table = motor::CommandTable::synthetic();
    const auto coeffs = motor::MotorCoeffs::from_params(MavParams{});
    double worst = 0.0;
    for (double f = 0.5; f <= 8.0; f += 0.5) {
      const double w = motor::thrust_to_speed(f, false, coeffs);
      const auto c = table.speed_to_command(w, 16.0);
      const double back = motor::speed_to_thrust(table.command_to_speed(c.command, 16.0), false, coeffs);
      worst = std::max(worst, std::abs(back - f));
    }
    out.push_back({"motor map thrust round trip", worst < 1e-9, "max err " + fmt(worst)});
  }

  {  // hover is an equilibrium of the discrete dynamics
    MavParams mav;
    MavState x;
    x.r_WB = Vec3(0, 0, 1);
    ControlInput u;
    u.thrust = mav.hover_thrust();
    for (int k = 0; k < 400; ++k) x = integrate_step(x, u, mav, 0.0025);
    const double err = (x.r_WB - Vec3(0, 0, 1)).norm() + x.v_WB.norm();
    out.push_back({"hover equilibrium of the integrator", err < 1e-12, "drift " + fmt(err)});
  }
  return out;
}

inline int cmd_selftest(const SelftestOptions& o, std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto checks = run_selftest(o);
  bool ok = true;
  for (const auto& c : checks) {
    out << (c.passed ? "PASS  " : "FAIL  ") << std::left << std::setw(52) << c.name << c.detail << '\n';
    ok = ok && c.passed;
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out << (ok ? "all checks passed" : "self-test FAILED") << " (" << std::fixed << std::setprecision(2) << wall
      << " s)\n";
  return ok ? kExitOk : kExitFailure;
}

}  // namespace ftmpc::cli
