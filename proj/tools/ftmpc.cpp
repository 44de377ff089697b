// ftmpc: run fault-tolerant NMPC simulations, batches, plots and self-tests.

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "ftmpc/cli/commands.hpp"

int main(int argc, char** argv) {
  using namespace ftmpc::cli;
  CLI::App app{"Fault-tolerant hexacopter NMPC simulator"};
  app.require_subcommand(1);
  int verbosity = 0;
  app.add_flag("-v,--verbose", verbosity, "Print metrics after each run");

  RunOptions run;
  std::string mismatch;
  auto* run_cmd = app.add_subcommand("run", "Simulate one scenario, write <name>.csv and <name>.metrics");
  run_cmd->add_option("--scenario", run.scenario, "Scenario file")->required();
  run_cmd->add_option("--out", run.out_dir, "Output directory");
  run_cmd->add_option("--seed", run.seed, "Noise seed override");
  run_cmd->add_option("--mismatch", mismatch, "Plant mismatch on|off")->check(CLI::IsMember({"on", "off"}));
  run_cmd->add_flag("--no-noise", run.no_noise, "Disable IMU noise");

  BatchOptions batch;
  std::string batch_mismatch;
  auto* batch_cmd = app.add_subcommand("batch", "Run scenarios over several seeds in parallel");
  batch_cmd->add_option("--scenario", batch.scenarios, "Scenario file (repeatable)")->required();
  batch_cmd->add_option("--out", batch.out_dir, "Output directory");
  batch_cmd->add_option("--seed", batch.first_seed, "First seed");
  batch_cmd->add_option("--seeds", batch.seeds, "Number of seeds per scenario")->check(CLI::PositiveNumber);
  batch_cmd->add_option("--jobs", batch.jobs, "Worker threads (default: all cores)");
  batch_cmd->add_option("--mismatch", batch_mismatch, "Plant mismatch on|off")->check(CLI::IsMember({"on", "off"}));
  batch_cmd->add_flag("--no-noise", batch.no_noise, "Disable IMU noise");

  std::string log_path, plot_out = ".";
  auto* plot_cmd = app.add_subcommand("plot", "Write SVG charts from a run log");
  plot_cmd->add_option("--log", log_path, "Run log CSV")->required();
  plot_cmd->add_option("--out", plot_out, "Output directory");

  SelftestOptions selftest;
  auto* selftest_cmd = app.add_subcommand("selftest", "Run the invariant quick-suite");
  selftest_cmd->add_flag("--corrupt-km", selftest.corrupt_km, "Flip the yaw moment coefficient sign (test hook)")
      ->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitBadInput;
  }

  if (*run_cmd) {
    run.verbosity = verbosity;
    if (!mismatch.empty()) run.mismatch = mismatch == "on";
    return cmd_run(run, std::cout);
  }
  if (*batch_cmd) {
    if (!batch_mismatch.empty()) batch.mismatch = batch_mismatch == "on";
    return cmd_batch(batch, std::cout);
  }
  if (*plot_cmd) return cmd_plot(log_path, plot_out, std::cout);
  return cmd_selftest(selftest, std::cout);
}
