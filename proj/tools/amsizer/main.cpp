// SPDX-License-Identifier: Apache-2.0
// amsizer: sizing, measurement, checking, campaigns and variation studies.
#include "amsizer/cli.hpp"

#include <atomic>
#include <csignal>
#include <cstring>
#include <iostream>

#include <CLI11.hpp>

namespace {

using namespace amsizer;

// Config file values become the option defaults, so flags still win.
std::filesystem::path find_config(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--config") == 0 && i + 1 < argc)
      return argv[i + 1];
    if (std::strncmp(argv[i], "--config=", 9) == 0)
      return argv[i] + 9;
  }
  return {};
}

void circuit_options(CLI::App* cmd, RunConfig& cfg) {
  cmd->add_option("--circuit", cfg.circuit, "Shipped benchmark name");
  cmd->add_option("--netlist", cfg.netlist, "SPICE netlist");
  cmd->add_option("--manifest", cfg.manifest, "Benchmark manifest for --netlist");
  cmd->add_option("--fixture", cfg.fixture, "Named design point from the manifest");
  cmd->add_option("--data-dir", cfg.data_dir, "Directory holding benchmarks/ and models/");
  cmd->add_option("--workdir", cfg.workdir, "Output directory");
  cmd->add_option("--spice", cfg.spice.executable, "SPICE engine executable");
}

void engine_options(CLI::App* cmd, RunConfig& cfg, std::string& mode) {
  cmd->add_option("--group", cfg.group, "Target group (G1, G2, G3) or target file");
  cmd->add_option("--engine", cfg.engine, "Proposal engine")->check(CLI::IsMember({"baseline", "llm"}));
  cmd->add_option("--seed", cfg.seed, "Seed of the baseline engine");
  cmd->add_option("--budget", cfg.budget, "Iteration budget")->check(CLI::PositiveNumber);
  cmd->add_option("--transcript-mode", mode, "LLM transcript handling")
      ->check(CLI::IsMember({"live", "record", "replay"}));
  cmd->add_option("--transcript", cfg.transcript, "Transcript file (size) or directory (bench)");
}

} // namespace

int main(int argc, char** argv) {
  static std::atomic<bool> interrupted{false};
  RunConfig cfg;
  std::string config_path;
  try {
    if (const auto path = find_config(argc, argv); !path.empty())
      apply_config_file(cfg, path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return ExitConfigError;
  }
  std::string mode(to_string(cfg.transcript_mode));

  CLI::App app{"Analog circuit sizing with simulation in the loop"};
  app.require_subcommand(1);
  app.add_option("--config", config_path, "JSON config file (flags override it)");
  app.add_flag("-v,--verbose", cfg.verbose, "More output on standard error");

  auto* size = app.add_subcommand("size", "Optimize a circuit until it meets its targets");
  circuit_options(size, cfg);
  engine_options(size, cfg, mode);

  auto* measure = app.add_subcommand("measure", "Simulate and measure a design point once");
  circuit_options(measure, cfg);
  measure->add_option("--group", cfg.group, "Target group (G1, G2, G3) or target file");
  measure->add_option("--metrics", cfg.metrics, "Metrics to measure instead of a group")->delimiter(',');

  std::filesystem::path report;
  auto* check = app.add_subcommand("check", "Check a metric report against a target group");
  check->add_option("--report", report, "Report JSON")->required();
  check->add_option("--group", cfg.group, "Target group (G1, G2, G3) or target file");

  int attempts = 10;
  auto* bench = app.add_subcommand("bench", "Run a multi-attempt campaign on a benchmark");
  circuit_options(bench, cfg);
  engine_options(bench, cfg, mode);
  bench->add_option("--attempts", attempts, "Independent attempts")->check(CLI::PositiveNumber);
  bench->add_option("--workers", cfg.workers, "Concurrent attempts")->check(CLI::PositiveNumber);

  VariationOptions vary_opts;
  auto* vary = app.add_subcommand("vary", "Sweep perturbed copies of a sized design");
  circuit_options(vary, cfg);
  vary->add_option("--n", vary_opts.n, "Perturbed samples")->check(CLI::Range(2, 1000000));
  vary->add_option("--sigma-bias", vary_opts.sigma_bias, "Bias perturbation sigma in volts");
  vary->add_option("--sigma-size", vary_opts.sigma_size, "Relative size perturbation sigma");
  vary->add_option("--seed", vary_opts.seed, "Sampler seed");
  vary->add_option("--workers", cfg.workers, "Concurrent samples")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? ExitSuccess : ExitConfigError;
  }

  std::signal(SIGINT, [](int) { interrupted = true; });
  cfg.cancel = &interrupted;
  try {
    cfg.transcript_mode = *parse_transcript_mode(mode);
    if (*size)
      return cmd_size(cfg, std::cout, std::cerr);
    if (*measure)
      return cmd_measure(cfg, std::cout, std::cerr);
    if (*check)
      return cmd_check(report, cfg, std::cout, std::cerr);
    if (*bench)
      return cmd_bench(cfg, attempts, std::cout, std::cerr);
    if (*vary)
      return cmd_vary(cfg, vary_opts, std::cout, std::cerr);
  } catch (const SimError& e) {
    std::cerr << "error: " << e.what() << '\n' << e.failure().log_excerpt << '\n';
    return ExitSimulationError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return ExitConfigError;
  }
  return ExitConfigError;
}
