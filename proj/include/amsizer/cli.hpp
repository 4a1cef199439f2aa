// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "amsizer/bench.hpp"
#include "amsizer/llm_client.hpp"

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace amsizer {

enum ExitCode : int {
  ExitSuccess = 0,
  ExitConfigError = 1,
  /// Budget exhausted (size, bench) or targets not met (check).
  ExitNotMet = 2,
  ExitSimulationError = 3,
  ExitAborted = 4,
};

struct RunConfig {
  /// Shipped benchmark name; alternative to `netlist`.
  std::string circuit;
  std::filesystem::path netlist;
  /// Defaults to manifest.json beside the netlist when that exists.
  std::filesystem::path manifest;
  std::string fixture;
  /// Built-in group name or target file; empty uses the circuit default.
  std::string group;
  /// Measure only these metrics instead of a group.
  std::vector<std::string> metrics;
  std::string engine = "baseline";
  std::uint64_t seed = 1;
  int budget = 0;
  std::filesystem::path workdir = "amsizer-out";
  TranscriptMode transcript_mode = TranscriptMode::Live;
  /// Defaults to <workdir>/transcript.jsonl.
  std::filesystem::path transcript;
  std::optional<ProviderConfig> provider;
  EngineConfig spice;
  std::filesystem::path data_dir = default_data_dir();
  int workers = 1;
  bool verbose = false;
  /// Set asynchronously to stop a sizing run with ABORTED.
  const std::atomic<bool>* cancel = nullptr;

  /// Throws ConfigError.
  void validate() const;
};

/// Overlays the fields present in a JSON config file onto `cfg`.
void apply_config_json(RunConfig& cfg, const nlohmann::json& j);
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);

/// Circuit named by the config: a benchmark, a netlist with manifest, or a
/// bare netlist whose MOSFETs are all tunable with the default bounds.
BenchCircuit resolve_circuit(const RunConfig& cfg);

/// Runs one optimization and writes its artifacts under the workdir.
int cmd_size(const RunConfig& cfg, std::ostream& out, std::ostream& err);
/// Measures the (fixture-applied) netlist once; writes report.json.
int cmd_measure(const RunConfig& cfg, std::ostream& out, std::ostream& err);
/// Checks a report file against the config's group.
int cmd_check(const std::filesystem::path& report, const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_bench(const RunConfig& cfg, int attempts, std::ostream& out, std::ostream& err);
int cmd_vary(const RunConfig& cfg, VariationOptions opts, std::ostream& out, std::ostream& err);

} // namespace amsizer
