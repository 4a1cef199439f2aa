// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "amsizer/agent.hpp"
#include "amsizer/netlist.hpp"
#include "amsizer/sim.hpp"
#include "amsizer/targets.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace amsizer {

class UnknownBenchmark : public ConfigError {
public:
  using ConfigError::ConfigError;
};

/// A shipped circuit with everything needed to size it.
struct BenchCircuit {
  std::string name;
  std::string description;
  std::string circuit_type;
  std::filesystem::path netlist_path;
  NetlistDoc netlist;
  TunablePolicy policy;
  std::vector<TunableParam> tunables;
  SensitivityTable sensitivity;
  HarnessSet harnesses;
  TargetGroup default_group;
  /// Named design points, e.g. "G1-5".
  std::map<std::string, std::map<ParamKey, double>> fixtures;

  /// Deck options resolving the netlist's relative includes.
  [[nodiscard]] DeckOptions deck() const;
};

/// The shipped benchmark names.
std::vector<std::string> benchmark_names();

/// AMSIZER_DATA when set, otherwise the source tree's data directory.
std::filesystem::path default_data_dir();

/// Loads a manifest and its netlist. A non-empty `netlist` replaces the one
/// the manifest names; relative includes then resolve against its directory.
BenchCircuit load_manifest(const std::filesystem::path& manifest, const std::filesystem::path& netlist = {});

/// Loads `<data>/benchmarks/<name>/manifest.json` and its netlist.
BenchCircuit load_benchmark(std::string_view name, const std::filesystem::path& data_dir = default_data_dir());

/// Netlist with a named fixture applied; throws ConfigError for unknown names
/// and whatever apply_patch throws.
NetlistDoc apply_fixture(const BenchCircuit& circuit, std::string_view fixture);

// ---------------------------------------------------------------------------
// Campaigns

using EngineFactory = std::function<std::unique_ptr<ProposalEngine>(int attempt)>;
using SimulatorFactory = std::function<std::unique_ptr<Simulator>(const std::filesystem::path& workdir)>;

/// NgspiceSimulator rooted at the given workdir.
SimulatorFactory ngspice_factory(EngineConfig base = {});

struct AttemptResult {
  int attempt_index = 0;
  OptimizationOutcome outcome;
  int iterations = 0;
  bool success = false;
};

struct CampaignSummary {
  std::string circuit;
  std::string engine;
  std::vector<AttemptResult> attempts;
  double success_rate = 0.0;
  /// Over successful attempts only.
  std::optional<double> iteration_mean;
  std::optional<int> iteration_min;
  std::optional<int> iteration_max;

  [[nodiscard]] int successes() const;
};

/// Statistics of a set of attempts, ordered by attempt index.
CampaignSummary summarize(std::string circuit, std::string engine, std::vector<AttemptResult> attempts);

struct CampaignOptions {
  int attempts = 10;
  int workers = 1;
  /// Each attempt writes under <workdir>/attempt-NN.
  std::filesystem::path workdir;
  SimulatorFactory simulator;
  int budget = 0;
};

CampaignSummary run_campaign(const BenchCircuit& circuit, const TargetGroup& group, const EngineFactory& engine,
                             const CampaignOptions& opts);

// ---------------------------------------------------------------------------
// Variation studies

struct VariationOptions {
  /// Absolute, volts.
  double sigma_bias = 0.1;
  /// Relative: value * (1 + N(0, sigma_size)).
  double sigma_size = 0.01;
  int n = 20;
  std::uint64_t seed = 1;
  int workers = 1;
  /// Common-mode points of the offset curve.
  std::vector<double> vcm_grid;
  /// Operating points of the gain and CMRR curves.
  std::vector<double> vout_grid;
  std::vector<double> rl_grid;
  std::filesystem::path workdir;

  /// Fills empty grids: 37 points over 0..supply, 0.1..supply-0.1 in 0.1 V
  /// steps, and load resistors from 100 ohm to 1 Mohm.
  void fill_defaults(double supply);
};

/// Gaussian perturbation source. Bias sources move by N(0, sigma_bias) volts,
/// sizes and passive values scale by 1 + N(0, sigma_size).
class PerturbationSampler {
public:
  PerturbationSampler(double sigma_bias, double sigma_size, std::uint64_t seed);

  double bias_delta();
  double size_factor();
  /// Perturbed copy of `values` (clamped into bounds). With both sigmas 0
  /// the result equals the input exactly.
  std::map<ParamKey, double> perturb(const std::map<ParamKey, double>& values, std::span<const TunableParam> tunables);

private:
  std::mt19937_64 rng_;
  std::normal_distribution<double> bias_;
  std::normal_distribution<double> size_;
  double sigma_bias_;
  double sigma_size_;
};

struct SweepCurve {
  std::string name;
  std::string x_label;
  std::string y_label;
  std::vector<double> x;
  std::vector<double> nominal;
  /// One row per sample; NaN where the sample could not be measured.
  std::vector<std::vector<double>> samples;
};

struct VariationSample {
  int index = 0;
  std::map<ParamKey, double> values;
  std::vector<std::string> failures;
};

struct VariationStudy {
  std::string circuit;
  VariationOptions options;
  std::vector<SweepCurve> curves;
  std::vector<VariationSample> samples;
};

/// Sweeps of a sized design and of n perturbed copies: offset vs common-mode
/// input, DC gain vs output voltage, DC gain vs load resistance and CMRR vs
/// common-mode input.
VariationStudy variation_study(const BenchCircuit& circuit, const NetlistDoc& sized, VariationOptions opts,
                               const SimulatorFactory& simulator);

// ---------------------------------------------------------------------------
// Export

/// attempt, iterations, success, status, then the final value of each metric.
void write_campaign_csv(const CampaignSummary& s, const std::vector<MetricKind>& metrics,
                        const std::filesystem::path& path);
nlohmann::json campaign_to_json(const CampaignSummary& s);

/// One row per iteration with one column per metric.
void write_trace_csv(const ContextHistory& h, const std::filesystem::path& path);

/// <dir>/<curve>.csv (x, nominal, samples, min, max, mean) and <dir>/samples.csv.
std::vector<std::filesystem::path> write_variation(const VariationStudy& study, const std::filesystem::path& dir);

} // namespace amsizer
