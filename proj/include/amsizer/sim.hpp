// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "amsizer/errors.hpp"
#include "amsizer/metric_kind.hpp"
#include "amsizer/netlist.hpp"
#include "amsizer/waveform.hpp"

#include <chrono>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace amsizer {

// ---------------------------------------------------------------------------
// Analyses and testbenches

enum class AnalysisKind { Op, DcSweep, Ac, Tran };

std::string_view to_string(AnalysisKind kind);

struct DcSweepParams {
  std::string source;
  double start = 0.0;
  double stop = 1.8;
  double step = 1e-3;
  friend bool operator==(const DcSweepParams&, const DcSweepParams&) = default;
};

struct AcParams {
  int points_per_decade = 20;
  double fstart = 1.0;
  double fstop = 10e9;
  friend bool operator==(const AcParams&, const AcParams&) = default;
};

struct TranParams {
  double tstep = 0.0;
  double tstop = 0.0;
  /// Samples before this time are not written.
  double tstart = 0.0;
  /// Upper bound on the internal step; 0 leaves it to the engine.
  double tmax = 0.0;
  friend bool operator==(const TranParams&, const TranParams&) = default;
};

struct AnalysisSpec {
  AnalysisKind kind = AnalysisKind::Op;
  std::variant<std::monostate, DcSweepParams, AcParams, TranParams> params;

  static AnalysisSpec op() { return {AnalysisKind::Op, std::monostate{}}; }
  static AnalysisSpec dc(DcSweepParams p) { return {AnalysisKind::DcSweep, std::move(p)}; }
  static AnalysisSpec ac(AcParams p = {}) { return {AnalysisKind::Ac, p}; }
  static AnalysisSpec tran(TranParams p) { return {AnalysisKind::Tran, p}; }

  /// Throws ConfigError for degenerate ranges.
  void validate() const;
  /// SPICE analysis card, e.g. ".ac dec 20 1 1e+10".
  [[nodiscard]] std::string card() const;

  friend bool operator==(const AnalysisSpec&, const AnalysisSpec&) = default;
};

enum class Topology { OpenLoop, UnityGain, CmDrive, DiffDrive };

std::string_view to_string(Topology t);
std::optional<Topology> parse_topology(std::string_view text);

struct LoadCondition {
  double cl = 10e-12;
  double rl = 1e3;
  friend bool operator==(const LoadCondition&, const LoadCondition&) = default;
};

struct SineStimulus {
  double amplitude = 0.8;
  double frequency = 1e3;
  friend bool operator==(const SineStimulus&, const SineStimulus&) = default;
};

struct TestbenchConfig {
  Topology topology = Topology::OpenLoop;
  double vcm = 0.9;
  double supply = 1.8;
  LoadCondition load;
  std::optional<SineStimulus> stimulus;

  void validate() const;
  [[nodiscard]] std::string summary() const;
  friend bool operator==(const TestbenchConfig&, const TestbenchConfig&) = default;
};

/// Deck text around the device under test for one topology. Placeholders in
/// braces are substituted by build_deck: {vcm} {vdd} {cl} {rl}, {stim} (a
/// sin() source function, empty without stimulus), {stim_amp} {stim_freq}
/// {stim_period}.
struct HarnessTemplate {
  Topology topology = Topology::OpenLoop;
  std::vector<std::string> lines;
  /// Source swept by DC analyses in this harness.
  std::string sweep_source;
  friend bool operator==(const HarnessTemplate&, const HarnessTemplate&) = default;
};

/// Which analysis and testbench measure a metric. Ratio metrics (CMRR) also
/// need the same analysis in a reference testbench.
struct MetricPlanEntry {
  AnalysisKind analysis = AnalysisKind::Ac;
  Topology topology = Topology::OpenLoop;
  std::optional<Topology> reference;
};

/// Deck-building context of one circuit: harnesses, port names, probe nodes
/// and analysis defaults. The built-in default fits a single-ended opamp with
/// ports inp, inn, out and vdd.
struct HarnessSet {
  std::vector<HarnessTemplate> harnesses;
  std::vector<std::string> required_ports{"inp", "inn", "out", "vdd"};
  std::string output_node = "out";
  std::string input_node = "inp";
  std::string supply_source = "vdd";
  std::map<MetricKind, MetricPlanEntry> dispatch;
  AcParams ac;
  double dc_step = 1e-3;
  /// Transient window for time-domain metrics without a sine stimulus.
  TranParams tran;
  /// Periods simulated for THD. The first `thd_discard_periods` are not
  /// saved; the last `thd_window_periods` are analysed.
  int thd_periods = 16;
  int thd_discard_periods = 6;
  int thd_window_periods = 8;
  int thd_samples_per_period = 512;

  [[nodiscard]] const HarnessTemplate& harness(Topology t) const;
  [[nodiscard]] const MetricPlanEntry& plan_for(MetricKind kind) const;

  static HarnessSet opamp_default();
};

HarnessSet harness_set_from_json(const nlohmann::json& j);
nlohmann::json harness_set_to_json(const HarnessSet& h);

/// One simulation to run: analysis plus the testbench it runs in.
struct PlannedAnalysis {
  AnalysisSpec analysis;
  TestbenchConfig tb;
  friend bool operator==(const PlannedAnalysis&, const PlannedAnalysis&) = default;
};

/// Minimal analysis set covering `metrics`; duplicates merged, order stable
/// (AC open loop, AC CM drive, OP, DC sweep, TRAN).
std::vector<PlannedAnalysis> plan_analyses(std::span<const MetricKind> metrics, const TestbenchConfig& tb_base,
                                           const HarnessSet& harnesses = HarnessSet::opamp_default());

class MissingPort : public Error {
public:
  using Error::Error;
};

struct DeckOptions {
  /// Relative .include/.lib paths in the netlist are resolved against this.
  std::filesystem::path include_base;
};

/// Device netlist (analysis cards and .end stripped) + harness + analysis card.
std::string build_deck(const NetlistDoc& doc, const PlannedAnalysis& planned, const HarnessSet& harnesses,
                       const DeckOptions& opts = {});

// ---------------------------------------------------------------------------
// Results

struct SimResult {
  PlannedAnalysis planned;
  std::map<std::string, Waveform> waveforms;
  std::map<std::string, double> op_point;
  double wallclock = 0.0;
  std::string engine_log;

  [[nodiscard]] const RealWaveform* real(std::string_view name) const;
  [[nodiscard]] const ComplexWaveform* complex(std::string_view name) const;
};

enum class FailureKind { ConvergenceFailure, Timeout, EngineCrash, ParseFailure };

std::string_view to_string(FailureKind kind);

/// A simulation that produced no usable data. Never thrown by Simulator::run.
struct SimFailure {
  FailureKind kind = FailureKind::EngineCrash;
  PlannedAnalysis planned;
  std::string message;
  std::string log_excerpt;
};

using SimOutcome = std::variant<SimResult, SimFailure>;

class SimError : public Error {
public:
  explicit SimError(SimFailure failure);
  [[nodiscard]] const SimFailure& failure() const noexcept { return failure_; }

private:
  SimFailure failure_;
};

class ParseFailure : public Error {
public:
  ParseFailure(std::size_t offset, const std::string& what);
  [[nodiscard]] std::size_t offset() const noexcept { return offset_; }

private:
  std::size_t offset_;
};

/// One plot of a rawfile. Names are lower case; "x#branch" becomes "i(x)" and
/// bare node names become "v(node)".
struct RawPlot {
  std::string title;
  std::string plotname;
  bool complex = false;
  std::vector<std::string> names;
  /// Column 0 is the sweep (absent for single-point operating points).
  std::map<std::string, Waveform> waveforms;
  std::map<std::string, double> op_point;
};

/// Parses an ASCII rawfile (first plot). Sweeps must be strictly monotonic.
RawPlot parse_raw(std::string_view text);

/// Last `max_lines` lines of an engine log.
std::string log_excerpt(std::string_view log, std::size_t max_lines = 12);

// ---------------------------------------------------------------------------
// Engines

struct SimJob {
  PlannedAnalysis planned;
  std::string deck;
};

/// Runs batches of decks. Implementations must report every failure as a
/// SimFailure entry, one outcome per job, in job order.
class Simulator {
public:
  virtual ~Simulator() = default;
  virtual std::vector<SimOutcome> run(std::span<const SimJob> jobs) = 0;
};

struct EngineConfig {
  /// Engine executable. Empty: AMSIZER_SPICE, then ngspice on PATH, then the
  /// bundled WebAssembly engine.
  std::filesystem::path executable;
  /// Seconds per deck.
  double timeout = 120.0;
  std::filesystem::path workdir;
  /// Keep decks, rawfiles and logs in the workdir after parsing.
  bool keep_files = true;
};

/// Resolved engine path; throws ConfigError when nothing is found.
std::filesystem::path locate_engine(const std::filesystem::path& preferred = {});

/// External SPICE engine in batch mode (`-b -o log -r raw deck`). Engines
/// that accept several decks per invocation are fed whole batches.
class NgspiceSimulator final : public Simulator {
public:
  explicit NgspiceSimulator(EngineConfig cfg);

  std::vector<SimOutcome> run(std::span<const SimJob> jobs) override;
  [[nodiscard]] const EngineConfig& config() const noexcept { return cfg_; }
  [[nodiscard]] bool multi_deck() const noexcept { return multi_deck_; }

private:
  EngineConfig cfg_;
  bool multi_deck_ = false;
  std::mutex mu_;
  std::size_t counter_ = 0;
};

struct RunLimits {
  double timeout = 120.0;
  std::filesystem::path workdir;
};

/// Single-deck convenience around NgspiceSimulator; throws SimError.
SimResult run_simulation(const std::string& deck, const RunLimits& limits, const PlannedAnalysis& planned = {});

} // namespace amsizer
