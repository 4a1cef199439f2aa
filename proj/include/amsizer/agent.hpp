// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "amsizer/llm_client.hpp"
#include "amsizer/metrics.hpp"
#include "amsizer/netlist.hpp"
#include "amsizer/sim.hpp"
#include "amsizer/targets.hpp"

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace amsizer {

/// Something that went wrong in one iteration without stopping the run.
struct Observation {
  enum class Kind { SimulationFailure, RejectedPatch, EngineFailure };
  Kind kind = Kind::SimulationFailure;
  /// FailureKind name, error class or "EngineFailure".
  std::string code;
  std::string message;
  std::string log_excerpt;
  std::string analysis;
};

std::string_view to_string(Observation::Kind k);

struct IterationRecord {
  int index = 0;
  ParamPatch patch;
  /// Tunable values of the design point that was measured.
  std::map<ParamKey, double> values;
  MetricReport report;
  std::vector<Observation> observations;
  CheckResult check;
  std::string rationale;
  double wallclock = 0.0;
};

struct ContextHistory {
  std::string circuit_type;
  std::vector<IterationRecord> records;
  NetlistDoc baseline;
  TargetGroup group;
  std::vector<TunableParam> tunables;
};

struct TaskDescriptor {
  int index = 0;
  std::string name;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::string detail;
  /// Filled for the analysis-planning task.
  std::vector<PlannedAnalysis> plan;
};

/// The four fixed pipeline stages; throws ConfigError on an empty group.
std::vector<TaskDescriptor> decompose_tasks(const NetlistDoc& baseline, const TargetGroup& group,
                                            const HarnessSet& harnesses = HarnessSet::opamp_default());

struct PromptBundle {
  std::string system;
  std::string circuit_type;
  std::string previous_results;
  std::string current_results;
  std::string target_performance;
  std::string cot_instructions;

  /// The four parameters as one structured block.
  [[nodiscard]] std::string context() const;
  /// Context followed by the reasoning instructions.
  [[nodiscard]] std::string user_message() const;
};

PromptBundle build_prompt(const ContextHistory& history);

/// Results of one record as prompt text.
std::string render_record(const IterationRecord& r, const TargetGroup& group);

struct EngineCapabilities {
  std::string name;
  bool deterministic = true;
  bool requires_network = false;
};

class EngineFailure : public Error {
public:
  using Error::Error;
};

/// Produces the next design point and the reason for it.
class ProposalEngine {
public:
  virtual ~ProposalEngine() = default;
  [[nodiscard]] virtual EngineCapabilities capabilities() const = 0;
  virtual ParamPatch propose(const PromptBundle& bundle, const ContextHistory& history,
                             std::span<const TunableParam> tunables) = 0;
};

/// Clamps every assignment into its tunable's bounds and returns one note per
/// clamped value. Throws UnknownTunable for undeclared keys.
std::vector<std::string> clamp_patch(ParamPatch& patch, std::span<const TunableParam> tunables);

/// Tool schema of the sizing action offered to language models.
ToolSchema apply_sizing_tool();

/// Patch from apply_sizing arguments (values in SI or with SPICE suffixes).
/// Throws MalformedResponse on schema violations and UnknownTunable.
ParamPatch parse_sizing_arguments(const std::string& arguments, std::span<const TunableParam> tunables);

/// Language-model engine: one apply_sizing tool call per proposal and a single
/// repair round when the reply cannot be used.
class LlmEngine final : public ProposalEngine {
public:
  LlmEngine(std::shared_ptr<ChatClient> client, std::string model_label, bool requires_network = true);

  [[nodiscard]] EngineCapabilities capabilities() const override;
  ParamPatch propose(const PromptBundle& bundle, const ContextHistory& history,
                     std::span<const TunableParam> tunables) override;
  [[nodiscard]] const Usage& usage() const noexcept { return usage_; }

private:
  std::shared_ptr<ChatClient> client_;
  std::string label_;
  bool network_;
  Usage usage_;
};

struct SensitivityEntry {
  ParamKey key;
  /// +1 when increasing the parameter improves the metric.
  int sign = 1;
  double weight = 1.0;
};

using SensitivityTable = std::map<MetricKind, std::vector<SensitivityEntry>>;

SensitivityTable sensitivity_from_json(const nlohmann::json& j);

struct BaselineOptions {
  double up = 1.25;
  double down = 0.8;
  /// Additive step for bias voltages.
  double dc_step = 0.05;
  bool revert_on_regression = true;
  /// A step that closes less than this fraction of the deficit demotes its
  /// parameter behind the other candidates.
  double min_progress = 0.1;
  SensitivityTable sensitivity;
};

/// Seeded coordinate perturbation: works on the failing metric with the worst
/// relative margin, stepping the most sensitive tunable for it and flipping
/// direction after a step that did not help.
class BaselineEngine final : public ProposalEngine {
public:
  BaselineEngine(std::uint64_t seed, BaselineOptions opts);

  [[nodiscard]] EngineCapabilities capabilities() const override;
  ParamPatch propose(const PromptBundle& bundle, const ContextHistory& history,
                     std::span<const TunableParam> tunables) override;

private:
  struct Step {
    MetricKind metric;
    ParamKey key;
    double base_margin;
    int base_record;
  };
  std::uint64_t seed_;
  BaselineOptions opts_;
  std::optional<Step> pending_;
  std::map<std::pair<MetricKind, ParamKey>, int> direction_;
  std::map<std::pair<MetricKind, ParamKey>, int> misses_;
  std::map<std::pair<MetricKind, ParamKey>, int> stalls_;
};

/// Ranking used for best-so-far selection: passing count, then the summed
/// relative margins of the failing metrics.
double record_score(const IterationRecord& r, const TargetGroup& group);

enum class OutcomeStatus { Success, BudgetExhausted, Aborted };

std::string_view to_string(OutcomeStatus s);

struct OptimizationOutcome {
  OutcomeStatus status = OutcomeStatus::Aborted;
  NetlistDoc final_netlist;
  ContextHistory history;
  int iterations_used = 0;
  std::string abort_reason;
};

struct OptimizerOptions {
  Simulator* simulator = nullptr;
  HarnessSet harnesses = HarnessSet::opamp_default();
  DeckOptions deck;
  std::string circuit_type = "circuit";
  std::vector<TunableParam> tunables;
  /// Consecutive engine failures tolerated before aborting.
  int max_engine_failures = 3;
  /// Iteration log (one JSON object per line); empty for none.
  std::filesystem::path log_path;
  /// Wall-clock times per iteration, kept apart so the log is reproducible.
  std::filesystem::path timing_path;
  /// Overrides group.max_iterations when positive.
  int budget = 0;
  /// Checked before each iteration; set it to stop with ABORTED.
  const std::atomic<bool>* cancel = nullptr;
};

/// Iteration 1 measures the baseline; later iterations apply engine patches.
/// Stops at the first passing check or when the budget is spent. On budget
/// exhaustion the final netlist is the best design point seen.
OptimizationOutcome run_optimization(const NetlistDoc& baseline, const TargetGroup& group, ProposalEngine& engine,
                                     const OptimizerOptions& opts);

nlohmann::json record_to_json(const IterationRecord& r, const TargetGroup& group);
/// Everything except wall-clock time; identical runs give identical text.
nlohmann::json outcome_to_json(const OptimizationOutcome& o);

/// Markdown-style reasons file: one section per iteration.
std::string render_reasons(const OptimizationOutcome& o);

} // namespace amsizer
