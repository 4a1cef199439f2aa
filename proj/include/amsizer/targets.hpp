// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "amsizer/errors.hpp"
#include "amsizer/metric_kind.hpp"
#include "amsizer/metrics.hpp"
#include "amsizer/sim.hpp"

#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace amsizer {

enum class Direction { AtLeast, AtMost };

std::string_view to_string(Direction d);
/// "AT_LEAST", ">=", "min" and their AT_MOST counterparts.
std::optional<Direction> parse_direction(std::string_view text);

/// One directional requirement. `value` is in SI units (see si_unit).
struct TargetSpec {
  MetricKind kind = MetricKind::Gain;
  Direction direction = Direction::AtLeast;
  double value = 0.0;
  double tolerance = 0.05;

  /// Throws ConfigError unless value is finite and tolerance in [0, 0.5).
  void validate() const;
};

struct TargetGroup {
  std::string name;
  std::vector<TargetSpec> targets;
  LoadCondition load;
  int max_iterations = 25;
  double supply_v = 1.8;

  void validate() const;
  [[nodiscard]] std::vector<MetricKind> metrics() const;
  [[nodiscard]] const TargetSpec* find(MetricKind kind) const;
};

/// Bound after relaxing by tolerance * |value| in the favourable direction.
double relaxed_bound(const TargetSpec& spec);

struct MetricCheck {
  bool pass = false;
  /// Signed distance to the relaxed bound; positive passes.
  double margin = 0.0;
  double relaxed_bound = 0.0;
  double value = 0.0;
};

MetricCheck check_metric(double value, const TargetSpec& spec);
MetricCheck check_metric(const MetricValue& value, const TargetSpec& spec);

struct CheckResult {
  std::map<MetricKind, MetricCheck> per_metric;
  std::set<MetricKind> missing;
  bool overall_pass = false;

  [[nodiscard]] int passing() const;
};

CheckResult check_all(const MetricReport& report, const TargetGroup& group);

std::vector<TargetGroup> builtin_groups();
/// Builtin group by name ("G1", case-insensitive); throws ConfigError.
TargetGroup builtin_group(std::string_view name);

/// Keys: name, targets [{metric, direction, value, unit, tolerance}], load
/// {cl, rl} (numbers or SPICE tokens), max_iterations, supply_v.
TargetGroup group_from_json(const nlohmann::json& j);
nlohmann::json group_to_json(const TargetGroup& g);
TargetGroup load_target_group(const std::filesystem::path& path);
/// Builtin name or path to a group file.
TargetGroup resolve_group(std::string_view name_or_path);

nlohmann::json check_to_json(const CheckResult& c, const TargetGroup& g);

/// Short metric label for tables and prompts: GAIN, UGBW, PM ...
std::string_view metric_label(MetricKind kind);
/// e.g. "PM >= 55 deg (accepted >= 52.25 deg)".
std::string describe_target(const TargetSpec& spec);

/// Testbench base for measuring a group: its load and supply, vcm at mid-supply.
TestbenchConfig testbench_for(const TargetGroup& group);

/// assemble_report over the group's metrics and testbench.
MetricReport assemble_report(std::span<const SimResult> results, const TargetGroup& group,
                             const HarnessSet& harnesses = HarnessSet::opamp_default(),
                             std::span<const SimFailure> failures = {});

} // namespace amsizer
