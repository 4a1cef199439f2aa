// SPDX-License-Identifier: Apache-2.0
#include "amsizer/agent.hpp"
#include "amsizer/units.hpp"

#include <cmath>

#include <fmt/format.h>

#include "format.hpp"

namespace amsizer {

std::string format_param(std::string_view param, double v) {
  const auto kind = parse_param_kind(param);
  if (kind == ParamKind::W || kind == ParamKind::L)
    return fmt::format("{:.6g}u", v * 1e6);
  if (kind == ParamKind::DC)
    return fmt::format("{:.6g}", v);
  static constexpr std::array<std::pair<double, const char*>, 8> scales{
      {{1e9, "g"}, {1e6, "meg"}, {1e3, "k"}, {1.0, ""}, {1e-3, "m"}, {1e-6, "u"}, {1e-9, "n"}, {1e-12, "p"}}};
  for (const auto& [s, suffix] : scales)
    if (std::abs(v) >= s)
      return fmt::format("{:.6g}{}", v / s, suffix);
  return fmt::format("{:.6g}f", v / 1e-15);
}

std::string render_values(const std::map<ParamKey, double>& values) {
  std::string out;
  for (const auto& [k, v] : values)
    out += fmt::format("{}{}={}", out.empty() ? "" : ", ", to_string(k), format_param(k.param, v));
  return out;
}

std::vector<TaskDescriptor> decompose_tasks(const NetlistDoc& baseline, const TargetGroup& group,
                                            const HarnessSet& harnesses) {
  if (group.targets.empty())
    throw ConfigError(fmt::format("target group '{}' has no targets to plan for", group.name));
  const auto metrics = group.metrics();
  const auto tb = testbench_for(group);

  TaskDescriptor plan;
  plan.index = 1;
  plan.name = "analysis planning";
  plan.inputs = {"netlist", "target metrics"};
  plan.outputs = {"analysis plan"};
  plan.plan = plan_analyses(metrics, tb, harnesses);
  for (const auto& p : plan.plan)
    plan.detail += fmt::format("{}{} in {}", plan.detail.empty() ? "" : "; ", p.analysis.card(),
                               to_string(p.tb.topology));

  TaskDescriptor prompt;
  prompt.index = 2;
  prompt.name = "sizing prompt generation";
  prompt.inputs = {"circuit type", "previous results", "current results", "target performance"};
  prompt.outputs = {"prompt", "parameter patch"};
  prompt.detail = fmt::format("{} tunable elements, {} targets", baseline.elements().size(), group.targets.size());

  TaskDescriptor sim;
  sim.index = 3;
  sim.name = "simulation and measurement";
  sim.inputs = {"patched netlist", "analysis plan"};
  sim.outputs = {"metric report"};
  sim.detail = fmt::format("{} simulations per iteration", plan.plan.size());

  TaskDescriptor compare;
  compare.index = 4;
  compare.name = "comparison and reporting";
  compare.inputs = {"metric report", "targets"};
  compare.outputs = {"check result", "reasons", "final netlist"};
  compare.detail = fmt::format("{:.0f}% tolerance on every target", group.targets.front().tolerance * 100.0);

  return {plan, prompt, sim, compare};
}

std::string render_record(const IterationRecord& r, const TargetGroup& group) {
  std::string out = fmt::format("iteration {}\n", r.index);
  if (!r.patch.empty()) {
    out += "  changes:";
    for (const auto& [k, v] : r.patch.assignments)
      out += fmt::format(" {}={}", to_string(k), format_param(k.param, v));
    out += '\n';
  }
  out += fmt::format("  design point: {}\n", render_values(r.values));
  for (const auto& t : group.targets) {
    const auto it = r.check.per_metric.find(t.kind);
    if (it == r.check.per_metric.end()) {
      const auto a = r.report.absent.find(t.kind);
      out += fmt::format("  {}: not measured{}\n", metric_label(t.kind),
                         a == r.report.absent.end() ? "" : fmt::format(" ({}: {})", to_string(a->second.reason),
                                                                        a->second.detail));
      continue;
    }
    const auto d = display_unit(t.kind);
    out += fmt::format("  {}: {} {} (margin {:+.4g} {})\n", metric_label(t.kind), format_metric(t.kind, it->second.value),
                       it->second.pass ? "PASS" : "FAIL", it->second.margin * d.scale, d.unit);
  }
  for (const auto& o : r.observations)
    out += fmt::format("  {} {}: {}\n", to_string(o.kind), o.code, o.message);
  return out;
}

std::string PromptBundle::context() const {
  return fmt::format("<circuit_type>\n{}\n</circuit_type>\n<target_performance>\n{}</target_performance>\n"
                     "<previous_results>\n{}</previous_results>\n<current_results>\n{}</current_results>\n",
                     circuit_type, target_performance, previous_results, current_results);
}

std::string PromptBundle::user_message() const { return context() + "\n" + cot_instructions; }

PromptBundle build_prompt(const ContextHistory& history) {
  PromptBundle b;
  b.system =
      "You size analog circuits. You change transistor widths and lengths and bias voltages of a fixed circuit "
      "until it meets its performance targets.\n"
      "Constraints:\n"
      "- Keep the power supply voltage and use the same transistor model.\n"
      "- Do not add, remove or reconnect devices.\n"
      "- Change only the tunable parameters below, each within its bounds. Devices of one group share a value.\n"
      "Tunable parameters (SI units; W and L in metres, DC in volts):\n";
  for (const auto& t : history.tunables) {
    b.system += fmt::format("- {}.{} in [{}, {}]", t.key, to_string(t.param), format_param(to_string(t.param), t.bounds.min),
                            format_param(to_string(t.param), t.bounds.max));
    if (t.members.size() > 1 || t.members.front() != t.key)
      b.system += fmt::format(" (devices: {})", fmt::join(t.members, " "));
    b.system += '\n';
  }
  b.system += "Answer with exactly one apply_sizing call.\n";

  b.circuit_type = history.circuit_type;
  for (const auto& t : history.group.targets)
    b.target_performance += describe_target(t) + '\n';
  b.target_performance +=
      fmt::format("load: CL = {}F, RL = {}ohm\n", format_param("VALUE", history.group.load.cl),
                  format_param("VALUE", history.group.load.rl));

  if (history.records.empty()) {
    b.previous_results = "none\n";
    b.current_results = "no measurement yet; the baseline netlist is measured first\n";
  } else {
    for (std::size_t i = 0; i + 1 < history.records.size(); ++i)
      b.previous_results += render_record(history.records[i], history.group);
    if (b.previous_results.empty())
      b.previous_results = "none\n";
    b.current_results = render_record(history.records.back(), history.group);
  }

  b.cot_instructions =
      "Think step by step before acting:\n"
      "1. List the failing metrics in the current results and how far each is from its accepted bound.\n"
      "2. Compare with the previous results: which parameter changes moved which metrics, and which way.\n"
      "3. Relate every failing metric to the parameters that set it, e.g. gain to transconductance and output "
      "resistance, bandwidth to transconductance over load capacitance, phase margin to the non-dominant poles, "
      "power to the bias currents.\n"
      "4. Pick a few changes expected to fix the failing metrics while keeping the passing ones.\n"
      "5. Call apply_sizing once with the new values and a short rationale.\n";
  return b;
}

} // namespace amsizer
