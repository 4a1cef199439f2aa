// SPDX-License-Identifier: Apache-2.0
#include "amsizer/targets.hpp"

#include "amsizer/units.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace amsizer {

namespace {

std::string upper(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return out;
}

double spice_or_number(const nlohmann::json& j, std::string_view what) {
  if (j.is_number())
    return j.get<double>();
  if (j.is_string())
    if (auto v = parse_spice_number(j.get<std::string>()))
      return *v;
  throw ConfigError(fmt::format("{} must be a number, got {}", what, j.dump()));
}

TargetSpec spec(MetricKind k, Direction d, double v) { return TargetSpec{k, d, v, 0.05}; }

TargetGroup g1() {
  using enum MetricKind;
  TargetGroup g;
  g.name = "G1";
  g.targets = {
      spec(Gain, Direction::AtLeast, 65.0),      spec(Ugbw, Direction::AtLeast, 10e6),
      spec(PhaseMargin, Direction::AtLeast, 55), spec(Power, Direction::AtMost, 10e-3),
      spec(Cmrr, Direction::AtLeast, 100.0),     spec(Thd, Direction::AtMost, -26.0),
      spec(Offset, Direction::AtMost, 1e-3),     spec(OutputRange, Direction::AtLeast, 1.75),
  };
  g.load = {10e-12, 1e3};
  return g;
}

void replace(TargetGroup& g, MetricKind k, double v) {
  for (auto& t : g.targets)
    if (t.kind == k)
      t.value = v;
}

std::string number(double v) { return fmt::format("{:.6g}", v); }

} // namespace

std::string_view to_string(Direction d) { return d == Direction::AtLeast ? "AT_LEAST" : "AT_MOST"; }

std::optional<Direction> parse_direction(std::string_view text) {
  const auto u = upper(text);
  if (u == "AT_LEAST" || u == ">=" || u == "MIN" || u == "≥")
    return Direction::AtLeast;
  if (u == "AT_MOST" || u == "<=" || u == "MAX" || u == "≤")
    return Direction::AtMost;
  return std::nullopt;
}

void TargetSpec::validate() const {
  if (!std::isfinite(value))
    throw ConfigError(fmt::format("target for {} must be finite", to_string(kind)));
  if (!(tolerance >= 0.0 && tolerance < 0.5))
    throw ConfigError(fmt::format("tolerance {} for {} is outside [0, 0.5)", tolerance, to_string(kind)));
}

void TargetGroup::validate() const {
  if (targets.empty())
    throw ConfigError(fmt::format("target group '{}' has no targets", name));
  if (max_iterations < 1)
    throw ConfigError(fmt::format("target group '{}' needs max_iterations >= 1", name));
  std::set<MetricKind> seen;
  for (const auto& t : targets) {
    t.validate();
    if (!seen.insert(t.kind).second)
      throw ConfigError(fmt::format("target group '{}' lists {} twice", name, to_string(t.kind)));
  }
  if (!(load.cl >= 0.0) || !(load.rl > 0.0))
    throw ConfigError(fmt::format("target group '{}' has an invalid load", name));
  if (!(supply_v > 0.0))
    throw ConfigError(fmt::format("target group '{}' has a non-positive supply", name));
}

std::vector<MetricKind> TargetGroup::metrics() const {
  std::vector<MetricKind> out;
  for (const auto& t : targets)
    out.push_back(t.kind);
  return out;
}

const TargetSpec* TargetGroup::find(MetricKind kind) const {
  for (const auto& t : targets)
    if (t.kind == kind)
      return &t;
  return nullptr;
}

double relaxed_bound(const TargetSpec& spec) {
  const double slack = spec.tolerance * std::abs(spec.value);
  return spec.direction == Direction::AtLeast ? spec.value - slack : spec.value + slack;
}

MetricCheck check_metric(double value, const TargetSpec& spec) {
  MetricCheck c;
  c.value = value;
  c.relaxed_bound = relaxed_bound(spec);
  c.margin = spec.direction == Direction::AtLeast ? value - c.relaxed_bound : c.relaxed_bound - value;
  c.pass = c.margin >= 0.0; // false for NaN
  return c;
}

MetricCheck check_metric(const MetricValue& value, const TargetSpec& spec) {
  if (value.kind != spec.kind)
    throw ConfigError(fmt::format("cannot check {} against a {} target", to_string(value.kind), to_string(spec.kind)));
  return check_metric(value.value, spec);
}

int CheckResult::passing() const {
  return static_cast<int>(std::count_if(per_metric.begin(), per_metric.end(), [](const auto& kv) { return kv.second.pass; }));
}

CheckResult check_all(const MetricReport& report, const TargetGroup& group) {
  CheckResult r;
  bool all = true;
  for (const auto& t : group.targets) {
    const auto v = report.get(t.kind);
    if (!v) {
      r.missing.insert(t.kind);
      all = false;
      continue;
    }
    const auto c = check_metric(*v, t);
    all = all && c.pass;
    r.per_metric[t.kind] = c;
  }
  r.overall_pass = all;
  return r;
}

std::vector<TargetGroup> builtin_groups() {
  using enum MetricKind;
  auto a = g1();

  auto b = g1();
  b.name = "G2";
  replace(b, Ugbw, 5e6);
  replace(b, PhaseMargin, 45.0);
  replace(b, Power, 5e-3);
  b.load = {50e-12, 100e3};

  auto c = g1();
  c.name = "G3";
  replace(c, Ugbw, 50e6);
  replace(c, Power, 50e-3);
  replace(c, Offset, 5e-3);
  replace(c, OutputRange, 1.7);
  return {a, b, c};
}

TargetGroup builtin_group(std::string_view name) {
  const auto u = upper(name);
  for (auto& g : builtin_groups())
    if (g.name == u)
      return g;
  throw ConfigError(fmt::format("unknown target group '{}' (builtin: G1, G2, G3)", name));
}

TargetGroup group_from_json(const nlohmann::json& j) {
  try {
    TargetGroup g;
    g.name = j.value("name", std::string("custom"));
    g.max_iterations = j.value("max_iterations", 25);
    if (j.contains("supply_v"))
      g.supply_v = spice_or_number(j.at("supply_v"), "supply_v");
    if (j.contains("load")) {
      const auto& l = j.at("load");
      if (l.contains("cl"))
        g.load.cl = spice_or_number(l.at("cl"), "load.cl");
      if (l.contains("rl"))
        g.load.rl = spice_or_number(l.at("rl"), "load.rl");
    }
    for (const auto& t : j.at("targets")) {
      TargetSpec s;
      const auto metric = t.at("metric").get<std::string>();
      const auto kind = parse_metric_kind(metric);
      if (!kind)
        throw ConfigError(fmt::format("unknown metric '{}'", metric));
      s.kind = *kind;
      const auto dir = t.at("direction").get<std::string>();
      const auto d = parse_direction(dir);
      if (!d)
        throw ConfigError(fmt::format("unknown direction '{}'", dir));
      s.direction = *d;
      const auto unit = t.value("unit", std::string(si_unit(s.kind)));
      const auto scale = unit_scale(unit);
      if (!scale)
        throw ConfigError(fmt::format("unknown unit '{}' for {}", unit, metric));
      s.value = t.at("value").get<double>() * *scale;
      s.tolerance = t.value("tolerance", 0.05);
      g.targets.push_back(s);
    }
    g.validate();
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("malformed target group: {}", e.what()));
  }
}

nlohmann::json group_to_json(const TargetGroup& g) {
  nlohmann::json j;
  j["name"] = g.name;
  j["max_iterations"] = g.max_iterations;
  j["supply_v"] = g.supply_v;
  j["load"] = {{"cl", g.load.cl}, {"rl", g.load.rl}};
  j["targets"] = nlohmann::json::array();
  for (const auto& t : g.targets)
    j["targets"].push_back({{"metric", to_string(t.kind)},
                            {"direction", to_string(t.direction)},
                            {"value", t.value},
                            {"unit", si_unit(t.kind)},
                            {"tolerance", t.tolerance}});
  return j;
}

TargetGroup load_target_group(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in)
    throw ConfigError(fmt::format("cannot read target group '{}'", path.string()));
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return group_from_json(j);
}

TargetGroup resolve_group(std::string_view name_or_path) {
  const auto u = upper(name_or_path);
  if (u == "G1" || u == "G2" || u == "G3")
    return builtin_group(u);
  return load_target_group(std::filesystem::path(name_or_path));
}

nlohmann::json check_to_json(const CheckResult& c, const TargetGroup& g) {
  nlohmann::json j;
  j["group"] = g.name;
  j["overall_pass"] = c.overall_pass;
  j["metrics"] = nlohmann::json::object();
  for (const auto& [kind, m] : c.per_metric) {
    auto num = [](double v) -> nlohmann::json {
      if (std::isfinite(v))
        return v;
      return v > 0 ? "inf" : "-inf";
    };
    j["metrics"][std::string(to_string(kind))] = {
        {"pass", m.pass}, {"value", num(m.value)}, {"relaxed_bound", m.relaxed_bound}, {"margin", num(m.margin)}};
  }
  j["missing"] = nlohmann::json::array();
  for (auto k : c.missing)
    j["missing"].push_back(to_string(k));
  return j;
}

std::string_view metric_label(MetricKind kind) {
  switch (kind) {
  case MetricKind::Gain: return "GAIN";
  case MetricKind::Ugbw: return "UGBW";
  case MetricKind::PhaseMargin: return "PM";
  case MetricKind::Power: return "POWER";
  case MetricKind::Cmrr: return "CMRR";
  case MetricKind::Thd: return "THD";
  case MetricKind::Offset: return "OFFSET";
  case MetricKind::OutputRange: return "RANGE";
  case MetricKind::SwitchingThreshold: return "VTH";
  case MetricKind::PropagationDelay: return "DELAY";
  case MetricKind::OscillationFrequency: return "FOSC";
  case MetricKind::CutoffFrequency: return "FC";
  }
  return "";
}

std::string describe_target(const TargetSpec& spec) {
  const auto d = display_unit(spec.kind);
  const char* op = spec.direction == Direction::AtLeast ? ">=" : "<=";
  return fmt::format("{} {} {} {} (accepted {} {} {})", metric_label(spec.kind), op, number(spec.value * d.scale),
                     d.unit, op, number(relaxed_bound(spec) * d.scale), d.unit);
}

TestbenchConfig testbench_for(const TargetGroup& group) {
  TestbenchConfig tb;
  tb.supply = group.supply_v;
  tb.vcm = group.supply_v / 2.0;
  tb.load = group.load;
  return tb;
}

MetricReport assemble_report(std::span<const SimResult> results, const TargetGroup& group,
                             const HarnessSet& harnesses, std::span<const SimFailure> failures) {
  const auto metrics = group.metrics();
  return assemble_report(results, std::span<const MetricKind>(metrics), testbench_for(group), harnesses, failures);
}

} // namespace amsizer
