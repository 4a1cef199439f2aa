// SPDX-License-Identifier: Apache-2.0
#include "amsizer/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace amsizer {

namespace {

nlohmann::json number_json(double v) {
  if (std::isfinite(v))
    return v;
  return v > 0 ? "inf" : (v < 0 ? "-inf" : "nan");
}

double number_from_json(const nlohmann::json& j) {
  if (j.is_number())
    return j.get<double>();
  const auto s = j.get<std::string>();
  if (s == "inf" || s == "+inf")
    return std::numeric_limits<double>::infinity();
  if (s == "-inf")
    return -std::numeric_limits<double>::infinity();
  throw ConfigError(fmt::format("'{}' is not a number", s));
}

std::optional<MetricErrorKind> parse_error_kind(std::string_view s) {
  for (auto k : {MetricErrorKind::NoCrossing, MetricErrorKind::DegenerateInput, MetricErrorKind::InsufficientRecord,
                 MetricErrorKind::EmptyRange, MetricErrorKind::MissingBranch, MetricErrorKind::SimulationFailed})
    if (to_string(k) == s)
      return k;
  return std::nullopt;
}

std::string describe(const PlannedAnalysis& p) {
  return fmt::format("{} {}", to_string(p.analysis.kind), p.tb.summary());
}

} // namespace

std::optional<double> MetricReport::get(MetricKind kind) const {
  auto it = values.find(kind);
  if (it == values.end())
    return std::nullopt;
  return it->second.value;
}

void MetricReport::set(MetricKind kind, double value, std::string measured_at) {
  values[kind] = MetricValue{kind, value, std::move(measured_at)};
  absent.erase(kind);
}

std::optional<double> unit_scale(std::string_view unit) {
  static const std::map<std::string, double, std::less<>> scales{
      {"", 1.0},     {"dB", 1.0},   {"deg", 1.0},  {"°", 1.0},    {"Hz", 1.0},  {"kHz", 1e3},
      {"MHz", 1e6},  {"GHz", 1e9},  {"W", 1.0},    {"mW", 1e-3},  {"uW", 1e-6}, {"V", 1.0},
      {"mV", 1e-3},  {"uV", 1e-6},  {"s", 1.0},    {"ms", 1e-3},  {"us", 1e-6}, {"ns", 1e-9},
      {"ps", 1e-12},
  };
  auto it = scales.find(unit);
  if (it == scales.end())
    return std::nullopt;
  return it->second;
}

std::string format_metric(MetricKind kind, double si_value) {
  const auto d = display_unit(kind);
  if (!std::isfinite(si_value))
    return fmt::format("{} {}", si_value > 0 ? "+inf" : "-inf", d.unit);
  return fmt::format("{:.4g} {}", si_value * d.scale, d.unit);
}

nlohmann::json report_to_json(const MetricReport& r) {
  nlohmann::json j;
  j["design_point"] = r.design_point_id;
  j["load"] = {{"cl", r.load.cl}, {"rl", r.load.rl}};
  j["metrics"] = nlohmann::json::object();
  for (const auto& [kind, v] : r.values)
    j["metrics"][std::string(to_string(kind))] = {
        {"value", number_json(v.value)}, {"unit", si_unit(kind)}, {"measured_at", v.measured_at}};
  j["absent"] = nlohmann::json::object();
  for (const auto& [kind, a] : r.absent)
    j["absent"][std::string(to_string(kind))] = {{"reason", to_string(a.reason)}, {"detail", a.detail}};
  return j;
}

MetricReport report_from_json(const nlohmann::json& j) {
  MetricReport r;
  r.design_point_id = j.value("design_point", std::string{});
  if (j.contains("load")) {
    r.load.cl = number_from_json(j.at("load").at("cl"));
    r.load.rl = number_from_json(j.at("load").at("rl"));
  }
  if (j.contains("metrics")) {
    for (const auto& [name, body] : j.at("metrics").items()) {
      const auto kind = parse_metric_kind(name);
      if (!kind)
        throw ConfigError(fmt::format("unknown metric '{}'", name));
      double value = 0.0;
      std::string unit(si_unit(*kind));
      std::string where;
      if (body.is_object()) {
        value = number_from_json(body.at("value"));
        unit = body.value("unit", unit);
        where = body.value("measured_at", std::string{});
      } else {
        value = number_from_json(body);
      }
      const auto scale = unit_scale(unit);
      if (!scale)
        throw ConfigError(fmt::format("unknown unit '{}' for {}", unit, name));
      r.set(*kind, value * *scale, where);
    }
  }
  if (j.contains("absent")) {
    for (const auto& [name, body] : j.at("absent").items()) {
      const auto kind = parse_metric_kind(name);
      const auto reason = parse_error_kind(body.value("reason", std::string{}));
      if (!kind || !reason)
        throw ConfigError(fmt::format("invalid absence record for '{}'", name));
      r.absent[*kind] = {*reason, body.value("detail", std::string{})};
    }
  }
  return r;
}

MetricReport assemble_report(std::span<const SimResult> results, std::span<const MetricKind> metrics,
                             const TestbenchConfig& tb, const HarnessSet& harnesses,
                             std::span<const SimFailure> failures) {
  MetricReport report;
  report.load = tb.load;

  auto find_result = [&](const PlannedAnalysis& p) -> const SimResult* {
    for (const auto& r : results)
      if (r.planned == p)
        return &r;
    return nullptr;
  };
  auto find_failure = [&](const PlannedAnalysis& p) -> const SimFailure* {
    for (const auto& f : failures)
      if (f.planned == p)
        return &f;
    return nullptr;
  };

  std::vector<PlannedAnalysis> missing;
  for (const auto& p : plan_analyses(metrics, tb, harnesses))
    if (!find_result(p) && !find_failure(p))
      missing.push_back(p);
  if (!missing.empty()) {
    std::string names;
    for (const auto& m : missing)
      names += (names.empty() ? "" : ", ") + describe(m);
    throw IncompleteInputs(missing, "missing analyses: " + names);
  }

  const std::string out_node = fmt::format("v({})", harnesses.output_node);
  const std::string in_node = fmt::format("v({})", harnesses.input_node);

  for (const auto kind : metrics) {
    const std::array<MetricKind, 1> one{kind};
    const auto plan = plan_analyses(one, tb, harnesses);
    try {
      std::vector<const SimResult*> used;
      for (const auto& p : plan) {
        if (const auto* f = find_failure(p))
          throw MetricError(MetricErrorKind::SimulationFailed,
                            fmt::format("{} failed ({}): {}", describe(p), to_string(f->kind), f->message));
        used.push_back(find_result(p));
      }
      const SimResult& primary = *used.front();
      auto complex_out = [&](const SimResult& r) -> const ComplexWaveform& {
        const auto* w = r.complex(out_node);
        if (!w)
          throw MetricError(MetricErrorKind::MissingBranch, fmt::format("AC result lacks {}", out_node));
        return *w;
      };
      auto real_node = [&](const SimResult& r, const std::string& node) -> const RealWaveform& {
        const auto* w = r.real(node);
        if (!w)
          throw MetricError(MetricErrorKind::MissingBranch, fmt::format("result lacks {}", node));
        return *w;
      };

      double value = 0.0;
      switch (kind) {
      case MetricKind::Gain: value = dc_gain(complex_out(primary)); break;
      case MetricKind::Ugbw: value = unity_gain_bandwidth(complex_out(primary)); break;
      case MetricKind::PhaseMargin: value = phase_margin(complex_out(primary)); break;
      case MetricKind::Power:
        value = quiescent_power(primary.op_point, harnesses.supply_source, tb.supply);
        break;
      case MetricKind::Cmrr: {
        const auto& entry = harnesses.plan_for(kind);
        const SimResult* cm = nullptr;
        const SimResult* dm = nullptr;
        for (const auto* r : used)
          (r->planned.tb.topology == entry.topology ? cm : dm) = r;
        if (!cm || !dm)
          throw MetricError(MetricErrorKind::DegenerateInput, "CMRR needs differential and common-mode runs");
        value = cmrr(complex_out(*dm), complex_out(*cm));
        break;
      }
      case MetricKind::Thd: {
        const auto& p = primary.planned;
        const double f0 = p.tb.stimulus ? p.tb.stimulus->frequency : SineStimulus{}.frequency;
        ThdOptions opts;
        opts.window_periods = harnesses.thd_window_periods;
        opts.samples = harnesses.thd_window_periods * harnesses.thd_samples_per_period;
        opts.min_periods = harnesses.thd_window_periods;
        value = thd(real_node(primary, out_node), f0, opts);
        break;
      }
      case MetricKind::Offset: value = input_offset(real_node(primary, out_node), tb.vcm); break;
      case MetricKind::OutputRange: value = output_range(real_node(primary, out_node)); break;
      case MetricKind::SwitchingThreshold: value = switching_threshold(real_node(primary, out_node)); break;
      case MetricKind::PropagationDelay:
        value = propagation_delay(real_node(primary, in_node), real_node(primary, out_node), tb.supply);
        break;
      case MetricKind::OscillationFrequency:
        value = oscillation_frequency(real_node(primary, out_node), tb.supply);
        break;
      case MetricKind::CutoffFrequency: value = cutoff_frequency(complex_out(primary)); break;
      }
      report.set(kind, value, describe(primary.planned));
    } catch (const MetricError& e) {
      report.absent[kind] = {e.kind(), e.what()};
    } catch (const Error& e) {
      report.absent[kind] = {MetricErrorKind::DegenerateInput, e.what()};
    }
  }
  return report;
}

} // namespace amsizer
