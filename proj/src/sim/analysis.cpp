// SPDX-License-Identifier: Apache-2.0
#include "amsizer/sim.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <regex>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace amsizer {

namespace {

std::string num(double v) { return fmt::format("{:.12g}", v); }

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
    s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
    s.remove_suffix(1);
  return s;
}

int kind_rank(AnalysisKind k) {
  switch (k) {
  case AnalysisKind::Ac: return 0;
  case AnalysisKind::Op: return 1;
  case AnalysisKind::DcSweep: return 2;
  case AnalysisKind::Tran: return 3;
  }
  return 4;
}

constexpr std::array<std::pair<Topology, std::string_view>, 4> kTopologyNames{{
    {Topology::OpenLoop, "OPEN_LOOP"},
    {Topology::UnityGain, "UNITY_GAIN"},
    {Topology::CmDrive, "CM_DRIVE"},
    {Topology::DiffDrive, "DIFF_DRIVE"},
}};

std::optional<AnalysisKind> parse_analysis_kind(std::string_view text) {
  const auto t = lower(text);
  if (t == "op")
    return AnalysisKind::Op;
  if (t == "dc" || t == "dc_sweep")
    return AnalysisKind::DcSweep;
  if (t == "ac")
    return AnalysisKind::Ac;
  if (t == "tran")
    return AnalysisKind::Tran;
  return std::nullopt;
}

bool is_analysis_card(std::string_view t) {
  static constexpr std::array<std::string_view, 11> cards{".op",   ".ac",    ".dc", ".tran", ".noise", ".tf",
                                                          ".pz",   ".disto", ".sens", ".four", ".end"};
  const auto word = lower(t.substr(0, t.find_first_of(" \t")));
  return std::find(cards.begin(), cards.end(), word) != cards.end();
}

std::string absolutize_include(const std::string& line, const std::filesystem::path& base) {
  static const std::regex re(R"(^(\s*\.(?:include|inc|lib)\s+)(["']?)([^"'\s]+)(["']?)(.*)$)", std::regex::icase);
  std::smatch m;
  if (base.empty() || !std::regex_match(line, m, re))
    return line;
  const std::filesystem::path p(m[3].str());
  if (p.is_absolute())
    return line;
  return m[1].str() + m[2].str() + (base / p).lexically_normal().string() + m[4].str() + m[5].str();
}

std::string substitute(std::string line, const std::map<std::string, std::string>& vars) {
  for (const auto& [key, value] : vars) {
    const std::string token = "{" + key + "}";
    for (auto pos = line.find(token); pos != std::string::npos; pos = line.find(token, pos + value.size()))
      line.replace(pos, token.size(), value);
  }
  return line;
}

std::vector<std::string> harness_lines(Topology t) {
  const std::vector<std::string> load{"ctbload out 0 {cl}", "rtbload out 0 {rl}"};
  std::vector<std::string> lines;
  switch (t) {
  case Topology::OpenLoop:
  case Topology::CmDrive:
    // DC follower through the inductor; the capacitor opens the loop for AC.
    lines = {"vtbinp inp 0 dc {vcm} ac 1", t == Topology::OpenLoop ? "vtbacn acn 0 dc 0 ac 0" : "vtbacn acn 0 dc 0 ac 1",
             "ctbfb inn acn 1g", "ltbfb out inn 1g"};
    break;
  case Topology::DiffDrive:
    lines = {"vtbinp inp 0 dc {vcm} ac 0.5", "vtbacn acn 0 dc 0 ac 0.5 180", "ctbfb inn acn 1g",
             "ltbfb out inn 1g"};
    break;
  case Topology::UnityGain:
    lines = {"vtbinp inp 0 dc {vcm} {stim}", "vtbfb inn out dc 0"};
    break;
  }
  lines.insert(lines.end(), load.begin(), load.end());
  return lines;
}

} // namespace

std::string_view to_string(AnalysisKind kind) {
  switch (kind) {
  case AnalysisKind::Op: return "OP";
  case AnalysisKind::DcSweep: return "DC_SWEEP";
  case AnalysisKind::Ac: return "AC";
  case AnalysisKind::Tran: return "TRAN";
  }
  return "";
}

std::string_view to_string(Topology t) {
  for (const auto& [k, name] : kTopologyNames)
    if (k == t)
      return name;
  return "";
}

std::optional<Topology> parse_topology(std::string_view text) {
  std::string upper(text);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  for (const auto& [k, name] : kTopologyNames)
    if (name == upper)
      return k;
  return std::nullopt;
}

void AnalysisSpec::validate() const {
  auto bad = [](const std::string& why) { throw ConfigError("invalid analysis: " + why); };
  switch (kind) {
  case AnalysisKind::Op: break;
  case AnalysisKind::DcSweep: {
    const auto& p = std::get<DcSweepParams>(params);
    if (p.source.empty())
      bad("DC sweep without a source");
    if (!(p.step > 0.0) || !(p.stop > p.start))
      bad(fmt::format("DC sweep {}..{} step {}", p.start, p.stop, p.step));
    break;
  }
  case AnalysisKind::Ac: {
    const auto& p = std::get<AcParams>(params);
    if (p.points_per_decade < 1 || !(p.fstart > 0.0) || !(p.fstart < p.fstop))
      bad(fmt::format("AC {}..{} Hz, {} points/decade", p.fstart, p.fstop, p.points_per_decade));
    break;
  }
  case AnalysisKind::Tran: {
    const auto& p = std::get<TranParams>(params);
    if (!(p.tstop > 0.0) || !(p.tstep > 0.0) || p.tstart < 0.0 || p.tstart >= p.tstop)
      bad(fmt::format("TRAN step {} stop {} start {}", p.tstep, p.tstop, p.tstart));
    break;
  }
  }
}

std::string AnalysisSpec::card() const {
  validate();
  switch (kind) {
  case AnalysisKind::Op: return ".op";
  case AnalysisKind::DcSweep: {
    const auto& p = std::get<DcSweepParams>(params);
    return fmt::format(".dc {} {} {} {}", p.source, num(p.start), num(p.stop), num(p.step));
  }
  case AnalysisKind::Ac: {
    const auto& p = std::get<AcParams>(params);
    return fmt::format(".ac dec {} {} {}", p.points_per_decade, num(p.fstart), num(p.fstop));
  }
  case AnalysisKind::Tran: {
    const auto& p = std::get<TranParams>(params);
    std::string out = fmt::format(".tran {} {} {}", num(p.tstep), num(p.tstop), num(p.tstart));
    if (p.tmax > 0.0)
      out += " " + num(p.tmax);
    return out;
  }
  }
  return {};
}

void TestbenchConfig::validate() const {
  if (!(supply > 0.0))
    throw ConfigError(fmt::format("supply {} V must be positive", supply));
  if (vcm < 0.0 || vcm > supply)
    throw ConfigError(fmt::format("vcm {} V outside [0, {}]", vcm, supply));
  if (!(load.cl > 0.0) || !(load.rl > 0.0))
    throw ConfigError(fmt::format("load CL={} F RL={} Ohm must be positive", load.cl, load.rl));
  if (stimulus && (!(stimulus->amplitude > 0.0) || !(stimulus->frequency > 0.0)))
    throw ConfigError("sine stimulus needs positive amplitude and frequency");
}

std::string TestbenchConfig::summary() const {
  std::string out = fmt::format("{} vcm={} CL={} RL={}", to_string(topology), num(vcm), num(load.cl), num(load.rl));
  if (stimulus)
    out += fmt::format(" sine={}V@{}Hz", num(stimulus->amplitude), num(stimulus->frequency));
  return out;
}

const HarnessTemplate& HarnessSet::harness(Topology t) const {
  for (const auto& h : harnesses)
    if (h.topology == t)
      return h;
  throw ConfigError(fmt::format("no testbench harness for topology {}", to_string(t)));
}

const MetricPlanEntry& HarnessSet::plan_for(MetricKind kind) const {
  auto it = dispatch.find(kind);
  if (it == dispatch.end())
    throw ConfigError(fmt::format("no analysis is configured for metric {}", to_string(kind)));
  return it->second;
}

HarnessSet HarnessSet::opamp_default() {
  HarnessSet h;
  for (auto t : {Topology::OpenLoop, Topology::UnityGain, Topology::CmDrive, Topology::DiffDrive})
    h.harnesses.push_back({t, harness_lines(t), "vtbinp"});
  h.dispatch = {
      {MetricKind::Gain, {AnalysisKind::Ac, Topology::OpenLoop, {}}},
      {MetricKind::Ugbw, {AnalysisKind::Ac, Topology::OpenLoop, {}}},
      {MetricKind::PhaseMargin, {AnalysisKind::Ac, Topology::OpenLoop, {}}},
      {MetricKind::Cmrr, {AnalysisKind::Ac, Topology::CmDrive, Topology::OpenLoop}},
      {MetricKind::Power, {AnalysisKind::Op, Topology::UnityGain, {}}},
      {MetricKind::Offset, {AnalysisKind::DcSweep, Topology::UnityGain, {}}},
      {MetricKind::OutputRange, {AnalysisKind::DcSweep, Topology::UnityGain, {}}},
      {MetricKind::Thd, {AnalysisKind::Tran, Topology::UnityGain, {}}},
      {MetricKind::SwitchingThreshold, {AnalysisKind::DcSweep, Topology::OpenLoop, {}}},
      {MetricKind::PropagationDelay, {AnalysisKind::Tran, Topology::OpenLoop, {}}},
      {MetricKind::OscillationFrequency, {AnalysisKind::Tran, Topology::OpenLoop, {}}},
      {MetricKind::CutoffFrequency, {AnalysisKind::Ac, Topology::OpenLoop, {}}},
  };
  return h;
}

HarnessSet harness_set_from_json(const nlohmann::json& j) {
  HarnessSet h = HarnessSet::opamp_default();
  if (j.is_null())
    return h;
  if (j.contains("harnesses")) {
    for (const auto& [name, body] : j.at("harnesses").items()) {
      const auto t = parse_topology(name);
      if (!t)
        throw ConfigError(fmt::format("unknown testbench topology '{}'", name));
      HarnessTemplate tpl{*t, body.at("lines").get<std::vector<std::string>>(),
                          body.value("sweep_source", std::string("vtbinp"))};
      auto it = std::find_if(h.harnesses.begin(), h.harnesses.end(), [&](const auto& x) { return x.topology == *t; });
      *it = std::move(tpl);
    }
  }
  if (j.contains("ports"))
    h.required_ports = j.at("ports").get<std::vector<std::string>>();
  h.output_node = j.value("output_node", h.output_node);
  h.input_node = j.value("input_node", h.input_node);
  h.supply_source = j.value("supply_source", h.supply_source);
  if (j.contains("dispatch")) {
    for (const auto& [name, body] : j.at("dispatch").items()) {
      const auto kind = parse_metric_kind(name);
      const auto analysis = parse_analysis_kind(body.at("analysis").get<std::string>());
      const auto topo = parse_topology(body.at("topology").get<std::string>());
      if (!kind || !analysis || !topo)
        throw ConfigError(fmt::format("invalid dispatch entry for '{}'", name));
      MetricPlanEntry e{*analysis, *topo, std::nullopt};
      if (body.contains("reference"))
        e.reference = parse_topology(body.at("reference").get<std::string>());
      h.dispatch[*kind] = e;
    }
  }
  if (j.contains("ac")) {
    const auto& a = j.at("ac");
    h.ac.points_per_decade = a.value("points_per_decade", h.ac.points_per_decade);
    h.ac.fstart = a.value("fstart", h.ac.fstart);
    h.ac.fstop = a.value("fstop", h.ac.fstop);
  }
  h.dc_step = j.value("dc_step", h.dc_step);
  if (j.contains("tran")) {
    const auto& t = j.at("tran");
    h.tran.tstep = t.value("tstep", 0.0);
    h.tran.tstop = t.value("tstop", 0.0);
    h.tran.tstart = t.value("tstart", 0.0);
    h.tran.tmax = t.value("tmax", 0.0);
  }
  h.thd_periods = j.value("thd_periods", h.thd_periods);
  h.thd_window_periods = j.value("thd_window_periods", h.thd_window_periods);
  h.thd_discard_periods = j.value("thd_discard_periods", h.thd_discard_periods);
  h.thd_samples_per_period = j.value("thd_samples_per_period", h.thd_samples_per_period);
  if (h.thd_window_periods < 1 || h.thd_discard_periods < 0 ||
      h.thd_discard_periods + h.thd_window_periods > h.thd_periods)
    throw ConfigError("THD window and settling periods must fit in thd_periods");
  return h;
}

nlohmann::json harness_set_to_json(const HarnessSet& h) {
  nlohmann::json j;
  for (const auto& tpl : h.harnesses)
    j["harnesses"][std::string(to_string(tpl.topology))] = {{"lines", tpl.lines},
                                                            {"sweep_source", tpl.sweep_source}};
  j["ports"] = h.required_ports;
  j["output_node"] = h.output_node;
  j["input_node"] = h.input_node;
  j["supply_source"] = h.supply_source;
  for (const auto& [kind, e] : h.dispatch) {
    nlohmann::json d{{"analysis", to_string(e.analysis)}, {"topology", to_string(e.topology)}};
    if (e.reference)
      d["reference"] = to_string(*e.reference);
    j["dispatch"][std::string(to_string(kind))] = d;
  }
  j["ac"] = {{"points_per_decade", h.ac.points_per_decade}, {"fstart", h.ac.fstart}, {"fstop", h.ac.fstop}};
  j["dc_step"] = h.dc_step;
  j["tran"] = {{"tstep", h.tran.tstep}, {"tstop", h.tran.tstop}, {"tstart", h.tran.tstart}, {"tmax", h.tran.tmax}};
  j["thd_periods"] = h.thd_periods;
  j["thd_window_periods"] = h.thd_window_periods;
  j["thd_discard_periods"] = h.thd_discard_periods;
  j["thd_samples_per_period"] = h.thd_samples_per_period;
  return j;
}

std::vector<PlannedAnalysis> plan_analyses(std::span<const MetricKind> metrics, const TestbenchConfig& tb_base,
                                           const HarnessSet& harnesses) {
  tb_base.validate();
  std::vector<PlannedAnalysis> plan;
  auto add = [&](AnalysisKind kind, Topology topo, MetricKind metric) {
    PlannedAnalysis p;
    p.tb = tb_base;
    p.tb.topology = topo;
    p.tb.stimulus.reset();
    switch (kind) {
    case AnalysisKind::Op: p.analysis = AnalysisSpec::op(); break;
    case AnalysisKind::Ac: p.analysis = AnalysisSpec::ac(harnesses.ac); break;
    case AnalysisKind::DcSweep:
      p.analysis = AnalysisSpec::dc({harnesses.harness(topo).sweep_source, 0.0, tb_base.supply, harnesses.dc_step});
      break;
    case AnalysisKind::Tran:
      if (metric == MetricKind::Thd) {
        const SineStimulus s = tb_base.stimulus.value_or(SineStimulus{});
        p.tb.stimulus = s;
        const double period = 1.0 / s.frequency;
        TranParams t;
        t.tstep = period / harnesses.thd_samples_per_period;
        t.tstop = harnesses.thd_periods * period;
        t.tstart = harnesses.thd_discard_periods * period;
        t.tmax = t.tstep;
        p.analysis = AnalysisSpec::tran(t);
      } else {
        p.analysis = AnalysisSpec::tran(harnesses.tran);
      }
      break;
    }
    if (std::find(plan.begin(), plan.end(), p) == plan.end())
      plan.push_back(std::move(p));
  };
  for (const auto m : metrics) {
    const auto& e = harnesses.plan_for(m);
    add(e.analysis, e.topology, m);
    if (e.reference)
      add(e.analysis, *e.reference, m);
  }
  std::stable_sort(plan.begin(), plan.end(), [](const PlannedAnalysis& a, const PlannedAnalysis& b) {
    if (kind_rank(a.analysis.kind) != kind_rank(b.analysis.kind))
      return kind_rank(a.analysis.kind) < kind_rank(b.analysis.kind);
    return static_cast<int>(a.tb.topology) < static_cast<int>(b.tb.topology);
  });
  return plan;
}

std::string build_deck(const NetlistDoc& doc, const PlannedAnalysis& planned, const HarnessSet& harnesses,
                       const DeckOptions& opts) {
  planned.tb.validate();
  for (const auto& port : harnesses.required_ports)
    if (!doc.has_node(port))
      throw MissingPort(fmt::format("netlist has no node '{}' required by the testbench", port));

  const auto& tpl = harnesses.harness(planned.tb.topology);
  std::map<std::string, std::string> vars{
      {"vcm", num(planned.tb.vcm)},
      {"vdd", num(planned.tb.supply)},
      {"cl", num(planned.tb.load.cl)},
      {"rl", num(planned.tb.load.rl)},
      {"stim", ""},
      {"stim_amp", "0"},
      {"stim_freq", "0"},
      {"stim_period", "0"},
  };
  if (planned.tb.stimulus) {
    const auto& s = *planned.tb.stimulus;
    vars["stim"] = fmt::format("sin({} {} {})", num(planned.tb.vcm), num(s.amplitude), num(s.frequency));
    vars["stim_amp"] = num(s.amplitude);
    vars["stim_freq"] = num(s.frequency);
    vars["stim_period"] = num(1.0 / s.frequency);
  }

  std::string out = doc.title() + "\n";
  out += "* testbench: " + planned.tb.summary() + "\n";

  auto emit_directive = [&](const Directive& d) {
    const auto t = trim(d.text);
    const auto tl = lower(t);
    if (tl.starts_with(".control") || is_analysis_card(t))
      return;
    std::string text = d.text;
    if (tl.starts_with(".inc") || tl.starts_with(".lib"))
      text = absolutize_include(text, opts.include_base);
    out += text + "\n";
  };
  const auto elements = doc.elements();
  const auto directives = doc.directives();
  std::size_t d = 0;
  for (std::size_t i = 0; i <= elements.size(); ++i) {
    while (d < directives.size() && directives[d].position <= i)
      emit_directive(directives[d++]);
    if (i < elements.size())
      out += serialize_card(elements[i]) + "\n";
  }

  out += "* harness\n";
  for (const auto& line : tpl.lines)
    out += substitute(line, vars) + "\n";
  out += planned.analysis.card() + "\n";
  out += ".end\n";
  return out;
}

} // namespace amsizer
