// SPDX-License-Identifier: Apache-2.0
#include "amsizer/bench.hpp"
#include "amsizer/units.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <thread>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace amsizer {

namespace fs = std::filesystem;

namespace {

constexpr std::array<std::string_view, 8> kNames{"inverter", "nand",           "xor",     "ring_oscillator",
                                                 "5t_ota",   "common_source", "rc_filter", "opamp20t"};

double number_or_spice(const nlohmann::json& j, std::string_view what) {
  if (j.is_number())
    return j.get<double>();
  if (j.is_string())
    if (auto v = parse_spice_number(j.get<std::string>()))
      return *v;
  throw ConfigError(fmt::format("{}: {} is not a number", what, j.dump()));
}

ParamKey parse_key(std::string_view text) {
  const auto dot = text.rfind('.');
  if (dot == std::string_view::npos)
    throw ConfigError(fmt::format("'{}' is not of the form target.PARAM", text));
  return {std::string(text.substr(0, dot)), std::string(text.substr(dot + 1))};
}

} // namespace

DeckOptions BenchCircuit::deck() const { return {netlist_path.parent_path()}; }

std::vector<std::string> benchmark_names() { return {kNames.begin(), kNames.end()}; }

fs::path default_data_dir() {
  if (const char* env = std::getenv("AMSIZER_DATA"); env && *env)
    return env;
#ifdef AMSIZER_DATA_DIR_DEFAULT
  return AMSIZER_DATA_DIR_DEFAULT;
#else
  return "data";
#endif
}

BenchCircuit load_manifest(const fs::path& manifest, const fs::path& netlist) {
  std::ifstream in(manifest);
  if (!in)
    throw ConfigError(fmt::format("cannot read '{}'", manifest.string()));

  BenchCircuit c;
  try {
    const auto j = nlohmann::json::parse(in);
    c.name = j.value("name", manifest.parent_path().filename().string());
    c.description = j.value("description", std::string{});
    c.circuit_type = j.value("circuit_type", c.name);
    c.netlist_path = netlist.empty() ? manifest.parent_path() / j.at("netlist").get<std::string>() : netlist;
    c.netlist = load_netlist(c.netlist_path.string());
    c.policy = policy_from_json(j.at("policy"));
    c.tunables = extract_tunables(c.netlist, c.policy);
    c.harnesses = harness_set_from_json(j.value("harness", nlohmann::json{}));
    if (j.contains("sensitivity"))
      c.sensitivity = sensitivity_from_json(j.at("sensitivity"));
    const auto& g = j.at("group");
    c.default_group = g.is_string() ? builtin_group(g.get<std::string>()) : group_from_json(g);
    if (j.contains("fixtures"))
      for (const auto& [fname, body] : j.at("fixtures").items()) {
        auto& values = c.fixtures[fname];
        for (const auto& [key, v] : body.items())
          values[parse_key(key)] = number_or_spice(v, fmt::format("fixture {} {}", fname, key));
      }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("{}: {}", manifest.string(), e.what()));
  }
  for (const auto& [metric, entries] : c.sensitivity)
    for (const auto& e : entries)
      if (!find_tunable(c.tunables, e.key))
        throw ConfigError(fmt::format("{}: sensitivity entry {} names no tunable", manifest.string(), to_string(e.key)));
  for (const auto& [fname, values] : c.fixtures)
    for (const auto& [key, v] : values)
      if (!find_tunable(c.tunables, key))
        throw ConfigError(fmt::format("{}: fixture {} sets {}, which is not tunable", manifest.string(), fname,
                                      to_string(key)));
  return c;
}

BenchCircuit load_benchmark(std::string_view name, const fs::path& data_dir) {
  if (std::find(kNames.begin(), kNames.end(), name) == kNames.end())
    throw UnknownBenchmark(fmt::format("unknown benchmark '{}' (available: {})", name, fmt::join(kNames, ", ")));
  return load_manifest(data_dir / "benchmarks" / std::string(name) / "manifest.json");
}

NetlistDoc apply_fixture(const BenchCircuit& circuit, std::string_view fixture) {
  const auto it = circuit.fixtures.find(std::string(fixture));
  if (it == circuit.fixtures.end()) {
    std::vector<std::string> names;
    for (const auto& [n, _] : circuit.fixtures)
      names.push_back(n);
    throw ConfigError(fmt::format("benchmark '{}' has no fixture '{}' (available: {})", circuit.name, fixture,
                                  names.empty() ? "none" : fmt::format("{}", fmt::join(names, ", "))));
  }
  ParamPatch patch;
  patch.assignments = it->second;
  patch.rationale = fmt::format("fixture {}", fixture);
  return apply_patch(circuit.netlist, patch, circuit.netlist, circuit.tunables);
}

SimulatorFactory ngspice_factory(EngineConfig base) {
  return [base](const fs::path& workdir) {
    EngineConfig cfg = base;
    cfg.workdir = workdir;
    return std::make_unique<NgspiceSimulator>(cfg);
  };
}

int CampaignSummary::successes() const {
  return static_cast<int>(std::count_if(attempts.begin(), attempts.end(), [](const auto& a) { return a.success; }));
}

CampaignSummary summarize(std::string circuit, std::string engine, std::vector<AttemptResult> attempts) {
  CampaignSummary s;
  s.circuit = std::move(circuit);
  s.engine = std::move(engine);
  std::sort(attempts.begin(), attempts.end(),
            [](const auto& a, const auto& b) { return a.attempt_index < b.attempt_index; });
  s.attempts = std::move(attempts);
  if (s.attempts.empty())
    return s;
  long sum = 0;
  int n = 0;
  for (const auto& a : s.attempts) {
    if (!a.success)
      continue;
    sum += a.iterations;
    ++n;
    s.iteration_min = s.iteration_min ? std::min(*s.iteration_min, a.iterations) : a.iterations;
    s.iteration_max = s.iteration_max ? std::max(*s.iteration_max, a.iterations) : a.iterations;
  }
  s.success_rate = static_cast<double>(n) / static_cast<double>(s.attempts.size());
  if (n > 0)
    s.iteration_mean = static_cast<double>(sum) / n;
  return s;
}

CampaignSummary run_campaign(const BenchCircuit& circuit, const TargetGroup& group, const EngineFactory& engine,
                             const CampaignOptions& opts) {
  if (opts.attempts < 1)
    throw ConfigError("a campaign needs at least one attempt");
  if (!opts.simulator || !engine)
    throw ConfigError("a campaign needs engine and simulator factories");
  group.validate();

  std::vector<AttemptResult> results(static_cast<std::size_t>(opts.attempts));
  std::vector<std::string> errors(results.size());
  std::string engine_name;
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < opts.attempts; i = next++) {
      try {
        const fs::path dir = opts.workdir / fmt::format("attempt-{:02d}", i);
        fs::create_directories(dir);
        auto sim = opts.simulator(dir / "sim");
        auto eng = engine(i);
        if (i == 0)
          engine_name = eng->capabilities().name;
        OptimizerOptions o;
        o.simulator = sim.get();
        o.harnesses = circuit.harnesses;
        o.deck = circuit.deck();
        o.circuit_type = circuit.circuit_type;
        o.tunables = circuit.tunables;
        o.log_path = dir / "iterations.jsonl";
        o.timing_path = dir / "timing.jsonl";
        o.budget = opts.budget;
        auto outcome = run_optimization(circuit.netlist, group, *eng, o);
        auto& r = results[static_cast<std::size_t>(i)];
        r.attempt_index = i;
        r.iterations = outcome.iterations_used;
        r.success = outcome.status == OutcomeStatus::Success;
        r.outcome = std::move(outcome);
      } catch (const std::exception& e) {
        errors[static_cast<std::size_t>(i)] = e.what();
      }
    }
  };
  const int workers = std::clamp(opts.workers, 1, opts.attempts);
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w)
    pool.emplace_back(worker);
  worker();
  for (auto& t : pool)
    t.join();
  for (const auto& e : errors)
    if (!e.empty())
      throw ConfigError(e);
  return summarize(circuit.name, engine_name, std::move(results));
}

} // namespace amsizer
