// SPDX-License-Identifier: Apache-2.0
#include "amsizer/cli.hpp"
#include "amsizer/metrics.hpp"

#include <fstream>
#include <ostream>

#include <fmt/format.h>
#include <fmt/ostream.h>
#include <nlohmann/json.hpp>

namespace amsizer {

namespace fs = std::filesystem;

namespace {

// Artifacts written by one command, listed in run-manifest.json.
class RunManifest {
public:
  RunManifest(fs::path workdir, std::string command) : workdir_(std::move(workdir)), command_(std::move(command)) {
    fs::create_directories(workdir_);
  }

  fs::path path(const fs::path& rel) {
    artifacts_.push_back(rel.generic_string());
    const auto p = workdir_ / rel;
    if (p.has_parent_path())
      fs::create_directories(p.parent_path());
    return p;
  }

  void add(const fs::path& abs) { artifacts_.push_back(fs::relative(abs, workdir_).generic_string()); }

  void write(const std::string& status, int exit_code, const nlohmann::json& extra = nlohmann::json::object()) {
    nlohmann::json j = extra;
    j["command"] = command_;
    j["status"] = status;
    j["exit_code"] = exit_code;
    j["artifacts"] = artifacts_;
    j["artifacts"].push_back("run-manifest.json");
    std::ofstream(workdir_ / "run-manifest.json") << j.dump(2) << '\n';
  }

private:
  fs::path workdir_;
  std::string command_;
  std::vector<std::string> artifacts_;
};

void write_text(const fs::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::trunc);
  out << text;
  if (!out)
    throw IoError(fmt::format("cannot write '{}'", path.string()));
}

NetlistDoc design_point(const BenchCircuit& c, const RunConfig& cfg) {
  return cfg.fixture.empty() ? c.netlist : apply_fixture(c, cfg.fixture);
}

TargetGroup group_for(const BenchCircuit& c, const RunConfig& cfg) {
  TargetGroup g = cfg.group.empty() ? c.default_group : resolve_group(cfg.group);
  if (cfg.budget > 0)
    g.max_iterations = cfg.budget;
  return g;
}

std::unique_ptr<Simulator> make_simulator(const RunConfig& cfg, const fs::path& dir) {
  EngineConfig e = cfg.spice;
  e.workdir = dir;
  return std::make_unique<NgspiceSimulator>(e);
}

std::unique_ptr<ProposalEngine> make_engine(const RunConfig& cfg, const BenchCircuit& c, int attempt,
                                            const fs::path& transcript) {
  if (cfg.engine == "baseline") {
    BaselineOptions o;
    o.sensitivity = c.sensitivity;
    return std::make_unique<BaselineEngine>(cfg.seed + static_cast<std::uint64_t>(attempt), o);
  }
  std::shared_ptr<ChatClient> client;
  if (cfg.transcript_mode == TranscriptMode::Replay) {
    client = std::make_shared<TranscriptClient>(transcript, TranscriptMode::Replay, nullptr);
  } else {
    if (!cfg.provider)
      throw ConfigError("the llm engine needs a provider section in the config file");
    auto live = std::make_shared<ProviderClient>(*cfg.provider);
    if (cfg.transcript_mode == TranscriptMode::Record)
      client = std::make_shared<TranscriptClient>(transcript, TranscriptMode::Record, live,
                                                  std::vector<std::string>{cfg.provider->api_key_env});
    else
      client = live;
  }
  const std::string label = cfg.provider ? cfg.provider->model_id : "recorded";
  return std::make_unique<LlmEngine>(client, label, cfg.transcript_mode != TranscriptMode::Replay);
}

void print_check(std::ostream& out, const MetricReport& report, const TargetGroup& group) {
  const auto check = check_all(report, group);
  for (const auto& t : group.targets) {
    const auto d = display_unit(t.kind);
    const auto it = check.per_metric.find(t.kind);
    if (it == check.per_metric.end()) {
      const auto a = report.absent.find(t.kind);
      fmt::print(out, "  {:<7} {:>14}  {:<36} MISSING{}\n", metric_label(t.kind), "-", describe_target(t),
                 a == report.absent.end() ? "" : fmt::format(" ({})", a->second.detail));
      continue;
    }
    fmt::print(out, "  {:<7} {:>14}  {:<36} margin {:+.4g} {} {}\n", metric_label(t.kind),
               format_metric(t.kind, it->second.value), describe_target(t), it->second.margin * d.scale, d.unit,
               it->second.pass ? "PASS" : "FAIL");
  }
  fmt::print(out, "verdict: {}\n", check.overall_pass ? "PASS" : "FAIL");
}

void print_report(std::ostream& out, const MetricReport& report) {
  for (const auto& [kind, v] : report.values)
    fmt::print(out, "  {:<7} {:>14}\n", metric_label(kind), format_metric(kind, v.value));
  for (const auto& [kind, a] : report.absent)
    fmt::print(out, "  {:<7} {:>14}  {}: {}\n", metric_label(kind), "-", to_string(a.reason), a.detail);
}

} // namespace

void RunConfig::validate() const {
  if (engine != "baseline" && engine != "llm")
    throw ConfigError(fmt::format("unknown engine '{}' (use baseline or llm)", engine));
  if (budget < 0)
    throw ConfigError("the iteration budget must be at least 1");
  if (workers < 1)
    throw ConfigError("at least one worker is needed");
  if (circuit.empty() && netlist.empty())
    throw ConfigError("give a benchmark circuit or a netlist");
  if (workdir.empty())
    throw ConfigError("the work directory cannot be empty");
  if (provider)
    provider->validate();
}

void apply_config_json(RunConfig& cfg, const nlohmann::json& j) {
  try {
    if (!j.is_object())
      throw ConfigError("a config file holds one JSON object");
    auto str = [&](const char* key, std::string& dst) {
      if (j.contains(key))
        dst = j.at(key).get<std::string>();
    };
    auto path = [&](const char* key, fs::path& dst) {
      if (j.contains(key))
        dst = j.at(key).get<std::string>();
    };
    str("circuit", cfg.circuit);
    path("netlist", cfg.netlist);
    path("manifest", cfg.manifest);
    str("fixture", cfg.fixture);
    str("group", cfg.group);
    str("engine", cfg.engine);
    path("workdir", cfg.workdir);
    path("transcript", cfg.transcript);
    path("data_dir", cfg.data_dir);
    if (j.contains("metrics"))
      cfg.metrics = j.at("metrics").get<std::vector<std::string>>();
    cfg.seed = j.value("seed", cfg.seed);
    cfg.budget = j.value("budget", cfg.budget);
    cfg.workers = j.value("workers", cfg.workers);
    cfg.verbose = j.value("verbose", cfg.verbose);
    if (j.contains("transcript_mode")) {
      const auto m = parse_transcript_mode(j.at("transcript_mode").get<std::string>());
      if (!m)
        throw ConfigError(fmt::format("unknown transcript mode {}", j.at("transcript_mode").dump()));
      cfg.transcript_mode = *m;
    }
    if (j.contains("provider"))
      cfg.provider = provider_from_json(j.at("provider"));
    if (j.contains("spice")) {
      const auto& s = j.at("spice");
      if (s.contains("executable"))
        cfg.spice.executable = s.at("executable").get<std::string>();
      cfg.spice.timeout = s.value("timeout", cfg.spice.timeout);
      cfg.spice.keep_files = s.value("keep_files", cfg.spice.keep_files);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("malformed config: {}", e.what()));
  }
}

void apply_config_file(RunConfig& cfg, const fs::path& path) {
  std::ifstream in(path);
  if (!in)
    throw ConfigError(fmt::format("cannot read config file '{}'", path.string()));
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
  apply_config_json(cfg, j);
}

BenchCircuit resolve_circuit(const RunConfig& cfg) {
  if (!cfg.circuit.empty()) {
    auto c = load_benchmark(cfg.circuit, cfg.data_dir);
    if (cfg.netlist.empty())
      return c;
    return load_manifest(cfg.data_dir / "benchmarks" / cfg.circuit / "manifest.json", cfg.netlist);
  }
  if (cfg.netlist.empty())
    throw ConfigError("give a benchmark circuit or a netlist");
  fs::path manifest = cfg.manifest;
  if (manifest.empty() && fs::exists(cfg.netlist.parent_path() / "manifest.json"))
    manifest = cfg.netlist.parent_path() / "manifest.json";
  if (!manifest.empty())
    return load_manifest(manifest, cfg.netlist);

  BenchCircuit c;
  c.name = cfg.netlist.stem().string();
  c.circuit_type = c.name;
  c.netlist_path = cfg.netlist;
  c.netlist = load_netlist(cfg.netlist.string());
  c.tunables = extract_tunables(c.netlist, c.policy);
  c.harnesses = HarnessSet::opamp_default();
  c.default_group = builtin_group("G1");
  return c;
}

int cmd_size(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  cfg.validate();
  const auto circuit = resolve_circuit(cfg);
  const auto doc = design_point(circuit, cfg);
  const auto group = group_for(circuit, cfg);
  RunManifest manifest(cfg.workdir, "size");
  const fs::path transcript = cfg.transcript.empty() ? cfg.workdir / "transcript.jsonl" : cfg.transcript;
  auto engine = make_engine(cfg, circuit, 0, transcript);
  if (cfg.engine == "llm" && cfg.transcript_mode == TranscriptMode::Record)
    manifest.add(transcript);
  auto sim = make_simulator(cfg, cfg.workdir / "sim");

  OptimizerOptions o;
  o.simulator = sim.get();
  o.harnesses = circuit.harnesses;
  o.deck = {circuit.netlist_path.parent_path()};
  o.circuit_type = circuit.circuit_type;
  o.tunables = circuit.tunables;
  o.cancel = cfg.cancel;
  o.log_path = manifest.path("iterations.jsonl");
  o.timing_path = manifest.path("timing.jsonl");
  const auto outcome = run_optimization(doc, group, *engine, o);

  write_text(manifest.path("final.sp"), serialize_netlist(outcome.final_netlist));
  write_text(manifest.path("reasons.md"), render_reasons(outcome));
  write_text(manifest.path("outcome.json"), outcome_to_json(outcome).dump(2) + "\n");
  write_trace_csv(outcome.history, manifest.path("trace.csv"));

  const int code = outcome.status == OutcomeStatus::Success           ? ExitSuccess
                   : outcome.status == OutcomeStatus::BudgetExhausted ? ExitNotMet
                                                                      : ExitAborted;
  manifest.write(std::string(to_string(outcome.status)), code, {{"iterations", outcome.iterations_used}});

  if (!outcome.history.records.empty()) {
    fmt::print(out, "{} ({}), best design point:\n", circuit.name, group.name);
    const auto& recs = outcome.history.records;
    const auto& shown = outcome.status == OutcomeStatus::Success ? recs.back() : [&]() -> const IterationRecord& {
      std::size_t best = 0;
      for (std::size_t k = 1; k < recs.size(); ++k)
        if (record_score(recs[k], group) > record_score(recs[best], group))
          best = k;
      return recs[best];
    }();
    print_check(out, shown.report, group);
  }
  if (!outcome.abort_reason.empty())
    fmt::print(err, "aborted: {}\n", outcome.abort_reason);
  fmt::print(out, "artifacts in {}\n", cfg.workdir.string());
  fmt::print(out, "status={} iters={}\n", to_string(outcome.status), outcome.iterations_used);
  return code;
}

int cmd_measure(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  cfg.validate();
  const auto circuit = resolve_circuit(cfg);
  const auto doc = design_point(circuit, cfg);
  const auto group = group_for(circuit, cfg);
  std::vector<MetricKind> metrics;
  for (const auto& m : cfg.metrics) {
    const auto k = parse_metric_kind(m);
    if (!k)
      throw ConfigError(fmt::format("unknown metric '{}'", m));
    if (std::find(metrics.begin(), metrics.end(), *k) == metrics.end())
      metrics.push_back(*k);
  }
  const bool annotate = metrics.empty() || !cfg.group.empty();
  if (metrics.empty())
    metrics = group.metrics();

  RunManifest manifest(cfg.workdir, "measure");
  const auto tb = testbench_for(group);
  const auto plan = plan_analyses(metrics, tb, circuit.harnesses);
  std::vector<SimJob> jobs;
  for (const auto& p : plan)
    jobs.push_back({p, build_deck(doc, p, circuit.harnesses, {circuit.netlist_path.parent_path()})});
  auto sim = make_simulator(cfg, cfg.workdir / "sim");
  const auto outcomes = sim->run(jobs);

  std::vector<SimResult> results;
  std::vector<SimFailure> failures;
  for (const auto& o : outcomes) {
    if (const auto* r = std::get_if<SimResult>(&o))
      results.push_back(*r);
    else
      failures.push_back(std::get<SimFailure>(o));
  }
  auto report = assemble_report(results, metrics, tb, circuit.harnesses, failures);
  report.design_point_id = cfg.fixture.empty() ? circuit.name : fmt::format("{}:{}", circuit.name, cfg.fixture);
  write_text(manifest.path("report.json"), report_to_json(report).dump(2) + "\n");
  write_text(manifest.path("measured.sp"), serialize_netlist(doc));

  fmt::print(out, "{}: {} analyses\n", report.design_point_id, plan.size());
  if (annotate)
    print_check(out, report, group);
  else
    print_report(out, report);
  for (const auto& f : failures) {
    fmt::print(err, "simulation failed: {} {}: {}: {}\n", f.planned.analysis.card(), f.planned.tb.summary(),
               to_string(f.kind), f.message);
    if (!f.log_excerpt.empty())
      fmt::print(err, "{}\n", f.log_excerpt);
  }
  const int code = failures.empty() ? ExitSuccess : ExitSimulationError;
  manifest.write(failures.empty() ? "MEASURED" : "SIMULATION_ERROR", code,
                 {{"analyses", plan.size()}, {"failures", failures.size()}});
  return code;
}

int cmd_check(const fs::path& report_path, const RunConfig& cfg, std::ostream& out, std::ostream&) {
  std::ifstream in(report_path);
  if (!in)
    throw ConfigError(fmt::format("cannot read report '{}'", report_path.string()));
  MetricReport report;
  try {
    report = report_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("{}: {}", report_path.string(), e.what()));
  }
  const TargetGroup group = cfg.group.empty() ? builtin_group("G1") : resolve_group(cfg.group);
  print_check(out, report, group);
  const auto check = check_all(report, group);
  if (!check.missing.empty()) {
    std::vector<std::string> names;
    for (auto k : check.missing)
      names.emplace_back(metric_label(k));
    fmt::print(out, "missing: {}\n", fmt::join(names, ", "));
  }
  return check.overall_pass ? ExitSuccess : ExitNotMet;
}

int cmd_bench(const RunConfig& cfg, int attempts, std::ostream& out, std::ostream&) {
  cfg.validate();
  if (attempts < 1)
    throw ConfigError("--attempts must be at least 1");
  const auto circuit = resolve_circuit(cfg);
  const auto group = group_for(circuit, cfg);
  RunManifest manifest(cfg.workdir, "bench");

  CampaignOptions o;
  o.attempts = attempts;
  o.workers = cfg.workers;
  o.workdir = cfg.workdir;
  o.budget = cfg.budget;
  o.simulator = [&](const fs::path& dir) { return make_simulator(cfg, dir); };
  const EngineFactory factory = [&](int attempt) {
    const auto name = fmt::format("attempt-{:02d}", attempt);
    const fs::path transcript =
        cfg.transcript.empty() ? cfg.workdir / name / "transcript.jsonl" : cfg.transcript / name / "transcript.jsonl";
    return make_engine(cfg, circuit, attempt, transcript);
  };
  const auto summary = run_campaign(circuit, group, factory, o);
  for (int i = 0; i < attempts; ++i)
    for (const char* f : {"iterations.jsonl", "timing.jsonl"})
      manifest.add(cfg.workdir / fmt::format("attempt-{:02d}", i) / f);
  write_campaign_csv(summary, group.metrics(), manifest.path("campaign.csv"));
  write_text(manifest.path("campaign.json"), campaign_to_json(summary).dump(2) + "\n");
  manifest.write("DONE", ExitSuccess, campaign_to_json(summary));

  fmt::print(out, "{} with {}: {}/{} attempts succeeded\n", summary.circuit, summary.engine, summary.successes(),
             summary.attempts.size());
  if (summary.iteration_mean)
    fmt::print(out, "iterations over successes: mean {:.2f}, min {}, max {}\n", *summary.iteration_mean,
               *summary.iteration_min, *summary.iteration_max);
  fmt::print(out, "success_rate={:.2f}\n", summary.success_rate);
  return ExitSuccess;
}

int cmd_vary(const RunConfig& cfg, VariationOptions opts, std::ostream& out, std::ostream& err) {
  cfg.validate();
  const auto circuit = resolve_circuit(cfg);
  const auto doc = design_point(circuit, cfg);
  RunManifest manifest(cfg.workdir, "vary");
  opts.workdir = cfg.workdir / "samples";
  opts.workers = cfg.workers;
  const auto study = variation_study(circuit, doc, opts, [&](const fs::path& dir) { return make_simulator(cfg, dir); });
  for (const auto& p : write_variation(study, cfg.workdir / "variation"))
    manifest.add(p);
  std::size_t failed = 0;
  for (const auto& s : study.samples)
    if (!s.failures.empty()) {
      ++failed;
      for (const auto& f : s.failures)
        fmt::print(err, "sample {}: {}\n", s.index, f);
    }
  manifest.write("DONE", ExitSuccess, {{"samples", opts.n}, {"samples_with_failures", failed}});
  for (const auto& c : study.curves)
    fmt::print(out, "{}: {} points, nominal plus {} samples\n", c.name, c.x.size(), c.samples.size());
  fmt::print(out, "curves in {}\n", (cfg.workdir / "variation").string());
  return ExitSuccess;
}

} // namespace amsizer
