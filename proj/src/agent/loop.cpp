// SPDX-License-Identifier: Apache-2.0
#include "amsizer/agent.hpp"

#include <chrono>
#include <fstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "format.hpp"

namespace amsizer {

namespace {

IterationRecord measure(const NetlistDoc& doc, const std::vector<PlannedAnalysis>& plan, const TargetGroup& group,
                        const OptimizerOptions& opts, IterationRecord rec) {
  std::vector<SimJob> jobs;
  for (const auto& p : plan)
    jobs.push_back({p, build_deck(doc, p, opts.harnesses, opts.deck)});
  const auto outcomes = opts.simulator->run(jobs);
  if (outcomes.size() != jobs.size())
    throw Error(fmt::format("simulator returned {} outcomes for {} jobs", outcomes.size(), jobs.size()));
  std::vector<SimResult> results;
  std::vector<SimFailure> failures;
  for (const auto& o : outcomes) {
    if (const auto* r = std::get_if<SimResult>(&o)) {
      results.push_back(*r);
    } else {
      const auto& f = std::get<SimFailure>(o);
      failures.push_back(f);
      rec.observations.push_back({Observation::Kind::SimulationFailure, std::string(to_string(f.kind)), f.message,
                                  f.log_excerpt, f.planned.analysis.card() + " " + f.planned.tb.summary()});
    }
  }
  rec.report = assemble_report(results, group.metrics(), testbench_for(group), opts.harnesses, failures);
  return rec;
}

nlohmann::json values_json(const std::map<ParamKey, double>& values) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : values)
    j[to_string(k)] = v;
  return j;
}

void append_line(const std::filesystem::path& path, const nlohmann::json& j) {
  if (path.empty())
    return;
  std::ofstream out(path, std::ios::app);
  out << j.dump() << '\n';
  if (!out)
    throw IoError(fmt::format("cannot write '{}'", path.string()));
}

void truncate(const std::filesystem::path& path) {
  if (path.empty())
    return;
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out)
    throw IoError(fmt::format("cannot write '{}'", path.string()));
}

} // namespace

std::string_view to_string(Observation::Kind k) {
  switch (k) {
  case Observation::Kind::SimulationFailure: return "simulation-failure";
  case Observation::Kind::RejectedPatch: return "rejected-patch";
  case Observation::Kind::EngineFailure: return "engine-failure";
  }
  return "";
}

std::string_view to_string(OutcomeStatus s) {
  switch (s) {
  case OutcomeStatus::Success: return "SUCCESS";
  case OutcomeStatus::BudgetExhausted: return "BUDGET_EXHAUSTED";
  case OutcomeStatus::Aborted: return "ABORTED";
  }
  return "";
}

OptimizationOutcome run_optimization(const NetlistDoc& baseline, const TargetGroup& group_in, ProposalEngine& engine,
                                     const OptimizerOptions& opts) {
  TargetGroup group = group_in;
  if (opts.budget > 0)
    group.max_iterations = opts.budget;
  group.validate();
  if (!opts.simulator)
    throw ConfigError("run_optimization needs a simulator");
  if (opts.tunables.empty())
    throw ConfigError("run_optimization needs at least one tunable");
  if (const auto issues = validate_constraints(baseline, baseline, opts.tunables); !issues.empty())
    throw ConfigError(fmt::format("baseline violates its own constraints: {}: {}", issues.front().element,
                                  issues.front().what));

  const auto plan = plan_analyses(group.metrics(), testbench_for(group), opts.harnesses);
  truncate(opts.log_path);
  truncate(opts.timing_path);

  OptimizationOutcome out;
  out.history = {opts.circuit_type, {}, baseline, group, opts.tunables};
  auto& history = out.history;
  std::vector<NetlistDoc> docs;
  NetlistDoc doc = baseline;
  int engine_failures = 0;

  for (int i = 1; i <= group.max_iterations; ++i) {
    if (opts.cancel && opts.cancel->load()) {
      out.status = OutcomeStatus::Aborted;
      out.abort_reason = "interrupted";
      break;
    }
    const auto t0 = std::chrono::steady_clock::now();
    IterationRecord rec;
    rec.index = i;
    NetlistDoc candidate = doc;
    bool simulate = true;

    if (i == 1) {
      rec.rationale = "baseline measurement";
    } else {
      try {
        rec.patch = engine.propose(build_prompt(history), history, opts.tunables);
        engine_failures = 0;
        rec.rationale = rec.patch.rationale.empty() ? "no rationale given" : rec.patch.rationale;
        try {
          candidate = apply_patch(doc, rec.patch, baseline, opts.tunables);
        } catch (const Error& e) {
          rec.observations.push_back({Observation::Kind::RejectedPatch, "ConstraintViolation", e.what(), {}, {}});
          simulate = false;
        }
      } catch (const EngineFailure& e) {
        ++engine_failures;
        rec.rationale = fmt::format("engine failure: {}", e.what());
        rec.observations.push_back({Observation::Kind::EngineFailure, "EngineFailure", e.what(), {}, {}});
        simulate = false;
      }
    }

    rec.values = current_values(candidate, opts.tunables);
    if (simulate) {
      rec = measure(candidate, plan, group, opts, std::move(rec));
      doc = candidate;
    } else {
      rec.report = history.records.back().report;
    }
    rec.check = check_all(rec.report, group);
    rec.wallclock = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    append_line(opts.log_path, record_to_json(rec, group));
    append_line(opts.timing_path, {{"iteration", rec.index}, {"wallclock", rec.wallclock}});
    history.records.push_back(std::move(rec));
    docs.push_back(doc);
    out.iterations_used = i;

    const auto& last = history.records.back();
    if (simulate && last.check.overall_pass) {
      out.status = OutcomeStatus::Success;
      out.final_netlist = doc;
      return out;
    }
    if (engine_failures >= opts.max_engine_failures) {
      out.status = OutcomeStatus::Aborted;
      out.abort_reason = fmt::format("{} consecutive engine failures", engine_failures);
      break;
    }
  }

  if (out.abort_reason.empty())
    out.status = OutcomeStatus::BudgetExhausted;
  if (docs.empty()) {
    out.final_netlist = baseline;
    return out;
  }
  std::size_t best = 0;
  for (std::size_t k = 1; k < history.records.size(); ++k)
    if (record_score(history.records[k], group) > record_score(history.records[best], group))
      best = k;
  out.final_netlist = docs[best];
  return out;
}

nlohmann::json record_to_json(const IterationRecord& r, const TargetGroup& group) {
  nlohmann::json j;
  j["iteration"] = r.index;
  j["patch"] = values_json(r.patch.assignments);
  j["rationale"] = r.rationale;
  j["values"] = values_json(r.values);
  j["report"] = report_to_json(r.report);
  j["check"] = check_to_json(r.check, group);
  j["observations"] = nlohmann::json::array();
  for (const auto& o : r.observations)
    j["observations"].push_back({{"kind", to_string(o.kind)},
                                 {"code", o.code},
                                 {"message", o.message},
                                 {"analysis", o.analysis},
                                 {"log_excerpt", o.log_excerpt}});
  return j;
}

nlohmann::json outcome_to_json(const OptimizationOutcome& o) {
  nlohmann::json j;
  j["status"] = to_string(o.status);
  j["iterations_used"] = o.iterations_used;
  j["abort_reason"] = o.abort_reason;
  j["circuit_type"] = o.history.circuit_type;
  j["group"] = group_to_json(o.history.group);
  j["final_netlist"] = serialize_netlist(o.final_netlist);
  j["records"] = nlohmann::json::array();
  for (const auto& r : o.history.records)
    j["records"].push_back(record_to_json(r, o.history.group));
  return j;
}

std::string render_reasons(const OptimizationOutcome& o) {
  const auto& h = o.history;
  std::string out = fmt::format("# Sizing run: {}\n\nstatus: {} after {} iteration{}\ntargets ({}):\n",
                                h.circuit_type, to_string(o.status), o.iterations_used,
                                o.iterations_used == 1 ? "" : "s", h.group.name);
  for (const auto& t : h.group.targets)
    out += fmt::format("  {}\n", describe_target(t));
  if (!o.abort_reason.empty())
    out += fmt::format("aborted: {}\n", o.abort_reason);
  for (const auto& r : h.records) {
    out += fmt::format("\n## Iteration {}\n\nreason: {}\n\n", r.index, r.rationale);
    out += render_record(r, h.group);
    out += fmt::format("  verdict: {}\n", r.check.overall_pass ? "all targets met" : "targets not met");
  }
  out += "\n## Final netlist\n\n";
  out += serialize_netlist(o.final_netlist);
  return out;
}

} // namespace amsizer
