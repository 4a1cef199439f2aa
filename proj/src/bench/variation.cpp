// SPDX-License-Identifier: Apache-2.0
#include "amsizer/bench.hpp"
#include "amsizer/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

#include <fmt/format.h>

namespace amsizer {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// One curve point: metric computed from a subset of the sample's jobs.
struct Point {
  std::size_t curve;
  std::size_t xi;
  MetricKind metric;
  TestbenchConfig tb;
  std::vector<std::size_t> jobs;
};

struct SweepPlan {
  std::vector<PlannedAnalysis> analyses;
  std::vector<Point> points;
  std::size_t offset_job = 0;

  std::size_t add(const PlannedAnalysis& p) {
    const auto it = std::find(analyses.begin(), analyses.end(), p);
    if (it != analyses.end())
      return static_cast<std::size_t>(it - analyses.begin());
    analyses.push_back(p);
    return analyses.size() - 1;
  }

  void point(std::size_t curve, std::size_t xi, MetricKind m, const TestbenchConfig& tb, const HarnessSet& h) {
    Point p{curve, xi, m, tb, {}};
    const MetricKind one[] = {m};
    for (const auto& a : plan_analyses(one, tb, h))
      p.jobs.push_back(add(a));
    points.push_back(std::move(p));
  }
};

enum Curve : std::size_t { OffsetVsVcm, GainVsVout, GainVsRl, CmrrVsVcm, CurveCount };

void evaluate(const SweepPlan& plan, const VariationOptions& opts, const HarnessSet& h,
                             const std::vector<SimOutcome>& outcomes, std::vector<std::string>& failures,
                             std::vector<std::vector<double>>& curves) {
  for (const auto& o : outcomes)
    if (const auto* f = std::get_if<SimFailure>(&o))
      failures.push_back(fmt::format("{} {}: {}: {}", f->planned.analysis.card(), f->planned.tb.summary(),
                                     to_string(f->kind), f->message));

  const std::string out_node = fmt::format("v({})", h.output_node);
  if (const auto* r = std::get_if<SimResult>(&outcomes[plan.offset_job])) {
    if (const auto* w = r->real(out_node))
      for (std::size_t i = 0; i < opts.vcm_grid.size(); ++i)
        curves[OffsetVsVcm][i] = w->at(opts.vcm_grid[i]) - opts.vcm_grid[i];
  }

  for (const auto& p : plan.points) {
    std::vector<SimResult> results;
    std::vector<SimFailure> failed;
    for (auto j : p.jobs) {
      if (const auto* r = std::get_if<SimResult>(&outcomes[j]))
        results.push_back(*r);
      else
        failed.push_back(std::get<SimFailure>(outcomes[j]));
    }
    const MetricKind one[] = {p.metric};
    try {
      const auto report = assemble_report(results, one, p.tb, h, failed);
      if (const auto v = report.get(p.metric))
        curves[p.curve][p.xi] = *v;
    } catch (const Error& e) {
      failures.push_back(e.what());
    }
  }
}

} // namespace

void VariationOptions::fill_defaults(double supply) {
  if (vcm_grid.empty())
    for (int i = 0; i <= 36; ++i)
      vcm_grid.push_back(supply * i / 36.0);
  if (vout_grid.empty())
    for (int i = 1; 0.1 * i <= supply - 0.1 + 1e-9; ++i)
      vout_grid.push_back(0.1 * i);
  if (rl_grid.empty())
    rl_grid = {100.0, 300.0, 1e3, 3e3, 10e3, 30e3, 100e3, 300e3, 1e6};
}

PerturbationSampler::PerturbationSampler(double sigma_bias, double sigma_size, std::uint64_t seed)
    : rng_(seed), bias_(0.0, sigma_bias > 0 ? sigma_bias : 1.0), size_(0.0, sigma_size > 0 ? sigma_size : 1.0),
      sigma_bias_(sigma_bias), sigma_size_(sigma_size) {
  if (sigma_bias < 0 || sigma_size < 0 || !std::isfinite(sigma_bias) || !std::isfinite(sigma_size))
    throw ConfigError("perturbation sigmas must be finite and non-negative");
}

double PerturbationSampler::bias_delta() { return sigma_bias_ > 0 ? bias_(rng_) : 0.0; }

double PerturbationSampler::size_factor() { return sigma_size_ > 0 ? 1.0 + size_(rng_) : 1.0; }

std::map<ParamKey, double> PerturbationSampler::perturb(const std::map<ParamKey, double>& values,
                                                        std::span<const TunableParam> tunables) {
  auto out = values;
  for (const auto& t : tunables) {
    const ParamKey key{t.key, std::string(to_string(t.param))};
    const auto it = out.find(key);
    if (it == out.end())
      continue;
    const double v = t.param == ParamKind::DC ? it->second + bias_delta() : it->second * size_factor();
    if (v != it->second)
      it->second = t.bounds.clamp(v);
  }
  return out;
}

VariationStudy variation_study(const BenchCircuit& circuit, const NetlistDoc& sized, VariationOptions opts,
                               const SimulatorFactory& simulator) {
  const auto& h = circuit.harnesses;
  if (std::find(h.required_ports.begin(), h.required_ports.end(), "inn") == h.required_ports.end())
    throw ConfigError(fmt::format("variation sweeps need a differential amplifier; '{}' has none", circuit.name));
  if (opts.n < 2)
    throw ConfigError("a variation study needs at least two samples");
  if (!simulator)
    throw ConfigError("variation study needs a simulator factory");
  const TestbenchConfig base = testbench_for(circuit.default_group);
  opts.fill_defaults(base.supply);

  SweepPlan plan;
  {
    const MetricKind offset[] = {MetricKind::Offset};
    const auto a = plan_analyses(offset, base, h);
    plan.offset_job = plan.add(a.front());
  }
  for (std::size_t i = 0; i < opts.vout_grid.size(); ++i) {
    auto tb = base;
    tb.vcm = opts.vout_grid[i];
    plan.point(GainVsVout, i, MetricKind::Gain, tb, h);
    plan.point(CmrrVsVcm, i, MetricKind::Cmrr, tb, h);
  }
  for (std::size_t i = 0; i < opts.rl_grid.size(); ++i) {
    auto tb = base;
    tb.load.rl = opts.rl_grid[i];
    plan.point(GainVsRl, i, MetricKind::Gain, tb, h);
  }

  VariationStudy study;
  study.circuit = circuit.name;
  study.options = opts;
  study.curves = {
      {"offset_vs_vcm", "vcm_V", "offset_V", opts.vcm_grid, {}, {}},
      {"gain_vs_vout", "vout_V", "gain_dB", opts.vout_grid, {}, {}},
      {"gain_vs_rl", "rl_ohm", "gain_dB", opts.rl_grid, {}, {}},
      {"cmrr_vs_vcm", "vcm_V", "cmrr_dB", opts.vout_grid, {}, {}},
  };

  // Draws happen up front so results do not depend on the worker count.
  const auto nominal = current_values(sized, circuit.tunables);
  PerturbationSampler sampler(opts.sigma_bias, opts.sigma_size, opts.seed);
  std::vector<VariationSample> samples(static_cast<std::size_t>(opts.n) + 1);
  for (std::size_t s = 0; s < samples.size(); ++s) {
    samples[s].index = static_cast<int>(s);
    samples[s].values = s == 0 ? nominal : sampler.perturb(nominal, circuit.tunables);
  }

  std::vector<std::vector<std::vector<double>>> values(samples.size());
  std::vector<std::string> errors(samples.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t s = next++; s < samples.size(); s = next++) {
      try {
        ParamPatch patch;
        for (const auto& [k, v] : samples[s].values)
          if (nominal.at(k) != v)
            patch.assignments[k] = v;
        const NetlistDoc doc = patch.empty() ? sized : apply_patch(sized, patch, circuit.netlist, circuit.tunables);
        std::vector<SimJob> jobs;
        for (const auto& a : plan.analyses)
          jobs.push_back({a, build_deck(doc, a, h, circuit.deck())});
        auto sim = simulator(opts.workdir / fmt::format("sample-{:03d}", s));
        const auto outcomes = sim->run(jobs);
        if (outcomes.size() != jobs.size())
          throw Error("simulator returned the wrong number of outcomes");
        auto& curves = values[s];
        for (const auto& c : study.curves)
          curves.emplace_back(c.x.size(), kNaN);
        evaluate(plan, opts, h, outcomes, samples[s].failures, curves);
      } catch (const std::exception& e) {
        errors[s] = e.what();
      }
    }
  };
  const int workers = std::clamp(opts.workers, 1, static_cast<int>(samples.size()));
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w)
    pool.emplace_back(worker);
  worker();
  for (auto& t : pool)
    t.join();
  for (const auto& e : errors)
    if (!e.empty())
      throw Error(e);

  for (std::size_t c = 0; c < CurveCount; ++c) {
    study.curves[c].nominal = values[0][c];
    for (std::size_t s = 1; s < samples.size(); ++s)
      study.curves[c].samples.push_back(values[s][c]);
  }
  study.samples = std::move(samples);
  return study;
}

} // namespace amsizer
