// SPDX-License-Identifier: Apache-2.0
#include "amsizer/bench.hpp"

#include "stub_simulator.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace amsizer;
using amsizer::testing::StubSimulator;

namespace {

std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);)
    out.push_back(l);
  return out;
}

int count_kind(const NetlistDoc& doc, ElementKind kind) {
  int n = 0;
  for (const auto& e : doc.elements())
    n += e.kind() == kind;
  return n;
}

AttemptResult attempt(int index, bool success, int iterations) {
  AttemptResult a;
  a.attempt_index = index;
  a.success = success;
  a.iterations = iterations;
  a.outcome.status = success ? OutcomeStatus::Success : OutcomeStatus::BudgetExhausted;
  a.outcome.iterations_used = iterations;
  return a;
}

} // namespace

TEST_CASE("every shipped benchmark loads") {
  const auto names = benchmark_names();
  CHECK(names.size() == 8);
  for (const auto& name : names) {
    CAPTURE(name);
    const auto c = load_benchmark(name);
    CHECK(c.name == name);
    CHECK_FALSE(c.tunables.empty());
    CHECK_FALSE(c.default_group.targets.empty());
    CHECK_NOTHROW(c.default_group.validate());
    CHECK(validate_constraints(c.netlist, c.netlist, c.tunables).empty());
    CHECK(std::filesystem::exists(c.netlist_path));
  }
}

TEST_CASE("opamp and OTA topology") {
  const auto op = load_benchmark("opamp20t");
  CHECK(count_kind(op.netlist, ElementKind::Mosfet) == 20);
  int bias = 0;
  int size_groups = 0;
  for (const auto& t : op.tunables) {
    bias += t.param == ParamKind::DC;
    size_groups += t.param == ParamKind::W;
  }
  CHECK(bias == 6);
  CHECK(size_groups == 12);
  CHECK(op.default_group.name == "G1");
  for (const char* f : {"G1-5", "G2-4", "G3-4"})
    CHECK(op.fixtures.contains(f));

  const auto ota = load_benchmark("5t_ota");
  CHECK(count_kind(ota.netlist, ElementKind::Mosfet) == 5);
}

TEST_CASE("unknown benchmarks") {
  CHECK_THROWS_AS(load_benchmark("adc"), UnknownBenchmark);
  try {
    (void)load_benchmark("adc");
  } catch (const UnknownBenchmark& e) {
    CHECK(std::string(e.what()).find("opamp20t") != std::string::npos);
  }
}

TEST_CASE("published design points are valid netlists") {
  const auto op = load_benchmark("opamp20t");
  for (const auto& [name, values] : op.fixtures) {
    CAPTURE(name);
    const auto doc = apply_fixture(op, name);
    CHECK(validate_constraints(doc, op.netlist, op.tunables).empty());
    const auto now = current_values(doc, op.tunables);
    for (const auto& [key, v] : values)
      CHECK(now.at(key) == doctest::Approx(v));
  }
  CHECK_THROWS_AS(apply_fixture(op, "G9-9"), ConfigError);
}

TEST_CASE("manifest problems are configuration errors") {
  const auto dir = std::filesystem::temp_directory_path() / "amsizer-bad-manifest";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  {
    std::ofstream(dir / "c.sp") << "c\nvdd vdd 0 dc 1.8\nr1 vdd out 1k\nr2 out 0 1k\n.end\n";
  }
  auto write = [&](const nlohmann::json& j) {
    std::ofstream(dir / "manifest.json") << j.dump();
    return dir / "manifest.json";
  };
  nlohmann::json good{{"name", "c"},
                      {"netlist", "c.sp"},
                      {"policy",
                       {{"passives", {"r1"}},
                        {"supply_sources", {"vdd"}},
                        {"bounds", {{"VALUE", {{"r1", {"10", "1meg"}}}}}}}},
                      {"group", "G1"}};
  CHECK_NOTHROW(load_manifest(write(good)));
  auto bad = good;
  bad["sensitivity"] = {{"GAIN", {{{"target", "r9"}, {"param", "VALUE"}}}}};
  CHECK_THROWS_AS(load_manifest(write(bad)), ConfigError);
  bad = good;
  bad["netlist"] = "missing.sp";
  CHECK_THROWS(load_manifest(write(bad)));
  bad = good;
  bad["fixtures"] = {{"x", {{"r1.VALUE", "not-a-number"}}}};
  CHECK_THROWS_AS(load_manifest(write(bad)), ConfigError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("perturbation draws have the requested spread") {
  const int n = 10000;
  PerturbationSampler s(0.1, 0.01, 42);
  double sb = 0.0, sb2 = 0.0, ss = 0.0, ss2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double b = s.bias_delta();
    const double f = s.size_factor() - 1.0;
    sb += b;
    sb2 += b * b;
    ss += f;
    ss2 += f * f;
  }
  const double mb = sb / n;
  const double ms = ss / n;
  CHECK(std::abs(std::sqrt(sb2 / n - mb * mb) - 0.1) < 0.005);
  CHECK(std::abs(std::sqrt(ss2 / n - ms * ms) - 0.01) < 0.0005);
  CHECK(std::abs(mb) < 3.0 * 0.1 / std::sqrt(n));
  CHECK(std::abs(ms) < 3.0 * 0.01 / std::sqrt(n));

  CHECK_THROWS_AS(PerturbationSampler(-0.1, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(PerturbationSampler(0.0, NAN, 1), ConfigError);
}

TEST_CASE("zero sigma leaves a design point untouched") {
  const auto op = load_benchmark("opamp20t");
  const auto values = current_values(apply_fixture(op, "G1-5"), op.tunables);
  PerturbationSampler zero(0.0, 0.0, 9);
  for (int i = 0; i < 5; ++i)
    CHECK(zero.perturb(values, op.tunables) == values);

  PerturbationSampler s(0.1, 0.05, 9);
  const auto moved = s.perturb(values, op.tunables);
  int changed = 0;
  for (const auto& t : op.tunables) {
    const ParamKey key{t.key, std::string(to_string(t.param))};
    CHECK(t.bounds.contains(moved.at(key)));
    changed += moved.at(key) != values.at(key);
  }
  CHECK(changed > 0);
  // same seed, same draws
  PerturbationSampler again(0.1, 0.05, 9);
  CHECK(again.perturb(values, op.tunables) == moved);
}

TEST_CASE("variation grids") {
  VariationOptions o;
  o.fill_defaults(1.8);
  CHECK(o.vcm_grid.size() == 37);
  CHECK(o.vcm_grid.front() == 0.0);
  CHECK(o.vcm_grid.back() == doctest::Approx(1.8));
  CHECK(o.vout_grid.front() == doctest::Approx(0.1));
  CHECK(o.vout_grid.back() == doctest::Approx(1.7));
  CHECK(o.rl_grid.front() == 100.0);
  CHECK(o.rl_grid.back() == 1e6);
  VariationOptions fixed;
  fixed.vcm_grid = {0.9};
  fixed.fill_defaults(1.8);
  CHECK(fixed.vcm_grid.size() == 1);
}

TEST_CASE("campaign statistics count successes only") {
  const auto s = summarize("c", "baseline", {attempt(2, true, 10), attempt(0, true, 20), attempt(1, false, 25)});
  CHECK(s.successes() == 2);
  CHECK(s.success_rate == doctest::Approx(2.0 / 3.0));
  CHECK(*s.iteration_mean == 15.0);
  CHECK(*s.iteration_min == 10);
  CHECK(*s.iteration_max == 20);
  CHECK(s.attempts.front().attempt_index == 0);

  const auto none = summarize("c", "baseline", {attempt(0, false, 25)});
  CHECK(none.success_rate == 0.0);
  CHECK_FALSE(none.iteration_mean.has_value());
}

TEST_CASE("campaign CSV") {
  const auto dir = std::filesystem::temp_directory_path() / "amsizer-csv";
  std::filesystem::create_directories(dir);
  const std::vector<MetricKind> metrics{MetricKind::Gain, MetricKind::Ugbw};

  write_campaign_csv(summarize("c", "baseline", {}), metrics, dir / "empty.csv");
  const auto empty = read_lines(dir / "empty.csv");
  REQUIRE(empty.size() == 1);
  CHECK(empty[0] == "attempt,iterations,success,status,GAIN_dB,UGBW_MHz");

  auto a = attempt(0, true, 4);
  IterationRecord r;
  r.report.set(MetricKind::Gain, 66.5);
  r.report.set(MetricKind::Ugbw, 12.5e6);
  a.outcome.history.records.push_back(r);
  write_campaign_csv(summarize("c", "baseline", {a, attempt(1, false, 25)}), metrics, dir / "two.csv");
  const auto two = read_lines(dir / "two.csv");
  REQUIRE(two.size() == 3);
  CHECK(two[1] == "0,4,1,SUCCESS,66.5,12.5");
  CHECK(two[2].starts_with("1,25,0,BUDGET_EXHAUSTED,"));
  const auto j = campaign_to_json(summarize("c", "baseline", {a}));
  CHECK(j["success_rate"] == 1.0);
  std::filesystem::remove_all(dir);
}

TEST_CASE("a stub campaign runs every attempt in its own directory") {
  const auto circuit = load_benchmark("5t_ota");
  const auto dir = std::filesystem::temp_directory_path() / "amsizer-campaign";
  std::filesystem::remove_all(dir);
  CampaignOptions o;
  o.attempts = 3;
  o.workers = 2;
  o.workdir = dir;
  o.budget = 4;
  // attempt k passes on its (k+2)th measurement, or never for k = 2
  o.simulator = [](const std::filesystem::path& wd) -> std::unique_ptr<Simulator> {
    const int k = wd.parent_path().filename().string().back() - '0';
    return std::make_unique<StubSimulator>([k](const SimJob& j, int batch) {
      const bool pass = k < 2 && batch >= k + 2;
      return amsizer::testing::ac_result(j.planned, pass ? 1e3 : 10.0, 1e4);
    });
  };
  const EngineFactory engines = [&](int k) -> std::unique_ptr<ProposalEngine> {
    BaselineOptions b;
    b.sensitivity = circuit.sensitivity;
    return std::make_unique<BaselineEngine>(100 + k, b);
  };
  const auto s = run_campaign(circuit, circuit.default_group, engines, o);
  REQUIRE(s.attempts.size() == 3);
  CHECK(s.successes() == 2);
  CHECK(s.attempts[0].iterations == 2);
  CHECK(s.attempts[1].iterations == 3);
  CHECK(s.attempts[2].iterations == 4);
  CHECK(s.attempts[2].outcome.status == OutcomeStatus::BudgetExhausted);
  for (int k = 0; k < 3; ++k)
    CHECK(read_lines(dir / ("attempt-0" + std::to_string(k)) / "iterations.jsonl").size() ==
          static_cast<std::size_t>(s.attempts[k].iterations));

  o.attempts = 0;
  CHECK_THROWS_AS(run_campaign(circuit, circuit.default_group, engines, o), ConfigError);
  std::filesystem::remove_all(dir);
}
