// SPDX-License-Identifier: Apache-2.0
#include "amsizer/bench.hpp"
#include "amsizer/sim.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <filesystem>

using namespace amsizer;

namespace {

const char* kAcRaw = R"(Title: tiny
Date: Thu Jan  1 00:00:00  2026
Plotname: AC Analysis
Flags: complex
No. Variables: 3
No. Points: 3
Variables:
	0	frequency	frequency
	1	out	voltage
	2	vdd#branch	current
Values:
 0	1.0e+0,0.0e+0
	2.0e+0,-1.0e+0
	-1.0e-3,0.0e+0
 1	1.0e+1,0.0e+0
	1.5e+0,-2.0e+0
	-1.0e-3,0.0e+0
 2	1.0e+2,0.0e+0
	1.0e-1,-5.0e-1
	-1.0e-3,0.0e+0
)";

const char* kOpRaw = R"(Title: tiny
Plotname: Operating Point
Flags: real
No. Variables: 2
No. Points: 1
Variables:
	0	v(out)	voltage
	1	i(vdd)	current
Values:
 0	9.0e-1
	-2.5e-3
)";

const char* kAmp = R"(amp
vdd vdd 0 dc 1.8
m1 x inp tail 0 nch w=4u l=0.18u
m2 out inn tail 0 nch w=4u l=0.18u
m3 x x vdd vdd pch w=8u l=0.18u
m4 out x vdd vdd pch w=8u l=0.18u
i1 tail 0 dc 100u
.op
.end
)";

std::vector<MetricKind> all_eight() {
  using enum MetricKind;
  return {Gain, Ugbw, PhaseMargin, Power, Cmrr, Thd, Offset, OutputRange};
}

} // namespace

TEST_CASE("ascii rawfile: complex sweep and branch names") {
  const auto plot = parse_raw(kAcRaw);
  CHECK(plot.complex);
  CHECK(plot.plotname == "AC Analysis");
  CHECK(plot.names == std::vector<std::string>{"frequency", "v(out)", "i(vdd)"});
  const auto& out = std::get<ComplexWaveform>(plot.waveforms.at("v(out)"));
  REQUIRE(out.size() == 3);
  CHECK(out.sweep[2] == 100.0);
  CHECK(out.values[1] == std::complex<double>(1.5, -2.0));
  CHECK(plot.waveforms.contains("i(vdd)"));
}

TEST_CASE("ascii rawfile: operating point") {
  const auto plot = parse_raw(kOpRaw);
  CHECK(plot.waveforms.empty());
  CHECK(plot.op_point.at("v(out)") == 0.9);
  CHECK(plot.op_point.at("i(vdd)") == -2.5e-3);
}

TEST_CASE("malformed rawfiles report where they broke") {
  CHECK_THROWS_AS(parse_raw(""), ParseFailure);
  std::string truncated(kAcRaw);
  truncated.resize(truncated.find(" 2\t"));
  try {
    (void)parse_raw(truncated);
    FAIL("truncated values accepted");
  } catch (const ParseFailure& e) {
    CHECK(e.offset() > 0);
    CHECK(std::string(e.what()).find("2 of 3") != std::string::npos);
  }
  std::string garbled(kAcRaw);
  garbled.replace(garbled.find("1.5e+0"), 6, "x.5e+0");
  CHECK_THROWS_AS(parse_raw(garbled), ParseFailure);
  std::string backwards(kAcRaw);
  backwards.replace(backwards.find("1.0e+2,0"), 6, "5.0e+0");
  CHECK_THROWS_AS(parse_raw(backwards), ParseFailure);
}

TEST_CASE("log excerpt keeps the tail") {
  std::string log;
  for (int i = 0; i < 40; ++i)
    log += "line " + std::to_string(i) + "\n";
  const auto ex = log_excerpt(log, 3);
  CHECK(ex.find("line 39") != std::string::npos);
  CHECK(ex.find("line 37") != std::string::npos);
  CHECK(ex.find("line 36") == std::string::npos);
}

TEST_CASE("analysis cards") {
  CHECK(AnalysisSpec::op().card() == ".op");
  CHECK(AnalysisSpec::ac({20, 1.0, 1e10}).card().starts_with(".ac dec 20 1 "));
  CHECK(AnalysisSpec::dc({"vin", 0.0, 1.8, 0.01}).card().starts_with(".dc vin 0 1.8 "));
  CHECK_THROWS_AS(AnalysisSpec::ac({0, 1.0, 10.0}).validate(), ConfigError);
  CHECK_THROWS_AS(AnalysisSpec::ac({20, 10.0, 1.0}).validate(), ConfigError);
  CHECK_THROWS_AS(AnalysisSpec::tran({1e-9, 0.0}).validate(), ConfigError);
}

TEST_CASE("the eight opamp metrics need five analyses") {
  TestbenchConfig tb;
  const auto plan = plan_analyses(all_eight(), tb);
  REQUIRE(plan.size() == 5);
  CHECK(plan[0].analysis.kind == AnalysisKind::Ac);
  CHECK(plan[0].tb.topology == Topology::OpenLoop);
  CHECK(plan[1].analysis.kind == AnalysisKind::Ac);
  CHECK(plan[1].tb.topology == Topology::CmDrive);
  int tran = 0;
  for (const auto& p : plan)
    tran += p.analysis.kind == AnalysisKind::Tran;
  CHECK(tran == 1);
  for (const auto& p : plan)
    CHECK(p.tb.load == tb.load);

  // duplicates merge and order is stable
  std::vector<MetricKind> twice = all_eight();
  twice.insert(twice.end(), twice.begin(), twice.end());
  CHECK(plan_analyses(twice, tb) == plan);
  const std::vector<MetricKind> gain_only{MetricKind::Gain, MetricKind::Ugbw, MetricKind::PhaseMargin};
  CHECK(plan_analyses(gain_only, tb).size() == 1);
}

TEST_CASE("deck assembly") {
  const auto doc = parse_netlist(kAmp);
  const auto plan = plan_analyses(all_eight(), TestbenchConfig{});
  for (const auto& p : plan) {
    const auto deck = build_deck(doc, p, HarnessSet::opamp_default());
    CAPTURE(deck);
    CHECK(deck.starts_with("amp\n"));
    // the netlist's own analysis card and .end are dropped
    CHECK(deck.find(".end") == deck.rfind(".end"));
    if (p.analysis.kind != AnalysisKind::Op)
      CHECK(deck.find(".op") == std::string::npos);
    CHECK(deck.find(p.analysis.card()) != std::string::npos);
    CHECK(deck.ends_with(".end\n"));
    CHECK(deck.find('{') == std::string::npos);
    CHECK(deck.find("m1 x inp tail 0 nch") != std::string::npos);
  }
  const auto no_inn = parse_netlist("amp\nvdd vdd 0 dc 1.8\nr1 inp out 1k\n.end\n");
  CHECK_THROWS_AS(build_deck(no_inn, plan[0], HarnessSet::opamp_default()), MissingPort);
}

TEST_CASE("relative includes resolve against the netlist directory") {
  const std::string text = std::string("amp\n.include models/x.lib\n.lib /abs/y.lib tt\n") + (std::string(kAmp).substr(4));
  const auto doc = parse_netlist(text);
  const auto plan = plan_analyses(std::vector{MetricKind::Power}, TestbenchConfig{});
  DeckOptions opts;
  opts.include_base = "/data/bench";
  const auto deck = build_deck(doc, plan[0], HarnessSet::opamp_default(), opts);
  CHECK(deck.find(".include /data/bench/models/x.lib") != std::string::npos);
  CHECK(deck.find(".lib /abs/y.lib tt") != std::string::npos);
}

TEST_CASE("harness sets survive JSON") {
  const auto h = HarnessSet::opamp_default();
  const auto back = harness_set_from_json(harness_set_to_json(h));
  CHECK(back.harnesses == h.harnesses);
  CHECK(back.dispatch.size() == h.dispatch.size());
  CHECK(back.ac == h.ac);
  CHECK(back.thd_periods == h.thd_periods);
  auto j = harness_set_to_json(h);
  j["thd_discard_periods"] = 20;
  CHECK_THROWS_AS(harness_set_from_json(j), ConfigError);
}

TEST_CASE("testbench validation") {
  TestbenchConfig tb;
  CHECK_NOTHROW(tb.validate());
  tb.vcm = 2.5;
  CHECK_THROWS_AS(tb.validate(), ConfigError);
  tb = {};
  tb.load.rl = 0.0;
  CHECK_THROWS_AS(tb.validate(), ConfigError);
}

TEST_CASE("a real engine run reports results and failures" * doctest::timeout(120)) {
  std::filesystem::path engine;
  try {
    engine = locate_engine();
  } catch (const ConfigError&) {
    MESSAGE("no SPICE engine available");
    return;
  }
  const auto dir = std::filesystem::temp_directory_path() / "amsizer-sim-test";
  std::filesystem::remove_all(dir);
  NgspiceSimulator sim({engine, 60.0, dir, true});
  PlannedAnalysis op{AnalysisSpec::op(), {}};
  const std::vector<SimJob> jobs{
      {op, "divider\nv1 a 0 dc 1.8\nr1 a b 1k\nr2 b 0 2k\n.op\n.end\n"},
      // two ideal voltage sources in a loop cannot be solved
      {op, "loop\nv1 a 0 dc 1\nv2 a 0 dc 2\n.op\n.end\n"},
  };
  const auto out = sim.run(jobs);
  REQUIRE(out.size() == 2);
  REQUIRE(std::holds_alternative<SimResult>(out[0]));
  CHECK(std::get<SimResult>(out[0]).op_point.at("v(b)") == doctest::Approx(1.2).epsilon(1e-9));
  REQUIRE(std::holds_alternative<SimFailure>(out[1]));
  CHECK_FALSE(std::get<SimFailure>(out[1]).message.empty());
  std::filesystem::remove_all(dir);
}
