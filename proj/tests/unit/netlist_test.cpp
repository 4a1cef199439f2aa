// SPDX-License-Identifier: Apache-2.0
#include "amsizer/bench.hpp"
#include "amsizer/netlist.hpp"
#include "amsizer/units.hpp"

#include <random>

#include <doctest.h>

using namespace amsizer;

namespace {

const char* kSmall = R"(small test circuit
* a comment
.include models.lib
vdd vdd 0 dc 1.8
vb bias 0 dc 0.6
m1 x inp tail 0 nch w=4u l=0.18u
m2 out inn tail 0 nch w=4u l=0.18u
m3 x x vdd vdd pch w=8U l=0.18u
m4 out x vdd vdd pch w=8u l=0.18u
m5 tail bias 0 0 nch w=4u l=0.5u
rl out 0 10k
cl out 0 1p
.end
)";

TunablePolicy small_policy() {
  TunablePolicy p;
  p.groups = {{"g12", {"m1", "m2"}}, {"g34", {"m3", "m4"}}};
  p.bias_sources = {"vb"};
  p.passives = {"rl"};
  p.supply_sources = {"vdd"};
  p.value_bounds["rl"] = {100.0, 1e6};
  return p;
}

} // namespace

TEST_CASE("SPICE numbers with scale suffixes") {
  CHECK(*parse_spice_number("10u") == doctest::Approx(10e-6));
  CHECK(*parse_spice_number("0.18U") == doctest::Approx(0.18e-6));
  CHECK(*parse_spice_number("1meg") == doctest::Approx(1e6));
  CHECK(*parse_spice_number("1m") == doctest::Approx(1e-3));
  CHECK(*parse_spice_number("2.2kohm") == doctest::Approx(2.2e3));
  CHECK(*parse_spice_number("10e-6") == doctest::Approx(10e-6));
  CHECK(*parse_spice_number("5f") == doctest::Approx(5e-15));
  CHECK_FALSE(parse_spice_number("abc"));
  std::string suffix;
  parse_spice_number("53u", &suffix);
  CHECK(suffix == "u");
  CHECK(format_spice_number(53e-6, "u") == "53u");
}

TEST_CASE("parse extracts element cards and keeps directives") {
  const auto doc = parse_netlist(kSmall);
  CHECK(doc.title() == "small test circuit");
  CHECK(doc.elements().size() == 9);
  const auto& m3 = doc.at("m3");
  CHECK(m3.kind() == ElementKind::Mosfet);
  CHECK(m3.nodes == std::vector<std::string>{"x", "x", "vdd", "vdd"});
  CHECK(*m3.model == "pch");
  CHECK(m3.param("w")->magnitude == doctest::Approx(8e-6));
  CHECK(doc.at("vb").param("dc")->magnitude == doctest::Approx(0.6));
  CHECK(doc.at("rl").kind() == ElementKind::Resistor);
  CHECK(doc.has_node("tail"));
  CHECK_FALSE(doc.has_node("nowhere"));
  CHECK(doc.find("m9") == nullptr);
  CHECK_THROWS_AS((void)doc.at("m9"), UnknownElement);
}

TEST_CASE("continuation lines and inline comments") {
  const auto doc = parse_netlist("t\nm1 d g s b nch\n+ w=2u l=1u ; trailing\nr1 a b 1k $ note\n.end\n");
  CHECK(doc.at("m1").param("l")->magnitude == doctest::Approx(1e-6));
  CHECK(doc.at("r1").param("value")->magnitude == doctest::Approx(1e3));
}

TEST_CASE("malformed cards report their line") {
  try {
    (void)parse_netlist("title\nvdd vdd 0 dc 1.8\nm1 a b\n");
    FAIL("expected a syntax error");
  } catch (const SyntaxError& e) {
    CHECK(e.line() == 3);
  }
}

TEST_CASE("round trip preserves structure") {
  const auto doc = parse_netlist(kSmall);
  const auto again = parse_netlist(serialize_netlist(doc));
  CHECK(structurally_equal(doc, again));
  CHECK(serialize_netlist(again) == serialize_netlist(doc));
}

TEST_CASE("round trip on every shipped benchmark netlist") {
  for (const auto& name : benchmark_names()) {
    CAPTURE(name);
    const auto c = load_benchmark(name);
    const auto text = serialize_netlist(c.netlist);
    const auto again = parse_netlist(text);
    CHECK(structurally_equal(c.netlist, again));
    CHECK(serialize_netlist(parse_netlist(serialize_netlist(again))) == serialize_netlist(again));
  }
}

TEST_CASE("tunables follow the policy") {
  const auto doc = parse_netlist(kSmall);
  const auto tunables = extract_tunables(doc, small_policy());
  // g12 W/L, g34 W/L, m5 W/L, vb DC, rl VALUE
  CHECK(tunables.size() == 8);
  const auto* g12 = find_tunable(tunables, {"g12", "W"});
  REQUIRE(g12 != nullptr);
  CHECK(g12->members == std::vector<std::string>{"m1", "m2"});
  CHECK(find_tunable(tunables, {"vdd", "DC"}) == nullptr);
  CHECK(find_tunable(tunables, {"rl", "VALUE"}) != nullptr);
  // a member name resolves to its group
  CHECK(find_tunable(tunables, {"m1", "W"}) == g12);
  CHECK(find_tunable(tunables, {"m3", "DC"}) == nullptr);
}

TEST_CASE("bad policies are rejected") {
  const auto doc = parse_netlist(kSmall);
  auto p = small_policy();
  p.groups.push_back({"gx", {"m1", "m5"}});
  CHECK_THROWS_AS(extract_tunables(doc, p), ConfigError);
  p = small_policy();
  p.groups.push_back({"gy", {"m7"}});
  CHECK_THROWS_AS(extract_tunables(doc, p), UnknownElement);
  p = small_policy();
  p.width = {10e-6, 100e-6};
  CHECK_THROWS_AS(extract_tunables(doc, p), OutOfBounds);
}

TEST_CASE("patches move whole groups and keep everything else") {
  const auto doc = parse_netlist(kSmall);
  const auto tunables = extract_tunables(doc, small_policy());
  ParamPatch patch;
  patch.assignments[{"g12", "W"}] = 10e-6;
  patch.assignments[{"vb", "DC"}] = 0.7;
  const auto next = apply_patch(doc, patch, doc, tunables);
  CHECK(next.at("m1").param("w")->magnitude == doctest::Approx(10e-6));
  CHECK(next.at("m2").param("w")->magnitude == doctest::Approx(10e-6));
  CHECK(next.at("vb").param("dc")->magnitude == doctest::Approx(0.7));
  CHECK(next.at("m3").param("w")->magnitude == doctest::Approx(8e-6));
  CHECK(validate_constraints(next, doc, tunables).empty());
  // the original is untouched
  CHECK(doc.at("m1").param("w")->magnitude == doctest::Approx(4e-6));
}

TEST_CASE("patch errors") {
  const auto doc = parse_netlist(kSmall);
  const auto tunables = extract_tunables(doc, small_policy());
  ParamPatch unknown;
  unknown.assignments[{"vdd", "DC"}] = 1.5;
  CHECK_THROWS_AS(apply_patch(doc, unknown, doc, tunables), ConstraintViolation);
  ParamPatch missing;
  missing.assignments[{"m9", "W"}] = 5e-6;
  CHECK_THROWS_AS(apply_patch(doc, missing, doc, tunables), UnknownTunable);
  ParamPatch model;
  model.assignments[{"m1", "model"}] = 1;
  CHECK_THROWS_AS(apply_patch(doc, model, doc, tunables), ConstraintViolation);
  ParamPatch member;
  member.assignments[{"m1", "W"}] = 5e-6;
  const auto moved = apply_patch(doc, member, doc, tunables);
  CHECK(moved.at("m2").param("w")->magnitude == doctest::Approx(5e-6));
  ParamPatch out;
  out.assignments[{"g12", "L"}] = 0.01e-6;
  CHECK_THROWS_AS(apply_patch(doc, out, doc, tunables), OutOfBounds);
}

TEST_CASE("constraint validation catches supply and model edits") {
  const auto doc = parse_netlist(kSmall);
  const auto tunables = extract_tunables(doc, small_policy());
  auto vdd = doc.at("vdd");
  vdd.set_param("dc", vdd.param("dc")->with_magnitude(1.5));
  CHECK_FALSE(validate_constraints(doc.with_element(vdd), doc, tunables).empty());
  auto m1 = doc.at("m1");
  m1.model = "pch";
  CHECK_FALSE(validate_constraints(doc.with_element(m1), doc, tunables).empty());
  auto m2 = doc.at("m2");
  m2.set_param("w", m2.param("w")->with_magnitude(9e-6));
  const auto issues = validate_constraints(doc.with_element(m2), doc, tunables);
  CHECK_FALSE(issues.empty());
}

TEST_CASE("randomized patch sequences keep groups coherent and supplies fixed") {
  for (const auto& name : benchmark_names()) {
    CAPTURE(name);
    const auto c = load_benchmark(name);
    std::mt19937_64 rng(std::hash<std::string>{}(name));
    NetlistDoc doc = c.netlist;
    for (int step = 0; step < 40; ++step) {
      ParamPatch patch;
      const int n = 1 + static_cast<int>(rng() % 3);
      for (int i = 0; i < n; ++i) {
        const auto& t = c.tunables[rng() % c.tunables.size()];
        std::uniform_real_distribution<double> u(std::log(t.bounds.min > 0 ? t.bounds.min : 1e-3),
                                                 std::log(t.bounds.max));
        double v = std::exp(u(rng));
        if (t.param == ParamKind::DC)
          v = std::uniform_real_distribution<double>(t.bounds.min, t.bounds.max)(rng);
        patch.assignments[{t.key, std::string(to_string(t.param))}] = v;
      }
      doc = apply_patch(doc, patch, c.netlist, c.tunables);
      REQUIRE(validate_constraints(doc, c.netlist, c.tunables).empty());
      for (const auto& t : c.tunables) {
        const auto key = t.param == ParamKind::W ? "w" : t.param == ParamKind::L ? "l" : t.param == ParamKind::DC ? "dc" : "value";
        const double first = doc.at(t.members.front()).param(key)->magnitude;
        for (const auto& m : t.members)
          CHECK(doc.at(m).param(key)->magnitude == first);
        CHECK(t.bounds.contains(first));
      }
      for (const auto& e : c.netlist.elements()) {
        if (e.kind() != ElementKind::VoltageSource || std::find(c.policy.bias_sources.begin(), c.policy.bias_sources.end(), e.name) != c.policy.bias_sources.end())
          continue;
        CHECK(doc.at(e.name).param("dc")->magnitude == e.param("dc")->magnitude);
      }
      const auto again = parse_netlist(serialize_netlist(doc));
      CHECK(structurally_equal(doc, again));
    }
  }
}

TEST_CASE("policy JSON round trip") {
  const auto p = small_policy();
  const auto q = policy_from_json(policy_to_json(p));
  CHECK(q.groups.size() == 2);
  CHECK(q.bias_sources == p.bias_sources);
  CHECK(q.value_bounds.at("rl").max == doctest::Approx(1e6));
  CHECK_THROWS_AS(policy_from_json(nlohmann::json::parse(R"({"bounds":{"W":[1]}})")), ConfigError);
}
