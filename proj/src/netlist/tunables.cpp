// SPDX-License-Identifier: Apache-2.0
#include "amsizer/netlist.hpp"

#include <algorithm>
#include <cmath>
#include <cctype>
#include <optional>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace amsizer {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string_view param_key_in_card(ParamKind kind) {
  switch (kind) {
  case ParamKind::W: return "w";
  case ParamKind::L: return "l";
  case ParamKind::DC: return "dc";
  case ParamKind::Value: return "value";
  }
  return "";
}

bool is_source(ElementKind k) { return k == ElementKind::VoltageSource || k == ElementKind::CurrentSource; }

double bound_value(const nlohmann::json& j) {
  if (j.is_number())
    return j.get<double>();
  if (j.is_string())
    if (auto v = parse_spice_number(j.get<std::string>()))
      return *v;
  throw ConfigError(fmt::format("bound {} is not a number", j.dump()));
}

Bounds bounds_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2)
    throw ConfigError(fmt::format("bounds must be [min, max], got {}", j.dump()));
  return {bound_value(j.at(0)), bound_value(j.at(1))};
}

} // namespace

std::string_view to_string(ParamKind kind) {
  switch (kind) {
  case ParamKind::W: return "W";
  case ParamKind::L: return "L";
  case ParamKind::DC: return "DC";
  case ParamKind::Value: return "VALUE";
  }
  return "";
}

std::optional<ParamKind> parse_param_kind(std::string_view text) {
  const auto t = lower(text);
  if (t == "w")
    return ParamKind::W;
  if (t == "l")
    return ParamKind::L;
  if (t == "dc")
    return ParamKind::DC;
  if (t == "value")
    return ParamKind::Value;
  return std::nullopt;
}

std::string to_string(const ParamKey& key) { return fmt::format("{}.{}", key.target, key.param); }

TunablePolicy policy_from_json(const nlohmann::json& j) {
  TunablePolicy p;
  if (j.contains("groups")) {
    for (const auto& g : j.at("groups")) {
      SymmetryGroup sg;
      sg.id = lower(g.at("id").get<std::string>());
      for (const auto& m : g.at("members"))
        sg.members.push_back(lower(m.get<std::string>()));
      p.groups.push_back(std::move(sg));
    }
  }
  auto names = [&](const char* key, std::vector<std::string>& out) {
    if (j.contains(key))
      for (const auto& n : j.at(key))
        out.push_back(lower(n.get<std::string>()));
  };
  names("bias_sources", p.bias_sources);
  names("passives", p.passives);
  names("supply_sources", p.supply_sources);
  if (j.contains("bounds")) {
    const auto& b = j.at("bounds");
    if (b.contains("W"))
      p.width = bounds_from_json(b.at("W"));
    if (b.contains("L"))
      p.length = bounds_from_json(b.at("L"));
    if (b.contains("DC"))
      p.bias = bounds_from_json(b.at("DC"));
    if (b.contains("VALUE"))
      for (const auto& [name, v] : b.at("VALUE").items())
        p.value_bounds[lower(name)] = bounds_from_json(v);
  }
  return p;
}

nlohmann::json policy_to_json(const TunablePolicy& p) {
  nlohmann::json j;
  j["groups"] = nlohmann::json::array();
  for (const auto& g : p.groups)
    j["groups"].push_back({{"id", g.id}, {"members", g.members}});
  j["bias_sources"] = p.bias_sources;
  j["passives"] = p.passives;
  j["supply_sources"] = p.supply_sources;
  j["bounds"] = {{"W", {p.width.min, p.width.max}},
                 {"L", {p.length.min, p.length.max}},
                 {"DC", {p.bias.min, p.bias.max}}};
  for (const auto& [name, b] : p.value_bounds)
    j["bounds"]["VALUE"][name] = {b.min, b.max};
  return j;
}

std::vector<TunableParam> extract_tunables(const NetlistDoc& doc, const TunablePolicy& policy) {
  std::vector<TunableParam> out;
  std::set<std::string> grouped;

  auto make = [&](const std::string& key, ParamKind kind, const std::vector<std::string>& members,
                  std::optional<std::string> group, Bounds bounds) {
    const auto& first = doc.at(members.front());
    const auto* v = first.param(param_key_in_card(kind));
    if (v == nullptr)
      throw ConfigError(fmt::format("element '{}' has no {} value to tune", first.name, to_string(kind)));
    if (bounds.min < 0.0 || bounds.min > bounds.max || (kind != ParamKind::DC && bounds.min <= 0.0))
      throw ConfigError(fmt::format("invalid bounds [{}, {}] for {}", bounds.min, bounds.max, key));
    if (!bounds.contains(v->magnitude))
      throw OutOfBounds(fmt::format("{}.{} = {} lies outside [{}, {}]", key, to_string(kind), v->magnitude,
                                    bounds.min, bounds.max));
    TunableParam t;
    t.key = key;
    t.param = kind;
    t.value = *v;
    t.bounds = bounds;
    t.group_id = std::move(group);
    t.members = members;
    out.push_back(std::move(t));
  };

  for (const auto& g : policy.groups) {
    if (g.members.empty())
      throw ConfigError(fmt::format("group '{}' has no members", g.id));
    for (const auto& m : g.members) {
      const auto* e = doc.find(m);
      if (e == nullptr)
        throw UnknownElement(fmt::format("group '{}' references unknown element '{}'", g.id, m));
      if (e->kind() != ElementKind::Mosfet)
        throw ConfigError(fmt::format("group '{}' member '{}' is not a MOSFET", g.id, m));
      if (!grouped.insert(e->name).second)
        throw ConfigError(fmt::format("element '{}' belongs to more than one group", m));
    }
    make(g.id, ParamKind::W, g.members, g.id, policy.width);
    make(g.id, ParamKind::L, g.members, g.id, policy.length);
  }
  for (const auto& e : doc.elements()) {
    if (e.kind() != ElementKind::Mosfet || grouped.contains(e.name))
      continue;
    make(e.name, ParamKind::W, {e.name}, std::nullopt, policy.width);
    make(e.name, ParamKind::L, {e.name}, std::nullopt, policy.length);
  }
  for (const auto& name : policy.bias_sources) {
    const auto* e = doc.find(name);
    if (e == nullptr)
      throw UnknownElement(fmt::format("bias source '{}' not found", name));
    if (e->kind() != ElementKind::VoltageSource)
      throw ConfigError(fmt::format("bias source '{}' is not a voltage source", name));
    if (std::find(policy.supply_sources.begin(), policy.supply_sources.end(), e->name) !=
        policy.supply_sources.end())
      throw ConfigError(fmt::format("'{}' cannot be both a supply and a bias source", name));
    make(e->name, ParamKind::DC, {e->name}, std::nullopt, policy.bias);
  }
  for (const auto& name : policy.passives) {
    const auto* e = doc.find(name);
    if (e == nullptr)
      throw UnknownElement(fmt::format("tunable passive '{}' not found", name));
    auto it = policy.value_bounds.find(e->name);
    if (it == policy.value_bounds.end())
      throw ConfigError(fmt::format("tunable passive '{}' needs VALUE bounds", name));
    make(e->name, ParamKind::Value, {e->name}, std::nullopt, it->second);
  }
  for (const auto& name : policy.supply_sources)
    if (doc.find(name) == nullptr)
      throw UnknownElement(fmt::format("supply source '{}' not found", name));
  return out;
}

const TunableParam* find_tunable(std::span<const TunableParam> tunables, const ParamKey& key) {
  const auto kind = parse_param_kind(key.param);
  if (!kind)
    return nullptr;
  const auto target = lower(key.target);
  for (const auto& t : tunables)
    if (t.param == *kind && t.key == target)
      return &t;
  // A member name addresses its whole group.
  for (const auto& t : tunables)
    if (t.param == *kind && std::find(t.members.begin(), t.members.end(), target) != t.members.end())
      return &t;
  return nullptr;
}

std::map<ParamKey, double> current_values(const NetlistDoc& doc, std::span<const TunableParam> tunables) {
  std::map<ParamKey, double> out;
  for (const auto& t : tunables) {
    const auto* v = doc.at(t.members.front()).param(param_key_in_card(t.param));
    out[{t.key, std::string(to_string(t.param))}] = v ? v->magnitude : t.value.magnitude;
  }
  return out;
}

NetlistDoc apply_patch(const NetlistDoc& doc, const ParamPatch& patch, const NetlistDoc& baseline,
                       std::span<const TunableParam> tunables) {
  NetlistDoc out = doc;
  for (const auto& [key, value] : patch.assignments) {
    const auto param = lower(key.param);
    if (param == "model" || param == "nodes")
      throw ConstraintViolation(fmt::format("{}: model references and connectivity are fixed", to_string(key)));
    const auto* t = find_tunable(tunables, key);
    if (t == nullptr) {
      const auto* e = doc.find(key.target);
      if (e != nullptr && is_source(e->kind()))
        throw ConstraintViolation(fmt::format("{}: source '{}' is not a tunable bias; supply values are fixed",
                                              to_string(key), e->name));
      if (e != nullptr && e->kind() == ElementKind::Mosfet && param != "w" && param != "l")
        throw ConstraintViolation(fmt::format("{}: only W and L of transistors may change", to_string(key)));
      throw UnknownTunable(fmt::format("{} is not a declared tunable", to_string(key)));
    }
    if (!std::isfinite(value) || !t->bounds.contains(value))
      throw OutOfBounds(fmt::format("{} = {} outside [{}, {}]", to_string(key), value, t->bounds.min,
                                    t->bounds.max));
    const auto card_key = param_key_in_card(t->param);
    for (const auto& member : t->members) {
      ElementCard card = out.at(member);
      const PhysicalValue* old = card.param(card_key);
      card.set_param(card_key, old ? old->with_magnitude(value) : t->value.with_magnitude(value));
      out = out.with_element(card);
    }
  }
  if (auto issues = validate_constraints(out, baseline, tunables); !issues.empty())
    throw ConstraintViolation(fmt::format("{}: {}", issues.front().element, issues.front().what));
  return out;
}

std::vector<ConstraintIssue> validate_constraints(const NetlistDoc& doc, const NetlistDoc& baseline,
                                                  std::span<const TunableParam> tunables) {
  std::vector<ConstraintIssue> issues;
  std::set<std::string> biased;
  for (const auto& t : tunables)
    if (t.param == ParamKind::DC)
      biased.insert(t.members.begin(), t.members.end());

  for (const auto& base : baseline.elements()) {
    const auto* cur = doc.find(base.name);
    if (cur == nullptr) {
      issues.push_back({base.name, "element removed"});
      continue;
    }
    if (cur->model != base.model)
      issues.push_back({base.name, fmt::format("model reference changed from '{}' to '{}'",
                                               base.model.value_or(""), cur->model.value_or(""))});
    if (cur->nodes != base.nodes)
      issues.push_back({base.name, "connectivity changed"});
    if (is_source(base.kind())) {
      ElementCard a = base;
      ElementCard b = *cur;
      if (biased.contains(base.name)) {
        std::erase_if(a.params, [](const auto& p) { return p.first == "dc"; });
        std::erase_if(b.params, [](const auto& p) { return p.first == "dc"; });
      }
      a.comment.clear();
      b.comment.clear();
      if (serialize_card(a) != serialize_card(b))
        issues.push_back({base.name, "supply/stimulus source value changed"});
    }
  }
  for (const auto& e : doc.elements())
    if (baseline.find(e.name) == nullptr)
      issues.push_back({e.name, "element added"});

  for (const auto& t : tunables) {
    const auto card_key = param_key_in_card(t.param);
    std::optional<double> first;
    for (const auto& m : t.members) {
      const auto* e = doc.find(m);
      const auto* v = e ? e->param(card_key) : nullptr;
      if (v == nullptr)
        continue;
      if (!t.bounds.contains(v->magnitude))
        issues.push_back({m, fmt::format("{} = {} outside [{}, {}]", to_string(t.param), v->magnitude,
                                         t.bounds.min, t.bounds.max)});
      if (!first)
        first = v->magnitude;
      else if (v->magnitude != *first)
        issues.push_back({m, fmt::format("{} differs from the rest of group '{}'", to_string(t.param), t.key)});
    }
  }
  return issues;
}

} // namespace amsizer
