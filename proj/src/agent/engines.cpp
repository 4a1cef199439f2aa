// SPDX-License-Identifier: Apache-2.0
#include "amsizer/agent.hpp"
#include "amsizer/units.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "format.hpp"

namespace amsizer {

namespace {

ParamKey canonical(const TunableParam& t) { return {t.key, std::string(to_string(t.param))}; }

/// Relative margin of one metric; -inf when it was not measured.
double relative_margin(const IterationRecord& r, MetricKind kind) {
  const auto it = r.check.per_metric.find(kind);
  if (it == r.check.per_metric.end())
    return -std::numeric_limits<double>::infinity();
  const double scale = std::max(std::abs(it->second.relaxed_bound), 1e-30);
  return it->second.margin / scale;
}

} // namespace

std::vector<std::string> clamp_patch(ParamPatch& patch, std::span<const TunableParam> tunables) {
  std::vector<std::string> notes;
  std::map<ParamKey, double> out;
  for (const auto& [key, value] : patch.assignments) {
    const auto* t = find_tunable(tunables, key);
    if (!t)
      throw UnknownTunable(fmt::format("{} is not a declared tunable", to_string(key)));
    const auto k = canonical(*t);
    double v = value;
    if (!t->bounds.contains(v)) {
      v = t->bounds.clamp(v);
      notes.push_back(fmt::format("{} = {} clamped to {}", to_string(k), format_param(k.param, value),
                                  format_param(k.param, v)));
    }
    out[k] = v;
  }
  patch.assignments = std::move(out);
  return notes;
}

ToolSchema apply_sizing_tool() {
  ToolSchema t;
  t.name = "apply_sizing";
  t.description = "Set new values for tunable parameters and explain why. Values are SI numbers (metres, volts) or "
                  "SPICE numbers such as \"12u\".";
  t.parameters = nlohmann::json::parse(R"({
    "type": "object",
    "properties": {
      "rationale": {"type": "string", "description": "Reasoning behind the changes"},
      "changes": {
        "type": "array",
        "items": {
          "type": "object",
          "properties": {
            "name": {"type": "string", "description": "Group id or element name"},
            "param": {"type": "string", "enum": ["W", "L", "DC", "VALUE"]},
            "value": {"type": ["number", "string"]}
          },
          "required": ["name", "param", "value"],
          "additionalProperties": false
        }
      }
    },
    "required": ["rationale", "changes"],
    "additionalProperties": false
  })");
  return t;
}

ParamPatch parse_sizing_arguments(const std::string& arguments, std::span<const TunableParam> tunables) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(arguments);
  } catch (const nlohmann::json::exception& e) {
    throw MalformedResponse(fmt::format("apply_sizing arguments are not JSON: {}", e.what()));
  }
  if (!j.is_object())
    throw MalformedResponse("apply_sizing arguments must be an object");
  for (const auto& [k, _] : j.items())
    if (k != "rationale" && k != "changes")
      throw MalformedResponse(fmt::format("unexpected field '{}'", k));
  if (!j.contains("rationale") || !j["rationale"].is_string() || j["rationale"].get<std::string>().empty())
    throw MalformedResponse("rationale must be a non-empty string");
  if (!j.contains("changes") || !j["changes"].is_array())
    throw MalformedResponse("changes must be an array");

  ParamPatch patch;
  patch.rationale = j["rationale"].get<std::string>();
  for (const auto& c : j["changes"]) {
    if (!c.is_object())
      throw MalformedResponse("each change must be an object");
    for (const auto& [k, _] : c.items())
      if (k != "name" && k != "param" && k != "value")
        throw MalformedResponse(fmt::format("unexpected field '{}' in a change", k));
    if (!c.contains("name") || !c["name"].is_string() || !c.contains("param") || !c["param"].is_string() ||
        !c.contains("value"))
      throw MalformedResponse("each change needs string name, string param and a value");
    const ParamKey key{c["name"].get<std::string>(), c["param"].get<std::string>()};
    double value = 0.0;
    if (c["value"].is_number()) {
      value = c["value"].get<double>();
    } else if (c["value"].is_string()) {
      const auto parsed = parse_spice_number(c["value"].get<std::string>());
      if (!parsed)
        throw MalformedResponse(fmt::format("{}: '{}' is not a number", to_string(key), c["value"].get<std::string>()));
      value = *parsed;
    } else {
      throw MalformedResponse(fmt::format("{}: value must be a number", to_string(key)));
    }
    if (!std::isfinite(value))
      throw MalformedResponse(fmt::format("{}: value is not finite", to_string(key)));
    const auto* t = find_tunable(tunables, key);
    if (!t)
      throw UnknownTunable(fmt::format("{} is not a declared tunable", to_string(key)));
    if (!patch.assignments.emplace(canonical(*t), value).second)
      throw MalformedResponse(fmt::format("{} is set twice", to_string(canonical(*t))));
  }
  return patch;
}

LlmEngine::LlmEngine(std::shared_ptr<ChatClient> client, std::string model_label, bool requires_network)
    : client_(std::move(client)), label_(std::move(model_label)), network_(requires_network) {
  if (!client_)
    throw ConfigError("LLM engine needs a chat client");
}

EngineCapabilities LlmEngine::capabilities() const { return {"llm:" + label_, false, network_}; }

ParamPatch LlmEngine::propose(const PromptBundle& bundle, const ContextHistory&, std::span<const TunableParam> tunables) {
  if (tunables.empty())
    throw ConfigError("nothing to tune");
  std::vector<ChatMessage> messages{{Role::System, bundle.system, {}, {}}, {Role::User, bundle.user_message(), {}, {}}};
  const std::vector<ToolSchema> tools{apply_sizing_tool()};

  for (int round = 0; round < 2; ++round) {
    Completion c;
    try {
      c = client_->complete(messages, tools);
    } catch (const LlmError& e) {
      throw EngineFailure(fmt::format("{}: {}", label_, e.what()));
    }
    usage_.prompt_tokens += c.usage.prompt_tokens;
    usage_.completion_tokens += c.usage.completion_tokens;
    usage_.retries += c.usage.retries;
    usage_.retry_wait += c.usage.retry_wait;

    std::string problem;
    try {
      const ToolCall* call = nullptr;
      for (const auto& tc : c.message.tool_calls)
        if (tc.name == "apply_sizing") {
          if (call)
            throw MalformedResponse("apply_sizing was called more than once");
          call = &tc;
        }
      if (!call)
        throw MalformedResponse("the reply contains no apply_sizing call");
      auto patch = parse_sizing_arguments(call->arguments, tunables);
      const auto notes = clamp_patch(patch, tunables);
      for (const auto& n : notes)
        patch.rationale += fmt::format("\n[clamped] {}", n);
      return patch;
    } catch (const MalformedResponse& e) {
      problem = e.what();
    } catch (const UnknownTunable& e) {
      problem = e.what();
    }
    if (round == 1)
      throw EngineFailure(fmt::format("{}: unusable reply after repair: {}", label_, problem));
    const auto repair = fmt::format("The reply could not be used: {}. Call apply_sizing exactly once, using only the "
                                    "listed tunable names and numeric values.",
                                    problem);
    messages.push_back(c.message);
    if (c.message.tool_calls.empty())
      messages.push_back({Role::User, repair, {}, {}});
    else
      for (const auto& tc : c.message.tool_calls)
        messages.push_back({Role::Tool, repair, {}, tc.id});
  }
  throw EngineFailure("unreachable");
}

SensitivityTable sensitivity_from_json(const nlohmann::json& j) {
  SensitivityTable table;
  try {
    for (const auto& [name, entries] : j.items()) {
      const auto kind = parse_metric_kind(name);
      if (!kind)
        throw ConfigError(fmt::format("unknown metric '{}' in sensitivity table", name));
      auto& list = table[*kind];
      for (const auto& e : entries) {
        SensitivityEntry s;
        s.key = {e.at("target").get<std::string>(), e.at("param").get<std::string>()};
        s.sign = e.value("sign", 1) >= 0 ? 1 : -1;
        s.weight = e.value("weight", 1.0);
        list.push_back(s);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("malformed sensitivity table: {}", e.what()));
  }
  return table;
}

double record_score(const IterationRecord& r, const TargetGroup& group) {
  double score = 0.0;
  for (const auto& t : group.targets) {
    const double m = relative_margin(r, t.kind);
    if (m >= 0.0)
      score += 1.0;
    else
      score += 1e-3 * std::max(m, -100.0);
  }
  return score;
}

BaselineEngine::BaselineEngine(std::uint64_t seed, BaselineOptions opts) : seed_(seed), opts_(std::move(opts)) {
  if (!(opts_.up > 1.0) || !(opts_.down > 0.0 && opts_.down < 1.0) || !(opts_.dc_step > 0.0))
    throw ConfigError("baseline steps need up > 1, 0 < down < 1 and dc_step > 0");
}

EngineCapabilities BaselineEngine::capabilities() const { return {fmt::format("baseline:{}", seed_), true, false}; }

ParamPatch BaselineEngine::propose(const PromptBundle&, const ContextHistory& history,
                                   std::span<const TunableParam> tunables) {
  if (tunables.empty())
    throw ConfigError("nothing to tune");
  ParamPatch patch;
  if (history.records.empty()) {
    patch.rationale = "measure the baseline";
    return patch;
  }
  const auto& recs = history.records;
  const auto& last = recs.back();
  const auto& group = history.group;
  if (last.check.overall_pass) {
    patch.rationale = "no failing metrics";
    pending_.reset();
    return patch;
  }

  if (pending_) {
    const auto k = std::pair{pending_->metric, pending_->key};
    const double gained = relative_margin(last, pending_->metric) - pending_->base_margin;
    if (gained > 0.0) {
      misses_[k] = 0;
      if (gained < opts_.min_progress * std::abs(pending_->base_margin))
        stalls_[k] += 1;
      else
        stalls_[k] = 0;
    } else {
      misses_[k] += 1;
      direction_[k] = -direction_[k];
    }
    pending_.reset();
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i < recs.size(); ++i)
    if (record_score(recs[i], group) > record_score(recs[best], group))
      best = i;
  const bool revert = opts_.revert_on_regression && record_score(last, group) < record_score(recs[best], group);
  const auto& base = revert ? recs[best] : last;

  MetricKind metric = group.targets.front().kind;
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& t : group.targets) {
    const double m = relative_margin(base, t.kind);
    if (m < 0.0 && m < worst) {
      worst = m;
      metric = t.kind;
    }
  }

  std::vector<SensitivityEntry> candidates;
  if (auto it = opts_.sensitivity.find(metric); it != opts_.sensitivity.end())
    for (const auto& e : it->second)
      if (const auto* t = find_tunable(tunables, e.key))
        candidates.push_back({canonical(*t), e.sign, e.weight});
  if (candidates.empty())
    for (const auto& t : tunables)
      candidates.push_back({canonical(t), 1, 1.0});
  auto stalls = [&](const SensitivityEntry& e) {
    const auto it = stalls_.find({metric, e.key});
    return it == stalls_.end() ? 0 : it->second;
  };
  std::stable_sort(candidates.begin(), candidates.end(), [&](const auto& a, const auto& b) {
    return stalls(a) != stalls(b) ? stalls(a) < stalls(b) : a.weight > b.weight;
  });

  std::mt19937_64 rng(seed_ ^ (0x9e3779b97f4a7c15ULL * (recs.size() + 1)));
  auto step = [&](const SensitivityEntry& e, int dir) -> std::optional<double> {
    const auto* t = find_tunable(tunables, e.key);
    const auto it = base.values.find(e.key);
    const double cur = it != base.values.end() ? it->second : t->value.magnitude;
    double next = t->param == ParamKind::DC ? cur + dir * opts_.dc_step : cur * (dir > 0 ? opts_.up : opts_.down);
    next = t->bounds.clamp(next);
    if (std::abs(next - cur) <= 1e-12 * std::max(std::abs(cur), 1e-30))
      return std::nullopt;
    return next;
  };

  std::optional<std::pair<SensitivityEntry, double>> choice;
  for (int pass = 0; pass < 2 && !choice; ++pass) {
    for (const auto& e : candidates) {
      const auto k = std::pair{metric, e.key};
      if (!direction_.contains(k))
        direction_[k] = e.sign;
      if (misses_[k] >= 2)
        continue;
      if (auto v = step(e, direction_[k])) {
        choice = {e, *v};
        break;
      }
      direction_[k] = -direction_[k];
      misses_[k] += 1;
      if (auto v = step(e, direction_[k])) {
        choice = {e, *v};
        break;
      }
    }
    if (!choice)
      for (const auto& e : candidates)
        misses_[{metric, e.key}] = 0;
  }
  if (!choice) {
    // every candidate is pinned at its bounds: try a random one in a random direction
    const auto& e = candidates[rng() % candidates.size()];
    const int dir = (rng() & 1U) ? 1 : -1;
    const auto v = step(e, dir) ? step(e, dir) : step(e, -dir);
    if (!v) {
      patch.rationale = fmt::format("{} fails but every tunable tied to it sits at a bound", metric_label(metric));
      return patch;
    }
    direction_[{metric, e.key}] = dir;
    choice = {e, *v};
  }

  const auto& [entry, value] = *choice;
  for (const auto& [k, v] : base.values) {
    const auto cur = last.values.find(k);
    if (cur == last.values.end() || cur->second != v)
      patch.assignments[k] = v;
  }
  patch.assignments[entry.key] = value;

  const double old = base.values.contains(entry.key) ? base.values.at(entry.key) : value;
  const auto* t = find_tunable(tunables, entry.key);
  const std::string how = t->param == ParamKind::DC ? fmt::format("{:+.3g} V", value - old)
                                                    : fmt::format("x{:.3g}", value / old);
  patch.rationale = fmt::format("{} has the worst relative margin ({:+.3g}). ", metric_label(metric), worst);
  if (revert)
    patch.rationale += fmt::format("Reverting to iteration {}, the best so far. ", recs[best].index);
  patch.rationale += fmt::format("Step {} {} ({} -> {}).", to_string(entry.key), how, format_param(entry.key.param, old),
                                 format_param(entry.key.param, value));
  pending_ = Step{metric, entry.key, relative_margin(base, metric), base.index};
  return patch;
}

} // namespace amsizer
