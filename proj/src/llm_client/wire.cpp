// SPDX-License-Identifier: Apache-2.0
#include "amsizer/llm_client.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include <fmt/format.h>

namespace amsizer {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

nlohmann::json parse_arguments(const ToolCall& call) {
  if (call.arguments.empty())
    return nlohmann::json::object();
  try {
    return nlohmann::json::parse(call.arguments);
  } catch (const nlohmann::json::exception&) {
    // malformed arguments pass through under _raw
    return nlohmann::json{{"_raw", call.arguments}};
  }
}

nlohmann::json encode_openai(const ProviderConfig& cfg, const std::vector<ChatMessage>& messages,
                             const std::vector<ToolSchema>& tools) {
  nlohmann::json body{{"model", cfg.model_id}, {"temperature", cfg.temperature}, {"max_tokens", cfg.max_tokens}};
  auto& msgs = body["messages"] = nlohmann::json::array();
  for (const auto& m : messages) {
    nlohmann::json j{{"role", to_string(m.role)}};
    if (m.role == Role::Assistant && !m.tool_calls.empty()) {
      j["content"] = m.content.empty() ? nlohmann::json(nullptr) : nlohmann::json(m.content);
      auto& calls = j["tool_calls"] = nlohmann::json::array();
      for (const auto& c : m.tool_calls)
        calls.push_back(
            {{"id", c.id}, {"type", "function"}, {"function", {{"name", c.name}, {"arguments", c.arguments}}}});
    } else {
      j["content"] = m.content;
    }
    if (m.role == Role::Tool)
      j["tool_call_id"] = m.tool_call_id;
    msgs.push_back(std::move(j));
  }
  if (!tools.empty()) {
    auto& ts = body["tools"] = nlohmann::json::array();
    for (const auto& t : tools)
      ts.push_back({{"type", "function"},
                    {"function", {{"name", t.name}, {"description", t.description}, {"parameters", t.parameters}}}});
  }
  return body;
}

nlohmann::json encode_anthropic(const ProviderConfig& cfg, const std::vector<ChatMessage>& messages,
                                const std::vector<ToolSchema>& tools) {
  nlohmann::json body{{"model", cfg.model_id}, {"temperature", cfg.temperature}, {"max_tokens", cfg.max_tokens}};
  std::string system;
  auto msgs = nlohmann::json::array();
  auto push = [&](const std::string& role, nlohmann::json block) {
    // merge consecutive turns of one role
    if (!msgs.empty() && msgs.back()["role"] == role)
      msgs.back()["content"].push_back(std::move(block));
    else
      msgs.push_back({{"role", role}, {"content", nlohmann::json::array({std::move(block)})}});
  };
  for (const auto& m : messages) {
    switch (m.role) {
    case Role::System:
      system += (system.empty() ? "" : "\n\n") + m.content;
      break;
    case Role::User:
      push("user", {{"type", "text"}, {"text", m.content}});
      break;
    case Role::Tool:
      push("user", {{"type", "tool_result"}, {"tool_use_id", m.tool_call_id}, {"content", m.content}});
      break;
    case Role::Assistant:
      if (!m.content.empty())
        push("assistant", {{"type", "text"}, {"text", m.content}});
      for (const auto& c : m.tool_calls)
        push("assistant", {{"type", "tool_use"}, {"id", c.id}, {"name", c.name}, {"input", parse_arguments(c)}});
      break;
    }
  }
  if (!system.empty())
    body["system"] = system;
  body["messages"] = std::move(msgs);
  if (!tools.empty()) {
    auto& ts = body["tools"] = nlohmann::json::array();
    for (const auto& t : tools)
      ts.push_back({{"name", t.name}, {"description", t.description}, {"input_schema", t.parameters}});
  }
  return body;
}

} // namespace

std::string_view to_string(Role r) {
  switch (r) {
  case Role::System: return "system";
  case Role::User: return "user";
  case Role::Assistant: return "assistant";
  case Role::Tool: return "tool";
  }
  return "";
}

std::optional<Role> parse_role(std::string_view text) {
  for (auto r : {Role::System, Role::User, Role::Assistant, Role::Tool})
    if (to_string(r) == lower(text))
      return r;
  return std::nullopt;
}

std::string_view to_string(Dialect d) { return d == Dialect::OpenAI ? "openai" : "anthropic"; }

std::optional<Dialect> parse_dialect(std::string_view text) {
  const auto l = lower(text);
  if (l == "openai")
    return Dialect::OpenAI;
  if (l == "anthropic")
    return Dialect::Anthropic;
  return std::nullopt;
}

void validate_conversation(const std::vector<ChatMessage>& messages, const std::vector<ToolSchema>& tools) {
  if (messages.empty())
    throw ConfigError("a chat request needs at least one message");
  std::set<std::string> names;
  for (const auto& t : tools)
    if (!names.insert(t.name).second)
      throw ConfigError(fmt::format("tool '{}' declared twice", t.name));
  std::set<std::string> open_calls;
  for (const auto& m : messages) {
    if (m.role == Role::Assistant)
      for (const auto& c : m.tool_calls)
        open_calls.insert(c.id);
    if (m.role == Role::Tool && !open_calls.contains(m.tool_call_id))
      throw ConfigError(fmt::format("tool message answers unknown call '{}'", m.tool_call_id));
  }
}

nlohmann::json message_to_json(const ChatMessage& m) {
  nlohmann::json j{{"role", to_string(m.role)}, {"content", m.content}};
  if (!m.tool_calls.empty()) {
    auto& calls = j["tool_calls"] = nlohmann::json::array();
    for (const auto& c : m.tool_calls)
      calls.push_back({{"id", c.id}, {"name", c.name}, {"arguments", c.arguments}});
  }
  if (!m.tool_call_id.empty())
    j["tool_call_id"] = m.tool_call_id;
  return j;
}

ChatMessage message_from_json(const nlohmann::json& j) {
  ChatMessage m;
  const auto role = parse_role(j.at("role").get<std::string>());
  if (!role)
    throw MalformedResponse(fmt::format("unknown role in {}", j.dump()));
  m.role = *role;
  m.content = j.value("content", std::string{});
  if (j.contains("tool_calls"))
    for (const auto& c : j.at("tool_calls"))
      m.tool_calls.push_back({c.at("id").get<std::string>(), c.at("name").get<std::string>(),
                              c.at("arguments").get<std::string>()});
  m.tool_call_id = j.value("tool_call_id", std::string{});
  return m;
}

nlohmann::json encode_request(const ProviderConfig& cfg, const std::vector<ChatMessage>& messages,
                              const std::vector<ToolSchema>& tools) {
  return cfg.dialect == Dialect::OpenAI ? encode_openai(cfg, messages, tools) : encode_anthropic(cfg, messages, tools);
}

Completion decode_response(Dialect dialect, const nlohmann::json& body) {
  Completion out;
  out.message.role = Role::Assistant;
  try {
    if (dialect == Dialect::OpenAI) {
      const auto& msg = body.at("choices").at(0).at("message");
      if (msg.contains("content") && msg["content"].is_string())
        out.message.content = msg["content"].get<std::string>();
      if (msg.contains("tool_calls") && msg["tool_calls"].is_array())
        for (const auto& c : msg["tool_calls"]) {
          const auto& fn = c.at("function");
          const auto& args = fn.at("arguments");
          out.message.tool_calls.push_back({c.at("id").get<std::string>(), fn.at("name").get<std::string>(),
                                            args.is_string() ? args.get<std::string>() : args.dump()});
        }
      if (body.contains("usage")) {
        out.usage.prompt_tokens = body["usage"].value("prompt_tokens", 0L);
        out.usage.completion_tokens = body["usage"].value("completion_tokens", 0L);
      }
    } else {
      for (const auto& block : body.at("content")) {
        const auto type = block.at("type").get<std::string>();
        if (type == "text")
          out.message.content += block.at("text").get<std::string>();
        else if (type == "tool_use")
          out.message.tool_calls.push_back({block.at("id").get<std::string>(), block.at("name").get<std::string>(),
                                            block.at("input").dump()});
      }
      if (body.contains("usage")) {
        out.usage.prompt_tokens = body["usage"].value("input_tokens", 0L);
        out.usage.completion_tokens = body["usage"].value("output_tokens", 0L);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw MalformedResponse(fmt::format("unexpected {} response shape: {}", to_string(dialect), e.what()));
  }
  return out;
}

} // namespace amsizer
