// SPDX-License-Identifier: Apache-2.0
#include "amsizer/llm_client.hpp"

#include <doctest.h>

#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>

using namespace amsizer;

namespace {

// Serves canned responses and remembers what it was sent.
class FakeTransport final : public HttpTransport {
public:
  std::deque<HttpResponse> replies;
  std::vector<std::string> bodies;
  std::vector<std::map<std::string, std::string>> headers;

  HttpResponse post(const std::string&, const std::map<std::string, std::string>& h, const std::string& body,
                    double) override {
    bodies.push_back(body);
    headers.push_back(h);
    if (replies.empty())
      return {500, "no reply queued", {}};
    auto r = replies.front();
    replies.pop_front();
    return r;
  }
};

class CountingClient final : public ChatClient {
public:
  int calls = 0;
  Completion complete(const std::vector<ChatMessage>& messages, const std::vector<ToolSchema>&) override {
    ++calls;
    Completion c;
    c.message.role = Role::Assistant;
    c.message.content = "echo " + messages.back().content;
    c.message.tool_calls.push_back({"call_" + std::to_string(calls), "apply_sizing", R"({"x":1})"});
    c.usage.prompt_tokens = 10;
    return c;
  }
};

std::string openai_ok(const std::string& text) {
  return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", text}}}}}},
                        {"usage", {{"prompt_tokens", 12}, {"completion_tokens", 3}}}}
      .dump();
}

ProviderConfig test_config() {
  ProviderConfig cfg;
  cfg.endpoint = "http://127.0.0.1:1/v1/chat/completions";
  cfg.api_key_env = "AMSIZER_TEST_KEY";
  cfg.rate_limit = 0.0;
  cfg.max_retries = 3;
  return cfg;
}

std::vector<ChatMessage> hello() { return {{Role::System, "be brief", {}, {}}, {Role::User, "hello", {}, {}}}; }

ToolSchema tool() {
  return {"apply_sizing", "set sizes", nlohmann::json{{"type", "object"}, {"properties", nlohmann::json::object()}}};
}

std::filesystem::path temp_file(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("amsizer-llm-" + name);
  std::filesystem::remove(p);
  return p;
}

} // namespace

TEST_CASE("openai wire format") {
  auto cfg = test_config();
  std::vector<ChatMessage> msgs = hello();
  msgs.push_back({Role::Assistant, "", {{"c1", "apply_sizing", R"({"a":1})"}}, {}});
  msgs.push_back({Role::Tool, "ok", {}, "c1"});
  const auto body = encode_request(cfg, msgs, {tool()});
  CHECK(body["model"] == cfg.model_id);
  CHECK(body["messages"].size() == 4);
  CHECK(body["messages"][0]["role"] == "system");
  CHECK(body["messages"][2]["content"].is_null());
  CHECK(body["messages"][2]["tool_calls"][0]["function"]["arguments"] == R"({"a":1})");
  CHECK(body["messages"][3]["tool_call_id"] == "c1");
  CHECK(body["tools"][0]["function"]["name"] == "apply_sizing");

  const auto reply = nlohmann::json::parse(R"({"choices":[{"message":{"role":"assistant","content":null,
    "tool_calls":[{"id":"t9","type":"function","function":{"name":"apply_sizing","arguments":"{\"g\":2}"}}]}}],
    "usage":{"prompt_tokens":5,"completion_tokens":7}})");
  const auto c = decode_response(Dialect::OpenAI, reply);
  CHECK(c.message.role == Role::Assistant);
  REQUIRE(c.message.tool_calls.size() == 1);
  CHECK(c.message.tool_calls[0].id == "t9");
  CHECK(c.message.tool_calls[0].arguments == R"({"g":2})");
  CHECK(c.usage.completion_tokens == 7);
  CHECK_THROWS_AS(decode_response(Dialect::OpenAI, nlohmann::json{{"nope", 1}}), MalformedResponse);
}

TEST_CASE("anthropic wire format") {
  auto cfg = test_config();
  cfg.dialect = Dialect::Anthropic;
  std::vector<ChatMessage> msgs = hello();
  msgs.push_back({Role::Assistant, "thinking", {{"c1", "apply_sizing", R"({"a":1})"}}, {}});
  msgs.push_back({Role::Tool, "ok", {}, "c1"});
  const auto body = encode_request(cfg, msgs, {tool()});
  CHECK(body["system"] == "be brief");
  REQUIRE(body["messages"].size() == 3);
  CHECK(body["messages"][1]["content"].size() == 2);
  CHECK(body["messages"][1]["content"][1]["input"]["a"] == 1);
  CHECK(body["messages"][2]["content"][0]["type"] == "tool_result");
  CHECK(body["tools"][0]["input_schema"]["type"] == "object");

  const auto reply = nlohmann::json::parse(R"({"content":[{"type":"text","text":"hi"},
    {"type":"tool_use","id":"tu1","name":"apply_sizing","input":{"g":2}}],"usage":{"input_tokens":4,"output_tokens":2}})");
  const auto c = decode_response(Dialect::Anthropic, reply);
  CHECK(c.message.content == "hi");
  CHECK(nlohmann::json::parse(c.message.tool_calls.at(0).arguments)["g"] == 2);
  CHECK(c.usage.prompt_tokens == 4);
}

TEST_CASE("conversations are checked before sending") {
  CHECK_THROWS_AS(validate_conversation({}, {}), ConfigError);
  CHECK_THROWS_AS(validate_conversation({{Role::Tool, "x", {}, "nope"}}, {}), ConfigError);
  CHECK_THROWS_AS(validate_conversation(hello(), {tool(), tool()}), ConfigError);
  CHECK_NOTHROW(validate_conversation(hello(), {tool()}));
}

TEST_CASE("messages round trip through JSON") {
  const ChatMessage m{Role::Assistant, "text", {{"id1", "f", "{}"}}, {}};
  CHECK(message_from_json(message_to_json(m)) == m);
  CHECK_THROWS_AS(message_from_json(nlohmann::json{{"role", "wizard"}}), MalformedResponse);
}

TEST_CASE("provider configs name the key variable, never the key") {
  const auto cfg = provider_from_json(nlohmann::json{{"dialect", "anthropic"}, {"model_id", "m"}});
  CHECK(cfg.dialect == Dialect::Anthropic);
  CHECK(provider_from_json(provider_to_json(cfg)).model_id == "m");
  CHECK_THROWS_AS(provider_from_json(nlohmann::json{{"api_key", "sk-123"}}), ConfigError);
  CHECK_THROWS_AS(provider_from_json(nlohmann::json{{"dialect", "smoke-signals"}}), ConfigError);
  CHECK_FALSE(provider_to_json(cfg).contains("api_key"));
}

TEST_CASE("exponential backoff with a cap and Retry-After") {
  ProviderConfig cfg;
  cfg.backoff_initial = 1.0;
  cfg.backoff_max = 30.0;
  CHECK(backoff_delay(cfg, 0, {}) == 1.0);
  CHECK(backoff_delay(cfg, 3, {}) == 8.0);
  CHECK(backoff_delay(cfg, 10, {}) == 30.0);
  CHECK(backoff_delay(cfg, 10, 2.5) == 2.5);
}

TEST_CASE("rate limiter spaces requests evenly") {
  RateLimiter lim(60.0);
  CHECK(lim.reserve() == 0.0);
  const double w = lim.reserve();
  CHECK(w > 0.9);
  CHECK(w <= 1.0);
  CHECK(RateLimiter::shared("k", 60.0) == RateLimiter::shared("k", 60.0));
}

TEST_CASE("provider client retries transient errors and fails fast on auth") {
  ::setenv("AMSIZER_TEST_KEY", "sk-secret-value", 1);
  auto transport = std::make_shared<FakeTransport>();
  std::vector<double> slept;
  ProviderClient client(test_config(), transport, [&](double s) { slept.push_back(s); });

  transport->replies = {{429, "slow down", {{"Retry-After", "2"}}}, {503, "busy", {}}, {200, openai_ok("hi"), {}}};
  const auto c = client.complete(hello(), {});
  CHECK(c.message.content == "hi");
  CHECK(c.usage.retries == 2);
  CHECK(slept == std::vector<double>{2.0, 2.0});
  CHECK(transport->headers.back().at("Authorization") == "Bearer sk-secret-value");
  CHECK(transport->bodies.back().find("sk-secret") == std::string::npos);

  transport->replies = {{401, "bad key sk-secret-value", {}}};
  try {
    (void)client.complete(hello(), {});
    FAIL("401 accepted");
  } catch (const AuthError& e) {
    CHECK(std::string(e.what()).find("sk-secret-value") == std::string::npos);
  }

  transport->replies = {{400, "bad request", {}}};
  CHECK_THROWS_AS(client.complete(hello(), {}), TransportError);

  transport->replies.assign(10, HttpResponse{429, "slow", {}});
  try {
    (void)client.complete(hello(), {});
    FAIL("endless 429 accepted");
  } catch (const RateLimited& e) {
    CHECK(e.attempts() == 4);
  }

  transport->replies = {{200, "<html>", {}}};
  CHECK_THROWS_AS(client.complete(hello(), {}), MalformedResponse);
  CHECK(client.total_usage().retries == 2);

  ::unsetenv("AMSIZER_TEST_KEY");
  CHECK_THROWS_AS(ProviderClient(test_config(), transport), AuthError);
}

TEST_CASE("secrets are scrubbed by variable name") {
  ::setenv("AMSIZER_TEST_SCRUB", "hunter2", 1);
  const auto s = scrub_secrets("key=hunter2 and hunter2", {"AMSIZER_TEST_SCRUB", "AMSIZER_UNSET_VAR"});
  CHECK(s.find("hunter2") == std::string::npos);
  ::unsetenv("AMSIZER_TEST_SCRUB");
}

TEST_CASE("request hashes ignore dialect and follow content") {
  const auto a = canonical_request(hello(), {tool()});
  CHECK(sha256_hex(a) == sha256_hex(canonical_request(hello(), {tool()})));
  auto other = hello();
  other[1].content = "hullo";
  CHECK(sha256_hex(a) != sha256_hex(canonical_request(other, {tool()})));
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("transcripts record and replay without the live client") {
  const auto path = temp_file("transcript.jsonl");
  auto inner = std::make_shared<CountingClient>();
  std::vector<Completion> live;
  {
    TranscriptClient rec(path, TranscriptMode::Record, inner);
    live.push_back(rec.complete(hello(), {tool()}));
    auto second = hello();
    second[1].content = "again";
    live.push_back(rec.complete(second, {tool()}));
    CHECK(rec.calls() == 2);
  }
  CHECK(inner->calls == 2);

  TranscriptClient rep(path, TranscriptMode::Replay, nullptr);
  const auto r1 = rep.complete(hello(), {tool()});
  CHECK(r1.message == live[0].message);
  CHECK(r1.usage.prompt_tokens == live[0].usage.prompt_tokens);
  auto wrong = hello();
  wrong[1].content = "something else";
  try {
    (void)rep.complete(wrong, {tool()});
    FAIL("mismatched request served");
  } catch (const ReplayMismatch& e) {
    CHECK(e.expected_hash() != e.actual_hash());
  }

  TranscriptClient rep2(path, TranscriptMode::Replay, nullptr);
  (void)rep2.complete(hello(), {tool()});
  auto second = hello();
  second[1].content = "again";
  CHECK(rep2.complete(second, {tool()}).message == live[1].message);
  CHECK_THROWS_AS(rep2.complete(hello(), {tool()}), ReplayExhausted);

  // recording again starts a fresh file
  {
    TranscriptClient rec(path, TranscriptMode::Record, inner);
    (void)rec.complete(hello(), {tool()});
  }
  std::ifstream in(path);
  int lines = 0;
  for (std::string l; std::getline(in, l);)
    ++lines;
  CHECK(lines == 1);

  CHECK_THROWS_AS(TranscriptClient(path, TranscriptMode::Record, nullptr), ConfigError);
  CHECK_THROWS_AS(TranscriptClient(temp_file("missing.jsonl"), TranscriptMode::Replay, nullptr), IoError);
  std::filesystem::remove(path);
}

TEST_CASE("transcripts never store the key") {
  ::setenv("AMSIZER_TEST_KEY", "sk-do-not-store", 1);
  const auto path = temp_file("secret.jsonl");
  auto inner = std::make_shared<CountingClient>();
  {
    TranscriptClient rec(path, TranscriptMode::Record, inner, {"AMSIZER_TEST_KEY"});
    auto msgs = hello();
    msgs[1].content = "my key is sk-do-not-store";
    (void)rec.complete(msgs, {});
  }
  std::ifstream in(path);
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(text.find("sk-do-not-store") == std::string::npos);
  ::unsetenv("AMSIZER_TEST_KEY");
  std::filesystem::remove(path);
}
