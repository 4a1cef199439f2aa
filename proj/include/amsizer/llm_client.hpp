// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "amsizer/errors.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace amsizer {

class LlmError : public Error {
public:
  using Error::Error;
};

class RateLimited : public LlmError {
public:
  RateLimited(const std::string& what, int attempts) : LlmError(what), attempts_(attempts) {}
  [[nodiscard]] int attempts() const noexcept { return attempts_; }

private:
  int attempts_;
};

class AuthError : public LlmError {
public:
  using LlmError::LlmError;
};

class TransportError : public LlmError {
public:
  using LlmError::LlmError;
};

class MalformedResponse : public LlmError {
public:
  using LlmError::LlmError;
};

class ReplayMismatch : public LlmError {
public:
  ReplayMismatch(std::size_t index, std::string expected, std::string actual);
  [[nodiscard]] const std::string& expected_hash() const noexcept { return expected_; }
  [[nodiscard]] const std::string& actual_hash() const noexcept { return actual_; }

private:
  std::string expected_;
  std::string actual_;
};

class ReplayExhausted : public LlmError {
public:
  using LlmError::LlmError;
};

enum class Role { System, User, Assistant, Tool };

std::string_view to_string(Role r);
std::optional<Role> parse_role(std::string_view text);

struct ToolCall {
  std::string id;
  std::string name;
  /// JSON text exactly as the provider sent it.
  std::string arguments;
  friend bool operator==(const ToolCall&, const ToolCall&) = default;
};

struct ChatMessage {
  Role role = Role::User;
  std::string content;
  std::vector<ToolCall> tool_calls;
  /// For Role::Tool: the id of the call this message answers.
  std::string tool_call_id;
  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct ToolSchema {
  std::string name;
  std::string description;
  /// JSON schema object of the arguments.
  nlohmann::json parameters;
};

/// Checks role/tool-call consistency; throws ConfigError.
void validate_conversation(const std::vector<ChatMessage>& messages, const std::vector<ToolSchema>& tools);

nlohmann::json message_to_json(const ChatMessage& m);
ChatMessage message_from_json(const nlohmann::json& j);

enum class Dialect { OpenAI, Anthropic };

std::string_view to_string(Dialect d);
std::optional<Dialect> parse_dialect(std::string_view text);

struct ProviderConfig {
  Dialect dialect = Dialect::OpenAI;
  /// Full URL of the chat endpoint.
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string model_id = "gpt-4o";
  /// Name of the environment variable holding the key. The key itself never
  /// appears in configuration.
  std::string api_key_env = "OPENAI_API_KEY";
  int max_retries = 5;
  double timeout = 120.0;
  /// Requests per minute admitted across all clients of this endpoint.
  double rate_limit = 60.0;
  double backoff_initial = 1.0;
  double backoff_max = 30.0;
  /// Cap on the summed retry waits of one call.
  double backoff_ceiling = 120.0;
  int max_tokens = 4096;
  double temperature = 0.0;

  void validate() const;
};

/// Accepts the field names above; rejects an "api_key" field.
ProviderConfig provider_from_json(const nlohmann::json& j);
nlohmann::json provider_to_json(const ProviderConfig& cfg);

struct Usage {
  long prompt_tokens = 0;
  long completion_tokens = 0;
  int retries = 0;
  double retry_wait = 0.0;
};

struct Completion {
  ChatMessage message;
  Usage usage;
};

class ChatClient {
public:
  virtual ~ChatClient() = default;
  virtual Completion complete(const std::vector<ChatMessage>& messages, const std::vector<ToolSchema>& tools) = 0;
};

struct HttpResponse {
  int status = 0;
  std::string body;
  std::map<std::string, std::string> headers;
};

/// Minimal POST transport, replaceable in tests.
class HttpTransport {
public:
  virtual ~HttpTransport() = default;
  virtual HttpResponse post(const std::string& url, const std::map<std::string, std::string>& headers,
                            const std::string& body, double timeout) = 0;
};

/// cpp-httplib transport (http and https).
std::shared_ptr<HttpTransport> default_transport();

/// Admits at most `per_minute` requests per minute, spaced evenly.
class RateLimiter {
public:
  explicit RateLimiter(double per_minute);
  /// Seconds the caller must wait before sending; reserves the slot.
  double reserve();

  /// Process-wide limiter shared by every client of `key`.
  static std::shared_ptr<RateLimiter> shared(const std::string& key, double per_minute);

private:
  std::mutex mu_;
  double interval_;
  double next_ = 0.0;
};

/// Exponential backoff: initial * 2^attempt capped at max; Retry-After wins
/// when present.
double backoff_delay(const ProviderConfig& cfg, int attempt, std::optional<double> retry_after);

/// Request body in the provider's wire format.
nlohmann::json encode_request(const ProviderConfig& cfg, const std::vector<ChatMessage>& messages,
                              const std::vector<ToolSchema>& tools);
/// Assistant message and token counts from a response body.
Completion decode_response(Dialect dialect, const nlohmann::json& body);

using Sleeper = std::function<void(double seconds)>;

/// Live chat-completion client for one provider.
class ProviderClient final : public ChatClient {
public:
  explicit ProviderClient(ProviderConfig cfg, std::shared_ptr<HttpTransport> transport = default_transport(),
                          Sleeper sleep = {});

  Completion complete(const std::vector<ChatMessage>& messages, const std::vector<ToolSchema>& tools) override;
  [[nodiscard]] const ProviderConfig& config() const noexcept { return cfg_; }
  /// Totals over every call made by this client.
  [[nodiscard]] Usage total_usage() const;

private:
  ProviderConfig cfg_;
  std::shared_ptr<HttpTransport> transport_;
  Sleeper sleep_;
  std::shared_ptr<RateLimiter> limiter_;
  mutable std::mutex mu_;
  Usage total_;
};

/// Hex SHA-256.
std::string sha256_hex(std::string_view data);

/// Canonical request text (dialect independent) and its hash.
std::string canonical_request(const std::vector<ChatMessage>& messages, const std::vector<ToolSchema>& tools);

/// Replaces the values of the named environment variables with a marker.
std::string scrub_secrets(std::string text, const std::vector<std::string>& env_names);

enum class TranscriptMode { Live, Record, Replay };

std::string_view to_string(TranscriptMode m);
std::optional<TranscriptMode> parse_transcript_mode(std::string_view text);

/// Wraps a client. Record appends one JSON line per call; replay serves the
/// recorded responses in order after checking each request hash and never
/// touches `inner` (which may be null).
class TranscriptClient final : public ChatClient {
public:
  TranscriptClient(std::filesystem::path path, TranscriptMode mode, std::shared_ptr<ChatClient> inner,
                   std::vector<std::string> secret_envs = {});

  Completion complete(const std::vector<ChatMessage>& messages, const std::vector<ToolSchema>& tools) override;
  [[nodiscard]] std::size_t calls() const noexcept { return index_; }

private:
  std::filesystem::path path_;
  TranscriptMode mode_;
  std::shared_ptr<ChatClient> inner_;
  std::vector<std::string> secret_envs_;
  std::vector<nlohmann::json> entries_;
  std::size_t index_ = 0;
  std::mutex mu_;
};

} // namespace amsizer
