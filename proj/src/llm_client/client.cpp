// SPDX-License-Identifier: Apache-2.0
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "amsizer/llm_client.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <regex>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>

namespace amsizer {

namespace {

double now_seconds() {
  using namespace std::chrono;
  return duration<double>(steady_clock::now().time_since_epoch()).count();
}

class HttplibTransport final : public HttpTransport {
public:
  HttpResponse post(const std::string& url, const std::map<std::string, std::string>& headers,
                    const std::string& body, double timeout) override {
    static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)", std::regex::icase);
    std::smatch m;
    if (!std::regex_match(url, m, re))
      throw ConfigError(fmt::format("malformed endpoint URL '{}'", url));
    httplib::Client cli(m[1].str());
    const auto secs = static_cast<time_t>(timeout);
    const auto usecs = static_cast<time_t>((timeout - static_cast<double>(secs)) * 1e6);
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);
    httplib::Headers h;
    for (const auto& [k, v] : headers)
      h.emplace(k, v);
    const std::string path = m[2].matched ? m[2].str() : "/";
    auto res = cli.Post(path, h, body, "application/json");
    if (!res)
      throw TransportError(fmt::format("POST {} failed: {}", url, httplib::to_string(res.error())));
    HttpResponse out;
    out.status = res->status;
    out.body = res->body;
    for (const auto& [k, v] : res->headers)
      out.headers[k] = v;
    return out;
  }
};

std::optional<double> retry_after(const HttpResponse& r) {
  for (const auto& [k, v] : r.headers) {
    std::string key = k;
    std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
    if (key == "retry-after") {
      char* end = nullptr;
      const double s = std::strtod(v.c_str(), &end);
      if (end != v.c_str() && std::isfinite(s) && s >= 0.0)
        return s;
    }
  }
  return std::nullopt;
}

std::string excerpt(const std::string& body) { return body.size() > 300 ? body.substr(0, 300) + "..." : body; }

} // namespace

void ProviderConfig::validate() const {
  if (endpoint.empty() || model_id.empty())
    throw ConfigError("provider needs an endpoint and a model id");
  if (api_key_env.empty())
    throw ConfigError("provider needs api_key_env");
  if (max_retries < 0 || !(timeout > 0.0) || rate_limit < 0.0 || backoff_initial < 0.0 || backoff_max < 0.0 ||
      backoff_ceiling < 0.0 || max_tokens < 1)
    throw ConfigError("provider limits must be non-negative");
}

ProviderConfig provider_from_json(const nlohmann::json& j) {
  if (j.contains("api_key"))
    throw ConfigError("provider configs name the key's environment variable (api_key_env), not the key");
  ProviderConfig c;
  try {
    if (j.contains("dialect")) {
      const auto d = parse_dialect(j.at("dialect").get<std::string>());
      if (!d)
        throw ConfigError(fmt::format("unknown dialect {}", j.at("dialect").dump()));
      c.dialect = *d;
      if (c.dialect == Dialect::Anthropic) {
        c.endpoint = "https://api.anthropic.com/v1/messages";
        c.model_id = "claude-3-5-sonnet-20240620";
        c.api_key_env = "ANTHROPIC_API_KEY";
      }
    }
    c.endpoint = j.value("endpoint", c.endpoint);
    c.model_id = j.value("model_id", c.model_id);
    c.api_key_env = j.value("api_key_env", c.api_key_env);
    c.max_retries = j.value("max_retries", c.max_retries);
    c.timeout = j.value("timeout", c.timeout);
    c.rate_limit = j.value("rate_limit", c.rate_limit);
    c.backoff_initial = j.value("backoff_initial", c.backoff_initial);
    c.backoff_max = j.value("backoff_max", c.backoff_max);
    c.backoff_ceiling = j.value("backoff_ceiling", c.backoff_ceiling);
    c.max_tokens = j.value("max_tokens", c.max_tokens);
    c.temperature = j.value("temperature", c.temperature);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("malformed provider config: {}", e.what()));
  }
  c.validate();
  return c;
}

nlohmann::json provider_to_json(const ProviderConfig& c) {
  return {{"dialect", to_string(c.dialect)},   {"endpoint", c.endpoint},
          {"model_id", c.model_id},            {"api_key_env", c.api_key_env},
          {"max_retries", c.max_retries},      {"timeout", c.timeout},
          {"rate_limit", c.rate_limit},        {"backoff_initial", c.backoff_initial},
          {"backoff_max", c.backoff_max},      {"backoff_ceiling", c.backoff_ceiling},
          {"max_tokens", c.max_tokens},        {"temperature", c.temperature}};
}

std::shared_ptr<HttpTransport> default_transport() { return std::make_shared<HttplibTransport>(); }

RateLimiter::RateLimiter(double per_minute) : interval_(per_minute > 0.0 ? 60.0 / per_minute : 0.0) {}

double RateLimiter::reserve() {
  std::lock_guard lock(mu_);
  const double now = now_seconds();
  if (next_ < now)
    next_ = now;
  const double wait = next_ - now;
  next_ += interval_;
  return wait;
}

std::shared_ptr<RateLimiter> RateLimiter::shared(const std::string& key, double per_minute) {
  static std::mutex mu;
  static std::map<std::string, std::shared_ptr<RateLimiter>> registry;
  std::lock_guard lock(mu);
  auto& slot = registry[key];
  if (!slot)
    slot = std::make_shared<RateLimiter>(per_minute);
  return slot;
}

double backoff_delay(const ProviderConfig& cfg, int attempt, std::optional<double> retry_after) {
  if (retry_after)
    return *retry_after;
  return std::min(cfg.backoff_max, cfg.backoff_initial * std::ldexp(1.0, attempt));
}

ProviderClient::ProviderClient(ProviderConfig cfg, std::shared_ptr<HttpTransport> transport, Sleeper sleep)
    : cfg_(std::move(cfg)), transport_(std::move(transport)), sleep_(std::move(sleep)) {
  cfg_.validate();
  if (!transport_)
    throw ConfigError("provider client needs a transport");
  if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key == nullptr || *key == '\0')
    throw AuthError(fmt::format("environment variable {} is not set", cfg_.api_key_env));
  if (!sleep_)
    sleep_ = [](double s) { std::this_thread::sleep_for(std::chrono::duration<double>(s)); };
  limiter_ = RateLimiter::shared(cfg_.endpoint + "|" + cfg_.model_id, cfg_.rate_limit);
}

Usage ProviderClient::total_usage() const {
  std::lock_guard lock(mu_);
  return total_;
}

Completion ProviderClient::complete(const std::vector<ChatMessage>& messages, const std::vector<ToolSchema>& tools) {
  validate_conversation(messages, tools);
  const char* key = std::getenv(cfg_.api_key_env.c_str());
  if (!key || !*key)
    throw AuthError(fmt::format("environment variable {} is not set", cfg_.api_key_env));

  std::map<std::string, std::string> headers;
  if (cfg_.dialect == Dialect::OpenAI) {
    headers["Authorization"] = fmt::format("Bearer {}", key);
  } else {
    headers["x-api-key"] = key;
    headers["anthropic-version"] = "2023-06-01";
  }
  const std::string body = encode_request(cfg_, messages, tools).dump();
  const std::vector<std::string> secrets{cfg_.api_key_env};

  Usage usage;
  for (int attempt = 0;; ++attempt) {
    if (const double wait = limiter_->reserve(); wait > 0.0)
      sleep_(wait);
    const auto resp = transport_->post(cfg_.endpoint, headers, body, cfg_.timeout);
    if (resp.status >= 200 && resp.status < 300) {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(resp.body);
      } catch (const nlohmann::json::exception& e) {
        throw MalformedResponse(fmt::format("response is not JSON: {}", e.what()));
      }
      auto out = decode_response(cfg_.dialect, j);
      out.usage.retries = usage.retries;
      out.usage.retry_wait = usage.retry_wait;
      std::lock_guard lock(mu_);
      total_.prompt_tokens += out.usage.prompt_tokens;
      total_.completion_tokens += out.usage.completion_tokens;
      total_.retries += out.usage.retries;
      total_.retry_wait += out.usage.retry_wait;
      return out;
    }
    const auto detail = scrub_secrets(excerpt(resp.body), secrets);
    if (resp.status == 401 || resp.status == 403)
      throw AuthError(fmt::format("provider rejected credentials ({}): {}", resp.status, detail));
    const bool retryable = resp.status == 429 || resp.status >= 500;
    if (!retryable)
      throw TransportError(fmt::format("provider returned HTTP {}: {}", resp.status, detail));
    const double delay = backoff_delay(cfg_, attempt, retry_after(resp));
    if (attempt >= cfg_.max_retries || usage.retry_wait + delay > cfg_.backoff_ceiling) {
      if (resp.status == 429)
        throw RateLimited(fmt::format("rate limited after {} retries: {}", attempt, detail), attempt + 1);
      throw TransportError(fmt::format("HTTP {} after {} retries: {}", resp.status, attempt, detail));
    }
    fmt::print(stderr, "llm: HTTP {}, retry {} in {:.2f} s\n", resp.status, attempt + 1, delay);
    sleep_(delay);
    usage.retries += 1;
    usage.retry_wait += delay;
  }
}

} // namespace amsizer
