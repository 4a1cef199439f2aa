// SPDX-License-Identifier: Apache-2.0
#include "amsizer/llm_client.hpp"

#include <cstdlib>
#include <fstream>

#include <fmt/format.h>
#include <openssl/evp.h>

namespace amsizer {

ReplayMismatch::ReplayMismatch(std::size_t index, std::string expected, std::string actual)
    : LlmError(fmt::format("replayed request {} differs from the recording: expected {}, got {}", index, expected,
                           actual)),
      expected_(std::move(expected)), actual_(std::move(actual)) {}

std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 digest failed");
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i)
    out += fmt::format("{:02x}", md[i]);
  return out;
}

std::string canonical_request(const std::vector<ChatMessage>& messages, const std::vector<ToolSchema>& tools) {
  nlohmann::json j;
  auto& ms = j["messages"] = nlohmann::json::array();
  for (const auto& m : messages)
    ms.push_back(message_to_json(m));
  auto& ts = j["tools"] = nlohmann::json::array();
  for (const auto& t : tools)
    ts.push_back({{"name", t.name}, {"description", t.description}, {"parameters", t.parameters}});
  return j.dump();
}

std::string scrub_secrets(std::string text, const std::vector<std::string>& env_names) {
  for (const auto& name : env_names) {
    const char* v = std::getenv(name.c_str());
    if (!v || std::string_view(v).size() < 4)
      continue;
    const std::string secret(v);
    const std::string mark = fmt::format("[{}]", name);
    for (auto pos = text.find(secret); pos != std::string::npos; pos = text.find(secret, pos + mark.size()))
      text.replace(pos, secret.size(), mark);
  }
  return text;
}

std::string_view to_string(TranscriptMode m) {
  switch (m) {
  case TranscriptMode::Live: return "live";
  case TranscriptMode::Record: return "record";
  case TranscriptMode::Replay: return "replay";
  }
  return "";
}

std::optional<TranscriptMode> parse_transcript_mode(std::string_view text) {
  for (auto m : {TranscriptMode::Live, TranscriptMode::Record, TranscriptMode::Replay})
    if (to_string(m) == text)
      return m;
  return std::nullopt;
}

TranscriptClient::TranscriptClient(std::filesystem::path path, TranscriptMode mode, std::shared_ptr<ChatClient> inner,
                                   std::vector<std::string> secret_envs)
    : path_(std::move(path)), mode_(mode), inner_(std::move(inner)), secret_envs_(std::move(secret_envs)) {
  if (mode_ != TranscriptMode::Replay && !inner_)
    throw ConfigError(fmt::format("{} mode needs a live client", to_string(mode_)));
  if (mode_ == TranscriptMode::Record) {
    if (path_.has_parent_path())
      std::filesystem::create_directories(path_.parent_path());
    std::ofstream out(path_, std::ios::trunc);
    if (!out)
      throw IoError(fmt::format("cannot write transcript '{}'", path_.string()));
  } else if (mode_ == TranscriptMode::Replay) {
    std::ifstream in(path_);
    if (!in)
      throw IoError(fmt::format("cannot read transcript '{}'", path_.string()));
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty())
        continue;
      try {
        entries_.push_back(nlohmann::json::parse(line));
      } catch (const nlohmann::json::exception& e) {
        throw IoError(fmt::format("{}: malformed transcript line: {}", path_.string(), e.what()));
      }
    }
  }
}

Completion TranscriptClient::complete(const std::vector<ChatMessage>& messages, const std::vector<ToolSchema>& tools) {
  std::lock_guard lock(mu_);
  const std::string request = scrub_secrets(canonical_request(messages, tools), secret_envs_);
  const std::string hash = sha256_hex(request);

  if (mode_ == TranscriptMode::Replay) {
    if (index_ >= entries_.size())
      throw ReplayExhausted(
          fmt::format("transcript '{}' holds {} responses; request {} has none", path_.string(), entries_.size(), index_));
    const auto& e = entries_[index_];
    const auto expected = e.at("request_hash").get<std::string>();
    if (expected != hash)
      throw ReplayMismatch(index_, expected, hash);
    ++index_;
    Completion c;
    c.message = message_from_json(e.at("response"));
    if (e.contains("usage")) {
      c.usage.prompt_tokens = e["usage"].value("prompt_tokens", 0L);
      c.usage.completion_tokens = e["usage"].value("completion_tokens", 0L);
    }
    return c;
  }

  auto c = inner_->complete(messages, tools);
  if (mode_ == TranscriptMode::Record) {
    nlohmann::json e{{"index", index_},
                     {"request_hash", hash},
                     {"request", nlohmann::json::parse(request)},
                     {"response", message_to_json(c.message)},
                     {"usage", {{"prompt_tokens", c.usage.prompt_tokens},
                                {"completion_tokens", c.usage.completion_tokens},
                                {"retries", c.usage.retries}}}};
    std::ofstream out(path_, std::ios::app);
    out << scrub_secrets(e.dump(), secret_envs_) << '\n';
    if (!out)
      throw IoError(fmt::format("cannot append to transcript '{}'", path_.string()));
  }
  ++index_;
  return c;
}

} // namespace amsizer
