#pragma once

// Chat-completion backend abstraction and the scripted replay backend.

#include <atomic>
#include <cstddef>
#include <deque>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "crisisrag/chat.hpp"
#include "crisisrag/errors.hpp"

namespace crisisrag {

struct DecodingConfig {
  double temperature = 0.0;
  double top_p = 1.0;
  int max_tokens = 50;
  bool logprobs = false;
};

struct TokenUsage {
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;
};

struct Completion {
  std::string text;
  std::optional<std::vector<double>> token_logprobs;
  TokenUsage usage;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  /// Thread-safe. Throws crisisrag::Error with a backend error code on failure.
  virtual Completion complete(const Transcript& messages, const DecodingConfig& config) = 0;
};

/// Request body in the chat-completions wire format.
inline nlohmann::json chat_request_body(const std::string& model, const Transcript& messages,
                                        const DecodingConfig& config) {
  nlohmann::json body;
  body["model"] = model;
  body["messages"] = to_json(messages);
  body["temperature"] = config.temperature;
  body["top_p"] = config.top_p;
  body["max_tokens"] = config.max_tokens;
  body["logprobs"] = config.logprobs;
  return body;
}

/// The tweet a transcript asks about: the text after the last "Tweet: " in the
/// final user message, with one pair of surrounding double quotes removed.
inline std::string query_tweet(const Transcript& messages) {
  for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
    if (it->role != Role::User) continue;
    const auto& c = it->content;
    auto pos = c.rfind("Tweet: ");
    if (pos == std::string::npos) return {};
    std::string t = c.substr(pos + 7);
    if (t.size() >= 2 && t.front() == '"' && t.back() == '"') t = t.substr(1, t.size() - 2);
    return t;
  }
  return {};
}

struct ScriptEntry {
  std::string completion;
  std::optional<std::vector<double>> logprobs;
  std::optional<std::string> tweet;  // when set, only served for this query tweet
};

struct RecordedRequest {
  Transcript messages;
  DecodingConfig config;
};

/// Replays scripted completions. Unkeyed entries are served first-in
/// first-out; an entry keyed by tweet is served to the first request whose
/// query tweet matches exactly, which keeps replays deterministic when several
/// requests are in flight. Every request is recorded.
class ScriptedBackend final : public ChatBackend {
 public:
  ScriptedBackend() = default;
  explicit ScriptedBackend(std::vector<ScriptEntry> script) : script_(script.begin(), script.end()) {}

  Completion complete(const Transcript& messages, const DecodingConfig& config) override {
    if (messages.empty()) throw Error(Errc::EmptyMessages, "no messages to send");
    std::lock_guard lock(mu_);
    requests_.push_back({messages, config});
    const auto tweet = query_tweet(messages);
    auto it = script_.begin();
    for (; it != script_.end(); ++it)
      if (!it->tweet || *it->tweet == tweet) break;
    if (it == script_.end())
      throw Error(Errc::ScriptExhausted, "no scripted completion left for request " + std::to_string(requests_.size()));
    Completion c;
    c.text = std::move(it->completion);
    if (config.logprobs) c.token_logprobs = std::move(it->logprobs);
    script_.erase(it);
    return c;
  }

  std::vector<RecordedRequest> requests() const {
    std::lock_guard lock(mu_);
    return requests_;
  }

  std::size_t remaining() const {
    std::lock_guard lock(mu_);
    return script_.size();
  }

  /// JSONL script: {"completion": str, "logprobs": [..]?, "tweet": str?}.
  static std::vector<ScriptEntry> load_script(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::Io, "cannot open " + path.string());
    std::vector<ScriptEntry> entries;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.is_object() || !j.contains("completion") || !j["completion"].is_string())
        throw Error(Errc::MalformedRecord, path.string() + ":" + std::to_string(lineno) + ": expected {completion}");
      ScriptEntry e;
      e.completion = j["completion"].get<std::string>();
      if (j.contains("logprobs") && !j["logprobs"].is_null()) e.logprobs = j["logprobs"].get<std::vector<double>>();
      if (j.contains("tweet") && j["tweet"].is_string()) e.tweet = j["tweet"].get<std::string>();
      entries.push_back(std::move(e));
    }
    return entries;
  }

 private:
  mutable std::mutex mu_;
  std::deque<ScriptEntry> script_;
  std::vector<RecordedRequest> requests_;
};

}  // namespace crisisrag
