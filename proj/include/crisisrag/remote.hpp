#pragma once

// HTTP clients for the chat-completions endpoint and the embedding service.
//
// Environment:
//   CRISIS_LLM_BASE_URL   scheme://host[:port][/prefix]; requests go to
//                         <prefix>/v1/chat/completions
//   CRISIS_LLM_API_KEY    sent as "Authorization: Bearer <key>"
//   CRISIS_LLM_MODEL      model name placed in every request
//   CRISIS_EMBED_URL      full URL of the embedding endpoint

#ifdef CRISISRAG_WITH_OPENSSL
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <string>
#include <thread>
#include <utility>

#include <nlohmann/json.hpp>

#include "crisisrag/backend.hpp"
#include "crisisrag/embedding.hpp"
#include "crisisrag/errors.hpp"

namespace crisisrag {

/// Process-wide count of HTTP attempts made by the clients in this header.
inline std::atomic<std::size_t>& http_attempt_counter() {
  static std::atomic<std::size_t> counter{0};
  return counter;
}

class HttpStatusError : public Error {
 public:
  HttpStatusError(int status, const std::string& body)
      : Error(Errc::HttpStatus, "HTTP " + std::to_string(status) + ": " + body.substr(0, 200)), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{500};
};

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;    // absolute path, at least "/"
};

inline Endpoint split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(Errc::InvalidConfig, "URL needs a scheme: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  Endpoint e;
  e.origin = url.substr(0, path_start);
  e.path = path_start == std::string::npos ? "/" : url.substr(path_start);
  return e;
}

namespace detail {

inline bool transient_status(int status) { return status >= 500 || status == 429; }

/// POSTs a JSON body with retries on connection failures, timeouts, 5xx and
/// 429. Other 4xx responses fail immediately.
inline nlohmann::json post_json(const Endpoint& endpoint, const nlohmann::json& body, const httplib::Headers& headers,
                                const RetryPolicy& retry, std::chrono::seconds timeout,
                                std::atomic<std::size_t>* attempts_out = nullptr) {
  const std::string payload = body.dump();
  Errc last_code = Errc::BackendUnavailable;
  std::string last_message;
  auto backoff = retry.initial_backoff;
  for (int attempt = 1; attempt <= retry.max_attempts; ++attempt) {
    if (attempt > 1) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    ++http_attempt_counter();
    if (attempts_out) ++*attempts_out;
    httplib::Client client(endpoint.origin);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    auto res = client.Post(endpoint.path, headers, payload, "application/json");
    if (!res) {
      const auto err = res.error();
      last_code = (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read) ? Errc::Timeout
                                                                                             : Errc::BackendUnavailable;
      last_message = endpoint.origin + endpoint.path + ": " + httplib::to_string(err);
      continue;
    }
    if (res->status >= 200 && res->status < 300) {
      auto j = nlohmann::json::parse(res->body, nullptr, false);
      if (j.is_discarded()) throw Error(Errc::ProtocolShape, "response body is not JSON");
      return j;
    }
    if (!transient_status(res->status)) throw HttpStatusError(res->status, res->body);
    last_code = Errc::HttpStatus;
    last_message = "HTTP " + std::to_string(res->status) + " after " + std::to_string(attempt) + " attempt(s)";
    if (attempt == retry.max_attempts) throw HttpStatusError(res->status, res->body);
  }
  throw Error(last_code, last_message);
}

inline std::string env_or_empty(const char* name) {
  const char* v = std::getenv(name);
  return v ? std::string(v) : std::string();
}

}  // namespace detail

struct HttpChatConfig {
  std::string base_url;
  std::string api_key;
  std::string model;
  std::chrono::seconds timeout{60};
  RetryPolicy retry;
};

/// Parses a chat-completions response: first choice text, optional per-token
/// log-probabilities, optional usage. Extra fields are ignored.
inline Completion parse_chat_response(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("choices") || !j["choices"].is_array() || j["choices"].empty())
    throw Error(Errc::ProtocolShape, "response has no choices");
  const auto& choice = j["choices"][0];
  if (!choice.is_object() || !choice.contains("message") || !choice["message"].is_object() ||
      !choice["message"].contains("content") || !choice["message"]["content"].is_string())
    throw Error(Errc::ProtocolShape, "choices[0].message.content missing");
  Completion c;
  c.text = choice["message"]["content"].get<std::string>();
  if (choice.contains("logprobs") && choice["logprobs"].is_object()) {
    const auto& lp = choice["logprobs"];
    std::vector<double> values;
    if (lp.contains("content") && lp["content"].is_array()) {
      for (const auto& tok : lp["content"]) {
        if (!tok.is_object() || !tok.contains("logprob") || !tok["logprob"].is_number())
          throw Error(Errc::ProtocolShape, "logprobs.content entry lacks a numeric logprob");
        values.push_back(tok["logprob"].get<double>());
      }
      c.token_logprobs = std::move(values);
    } else if (lp.contains("token_logprobs") && lp["token_logprobs"].is_array()) {
      for (const auto& v : lp["token_logprobs"])
        if (v.is_number()) values.push_back(v.get<double>());
      c.token_logprobs = std::move(values);
    }
  }
  if (j.contains("usage") && j["usage"].is_object()) {
    c.usage.prompt_tokens = j["usage"].value("prompt_tokens", std::size_t{0});
    c.usage.completion_tokens = j["usage"].value("completion_tokens", std::size_t{0});
  }
  return c;
}

class HttpChatBackend final : public ChatBackend {
 public:
  explicit HttpChatBackend(HttpChatConfig config) : config_(std::move(config)) {
    if (config_.base_url.empty()) throw Error(Errc::BackendUnavailable, "no chat endpoint URL configured");
    if (config_.api_key.empty()) throw Error(Errc::AuthMissing, "CRISIS_LLM_API_KEY is not set");
    if (config_.model.empty()) throw Error(Errc::InvalidConfig, "CRISIS_LLM_MODEL is not set");
    auto base = split_url(config_.base_url);
    while (base.path.size() > 1 && base.path.back() == '/') base.path.pop_back();
    endpoint_ = {base.origin, (base.path == "/" ? "" : base.path) + "/v1/chat/completions"};
  }

  static HttpChatConfig config_from_env() {
    HttpChatConfig c;
    c.base_url = detail::env_or_empty("CRISIS_LLM_BASE_URL");
    c.api_key = detail::env_or_empty("CRISIS_LLM_API_KEY");
    c.model = detail::env_or_empty("CRISIS_LLM_MODEL");
    return c;
  }

  static HttpChatBackend from_env() { return HttpChatBackend(config_from_env()); }

  Completion complete(const Transcript& messages, const DecodingConfig& config) override {
    if (messages.empty()) throw Error(Errc::EmptyMessages, "no messages to send");
    httplib::Headers headers{{"Authorization", "Bearer " + config_.api_key}};
    auto j = detail::post_json(endpoint_, chat_request_body(config_.model, messages, config), headers,
                               config_.retry, config_.timeout, &attempts_);
    return parse_chat_response(j);
  }

  std::size_t attempts() const { return attempts_.load(); }
  const Endpoint& endpoint() const { return endpoint_; }

 private:
  HttpChatConfig config_;
  Endpoint endpoint_;
  std::atomic<std::size_t> attempts_{0};
};

/// Remote embedder. Request {"texts": [...]} (plus "model" when set); response
/// {"embeddings": [[...], ...]} or a bare array of vectors.
class HttpEmbedder final : public Embedder {
 public:
  HttpEmbedder(std::string url, std::size_t dim, std::string model = {}, RetryPolicy retry = {})
      : endpoint_(split_url(url)), dim_(dim), model_(std::move(model)), retry_(retry) {}

  static HttpEmbedder from_env(std::size_t dim = kDefaultEmbeddingDim) {
    auto url = detail::env_or_empty("CRISIS_EMBED_URL");
    if (url.empty()) throw Error(Errc::BackendUnavailable, "CRISIS_EMBED_URL is not set");
    return HttpEmbedder(url, dim);
  }

  std::size_t dimension() const override { return dim_; }

  std::vector<Vector> embed(const std::vector<std::string>& texts) const override {
    std::vector<Vector> out;
    out.reserve(texts.size());
    constexpr std::size_t kBatch = 256;
    for (std::size_t start = 0; start < texts.size(); start += kBatch) {
      nlohmann::json body;
      const auto end = std::min(texts.size(), start + kBatch);
      body["texts"] = std::vector<std::string>(texts.begin() + static_cast<std::ptrdiff_t>(start),
                                               texts.begin() + static_cast<std::ptrdiff_t>(end));
      if (!model_.empty()) body["model"] = model_;
      auto j = detail::post_json(endpoint_, body, {}, retry_, std::chrono::seconds(120));
      const auto& arr = j.is_object() && j.contains("embeddings") ? j["embeddings"] : j;
      if (!arr.is_array() || arr.size() != end - start)
        throw Error(Errc::ProtocolShape, "embedding response has the wrong number of vectors");
      for (const auto& v : arr) {
        if (!v.is_array() || v.size() != dim_)
          throw Error(Errc::DimensionMismatch, "embedding vector has the wrong dimension");
        Vector vec = v.get<Vector>();
        if (!all_finite(vec)) throw Error(Errc::ProtocolShape, "embedding has non-finite entries");
        out.push_back(std::move(vec));
      }
    }
    return out;
  }

 private:
  Endpoint endpoint_;
  std::size_t dim_;
  std::string model_;
  RetryPolicy retry_;
};

}  // namespace crisisrag
