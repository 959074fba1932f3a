#pragma once

// Classification strategies over a chat backend: zero-shot, few-shot,
// standard RAG, confidence-gated adaptive RAG and hybrid arbitration.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "crisisrag/backend.hpp"
#include "crisisrag/chat.hpp"
#include "crisisrag/corpus.hpp"
#include "crisisrag/embedding.hpp"
#include "crisisrag/errors.hpp"
#include "crisisrag/prompting.hpp"
#include "crisisrag/schema.hpp"
#include "crisisrag/text.hpp"
#include "crisisrag/tfidf.hpp"
#include "crisisrag/vindex.hpp"

namespace crisisrag {

enum class StrategyMode { ZeroShot, FewShot, RagStandard, RagAdaptive, RagHybrid };

inline constexpr std::array<std::string_view, 5> kStrategyModeNames{"zero_shot", "few_shot", "rag_standard",
                                                                    "rag_adaptive", "rag_hybrid"};

constexpr std::string_view to_string(StrategyMode m) { return kStrategyModeNames[static_cast<std::size_t>(m)]; }

inline StrategyMode parse_strategy_mode(std::string_view s) {
  for (std::size_t i = 0; i < kStrategyModeNames.size(); ++i)
    if (kStrategyModeNames[i] == s) return static_cast<StrategyMode>(i);
  throw Error(Errc::InvalidConfig, "unknown strategy '" + std::string(s) + "'");
}

constexpr bool is_rag(StrategyMode m) {
  return m == StrategyMode::RagStandard || m == StrategyMode::RagAdaptive || m == StrategyMode::RagHybrid;
}

struct StrategyConfig {
  StrategyMode mode = StrategyMode::ZeroShot;
  std::size_t k = 3;                       // neighbors placed in a RAG prompt
  double tau = 0.9;                        // adaptive confidence threshold
  std::size_t max_context_tokens = 4096;
  std::size_t candidate_pool = 10;         // neighbors retrieved before hybrid reranking
  std::optional<double> fallback_confidence;  // used when the backend returns no logprobs
  DecodingConfig decoding;

  void validate() const {
    if (k == 0) throw Error(Errc::InvalidConfig, "k must be at least 1");
    if (!(tau >= 0.0 && tau <= 1.0)) throw Error(Errc::InvalidConfig, "tau must lie in [0, 1]");
    if (candidate_pool == 0) throw Error(Errc::InvalidConfig, "candidate_pool must be at least 1");
    if (fallback_confidence && !(*fallback_confidence >= 0.0 && *fallback_confidence <= 1.0))
      throw Error(Errc::InvalidConfig, "fallback confidence must lie in [0, 1]");
  }
};

struct StrategyOutcome {
  ParseResult prediction = ParseError{};
  std::string raw;
  bool rag_triggered = false;
  std::optional<double> phase1_confidence;
  std::optional<std::string> phase1_raw;
  std::vector<Neighbor> neighbors_used;
  std::optional<std::string> error;  // sample could not be classified; scored as wrong
};

/// Geometric-mean token probability, exp(mean(logprobs)).
inline double confidence_from_logprobs(std::span<const double> logprobs) {
  if (logprobs.empty()) throw Error(Errc::EmptyLogprobs, "no token log-probabilities");
  double sum = 0.0;
  for (double lp : logprobs) {
    if (!std::isfinite(lp) || lp > 0.0) throw Error(Errc::ProtocolShape, "log-probability must be finite and <= 0");
    sum += lp;
  }
  return std::exp(sum / static_cast<double>(logprobs.size()));
}

inline std::size_t estimate_tokens(const Transcript& t) {
  std::size_t n = 0;
  for (const auto& m : t) n += estimate_tokens(m.content);
  return n;
}

inline constexpr std::string_view kRagPreamble = "Here are some similar examples for reference:";

namespace detail {
inline Transcript rag_transcript(std::span<const Neighbor> neighbors, std::string_view tweet) {
  std::string user(kRagPreamble);
  user += "\n\n";
  for (const auto& n : neighbors) {
    user += quoted_tweet_line(n.tweet);
    user += "\nJSON: ";
    user += serialize_answer(n.label, n.event);
    user += "\n\n";
  }
  user += quoted_tweet_line(tweet);
  return {{Role::System, std::string(kZeroShotSystemPrompt)}, {Role::User, std::move(user)}};
}
}  // namespace detail

/// System prompt plus one user message listing each neighbor as a Tweet/JSON
/// pair followed by the query tweet. Neighbors are dropped from the tail until
/// the estimated size fits the budget; `used` receives how many were kept.
inline Transcript assemble_rag_prompt(std::span<const Neighbor> neighbors, std::string_view tweet,
                                      std::size_t max_context_tokens = 4096, std::size_t* used = nullptr) {
  if (neighbors.empty()) throw Error(Errc::EmptyDemos, "RAG prompt needs at least one neighbor");
  detail::require_tweet(tweet);
  for (std::size_t n = neighbors.size(); n >= 1; --n) {
    auto t = detail::rag_transcript(neighbors.first(n), tweet);
    if (estimate_tokens(t) <= max_context_tokens) {
      if (used) *used = n;
      return t;
    }
  }
  throw Error(Errc::ContextOverflow, "not even one retrieved example fits in " + std::to_string(max_context_tokens) +
                                         " tokens");
}

// ---------------------------------------------------------------------------
// Hybrid arbitration reranking
// ---------------------------------------------------------------------------

enum class HybridBranch { Supporters, DominantCorrection, Fallback };

struct RerankResult {
  std::vector<Neighbor> neighbors;
  HybridBranch branch = HybridBranch::Fallback;
  std::optional<HumanitarianLabel> dominant;
};

/// 1. Neighbors whose label equals the phase-1 label exist: return the first k
///    of them.
/// 2. Otherwise, when the most common label covers at least half of the
///    neighbors, return the first k neighbors with that label. Ties for most
///    common go to the alphabetically smallest label.
/// 3. Otherwise return the first k neighbors unchanged.
/// Relative order is preserved in every branch.
inline RerankResult rerank_hybrid(std::span<const Neighbor> neighbors, std::optional<HumanitarianLabel> phase1,
                                  std::size_t k) {
  RerankResult out;
  auto take_matching = [&](HumanitarianLabel label) {
    for (const auto& n : neighbors) {
      if (out.neighbors.size() >= k) break;
      if (n.label == label) out.neighbors.push_back(n);
    }
  };
  if (phase1 && std::any_of(neighbors.begin(), neighbors.end(), [&](const Neighbor& n) { return n.label == *phase1; })) {
    out.branch = HybridBranch::Supporters;
    take_matching(*phase1);
    return out;
  }
  std::array<std::size_t, kNumHumanitarian> counts{};
  for (const auto& n : neighbors) ++counts[index_of(n.label)];
  std::size_t best = 0;
  for (std::size_t i = 1; i < counts.size(); ++i)
    if (counts[i] > counts[best]) best = i;
  if (!neighbors.empty() && 2 * counts[best] >= neighbors.size()) {
    out.branch = HybridBranch::DominantCorrection;
    out.dominant = static_cast<HumanitarianLabel>(best);
    take_matching(*out.dominant);
    return out;
  }
  out.branch = HybridBranch::Fallback;
  out.neighbors.assign(neighbors.begin(), neighbors.begin() + static_cast<std::ptrdiff_t>(std::min(k, neighbors.size())));
  return out;
}

// ---------------------------------------------------------------------------
// Classifier
// ---------------------------------------------------------------------------

/// Where few-shot demonstrations come from: a fixed list (manual or static
/// stratified) or per-query TF-IDF retrieval from a training pool.
struct DemonstrationSource {
  std::vector<Demonstration> fixed;
  const Corpus* pool = nullptr;
  const TfidfModel* tfidf = nullptr;
  std::size_t k = 10;
};

class Classifier {
 public:
  Classifier(ChatBackend& backend, StrategyConfig config) : backend_(backend), config_(std::move(config)) {
    config_.validate();
  }

  void set_retrieval(const VectorIndex& index, const Embedder& embedder) {
    if (index.dimension() != embedder.dimension())
      throw Error(Errc::DimensionMismatch, "embedder dimension does not match index");
    index_ = &index;
    embedder_ = &embedder;
  }

  void set_demonstrations(DemonstrationSource source) { demos_ = std::move(source); }

  const StrategyConfig& config() const { return config_; }

  StrategyOutcome classify(const std::string& tweet) const {
    switch (config_.mode) {
      case StrategyMode::ZeroShot: return classify_zero_shot(tweet);
      case StrategyMode::FewShot: return classify_few_shot(tweet);
      case StrategyMode::RagStandard: return classify_standard_rag(tweet);
      case StrategyMode::RagAdaptive: return classify_adaptive(tweet);
      case StrategyMode::RagHybrid: return classify_hybrid(tweet);
    }
    throw Error(Errc::InvalidConfig, "unknown strategy");
  }

  StrategyOutcome classify_zero_shot(const std::string& tweet) const {
    return single_call(build_zero_shot(tweet), tweet);
  }

  StrategyOutcome classify_few_shot(const std::string& tweet) const {
    std::vector<Demonstration> demos = demos_.fixed;
    if (demos_.pool) {
      if (!demos_.tfidf) throw Error(Errc::InvalidConfig, "dynamic demonstrations need a TF-IDF model");
      demos = select_dynamic(tweet, *demos_.pool, demos_.k, *demos_.tfidf);
    }
    return single_call(build_few_shot(demos, tweet), tweet);
  }

  StrategyOutcome classify_standard_rag(const std::string& tweet) const {
    auto neighbors = retrieve(tweet, config_.k);
    StrategyOutcome out = rag_call(neighbors, tweet);
    return out;
  }

  StrategyOutcome classify_adaptive(const std::string& tweet) const {
    auto decoding = config_.decoding;
    decoding.logprobs = true;
    const auto phase1 = backend_.complete(build_zero_shot(tweet), decoding);
    const double confidence = phase1_confidence(phase1);
    if (confidence >= config_.tau) {
      StrategyOutcome out;
      out.raw = phase1.text;
      out.prediction = parse_prediction(phase1.text, tweet);
      if (auto* p = std::get_if<Prediction>(&out.prediction)) p->confidence = confidence;
      out.phase1_confidence = confidence;
      return out;
    }
    auto out = rag_call(retrieve(tweet, config_.k), tweet);
    out.phase1_confidence = confidence;
    out.phase1_raw = phase1.text;
    return out;
  }

  StrategyOutcome classify_hybrid(const std::string& tweet) const {
    auto decoding = config_.decoding;
    decoding.logprobs = true;
    const auto phase1 = backend_.complete(build_zero_shot(tweet), decoding);
    const auto first = parse_prediction(phase1.text, tweet);
    std::optional<HumanitarianLabel> phase1_label;
    if (const auto* p = std::get_if<Prediction>(&first)) phase1_label = p->humanitarian;

    auto candidates = retrieve(tweet, std::max(config_.candidate_pool, config_.k));
    auto reranked = rerank_hybrid(candidates, phase1_label, config_.k);
    auto out = rag_call(reranked.neighbors, tweet);
    out.phase1_raw = phase1.text;
    if (phase1.token_logprobs && !phase1.token_logprobs->empty())
      out.phase1_confidence = confidence_from_logprobs(*phase1.token_logprobs);
    return out;
  }

 private:
  double phase1_confidence(const Completion& c) const {
    if (c.token_logprobs && !c.token_logprobs->empty()) return confidence_from_logprobs(*c.token_logprobs);
    if (config_.fallback_confidence) return *config_.fallback_confidence;
    throw Error(Errc::MissingLogprobs, "backend returned no log-probabilities and no fallback is configured");
  }

  StrategyOutcome single_call(const Transcript& prompt, const std::string& tweet) const {
    const auto c = backend_.complete(prompt, config_.decoding);
    StrategyOutcome out;
    out.raw = c.text;
    out.prediction = parse_prediction(c.text, tweet);
    return out;
  }

  std::vector<Neighbor> retrieve(const std::string& tweet, std::size_t k) const {
    if (!index_ || !embedder_) throw Error(Errc::InvalidConfig, "RAG strategy needs an index and an embedder");
    auto q = embedder_->embed_one(tweet);
    normalize(q);
    return index_->search(q, k);
  }

  StrategyOutcome rag_call(const std::vector<Neighbor>& neighbors, const std::string& tweet) const {
    std::size_t used = 0;
    const auto prompt = assemble_rag_prompt(neighbors, tweet, config_.max_context_tokens, &used);
    auto decoding = config_.decoding;
    decoding.logprobs = false;
    const auto c = backend_.complete(prompt, decoding);
    StrategyOutcome out;
    out.raw = c.text;
    out.prediction = parse_prediction(c.text, tweet);
    out.rag_triggered = true;
    out.neighbors_used.assign(neighbors.begin(), neighbors.begin() + static_cast<std::ptrdiff_t>(used));
    return out;
  }

  ChatBackend& backend_;
  StrategyConfig config_;
  const VectorIndex* index_ = nullptr;
  const Embedder* embedder_ = nullptr;
  DemonstrationSource demos_;
};

// ---------------------------------------------------------------------------
// Bounded in-flight batch driver
// ---------------------------------------------------------------------------

template <class T>
struct BatchResult {
  std::vector<T> results;  // contiguous prefix of inputs, in input order
  std::optional<std::size_t> failed_index;
  std::optional<Error> failure;

  bool complete() const { return !failure.has_value(); }
};

/// Runs fn(i) for i in [0, n) with at most `max_in_flight` calls running at
/// once. Results come back in input order. A crisisrag::Error carrying a
/// backend code stops the batch: no new items are started and the result holds
/// every item before the first failed one. Any other exception is rethrown.
template <class T, class Fn>
BatchResult<T> run_batch(std::size_t n, std::size_t max_in_flight, Fn&& fn) {
  if (max_in_flight == 0) max_in_flight = 1;
  std::vector<std::optional<T>> slots(n);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::mutex mu;
  std::optional<std::size_t> first_fail;
  std::optional<Error> failure;
  std::exception_ptr foreign;

  auto worker = [&] {
    for (;;) {
      if (stop.load()) return;
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        slots[i].emplace(fn(i));
      } catch (const Error& e) {
        std::lock_guard lock(mu);
        if (is_backend_error(e.code())) {
          if (!first_fail || i < *first_fail) {
            first_fail = i;
            failure = e;
          }
        } else if (!foreign) {
          foreign = std::current_exception();
        }
        stop = true;
      } catch (...) {
        std::lock_guard lock(mu);
        if (!foreign) foreign = std::current_exception();
        stop = true;
      }
    }
  };

  const std::size_t workers = std::min(max_in_flight, std::max<std::size_t>(n, 1));
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (foreign) std::rethrow_exception(foreign);

  BatchResult<T> out;
  for (std::size_t i = 0; i < n && slots[i]; ++i) out.results.push_back(std::move(*slots[i]));
  if (failure) {
    out.failed_index = first_fail;
    out.failure = failure;
    out.results.resize(std::min(out.results.size(), *first_fail));
  }
  return out;
}

/// Classifies every tweet through the classifier with bounded concurrency.
/// Per-sample input errors (empty tweet, context overflow) are recorded in the
/// outcome; backend errors stop the batch.
inline BatchResult<StrategyOutcome> classify_batch(const Classifier& classifier, const std::vector<std::string>& tweets,
                                                   std::size_t max_in_flight = 8) {
  return run_batch<StrategyOutcome>(tweets.size(), max_in_flight, [&](std::size_t i) {
    try {
      return classifier.classify(tweets[i]);
    } catch (const Error& e) {
      if (is_backend_error(e.code())) throw;
      StrategyOutcome out;
      ParseError pe;
      pe.detail = e.what();
      out.prediction = pe;
      out.error = e.what();
      return out;
    }
  });
}

/// Fraction of outcomes that ran retrieval.
inline double trigger_rate(std::span<const StrategyOutcome> outcomes) {
  if (outcomes.empty()) return 0.0;
  std::size_t n = 0;
  for (const auto& o : outcomes) n += o.rag_triggered ? 1 : 0;
  return static_cast<double>(n) / static_cast<double>(outcomes.size());
}

inline nlohmann::ordered_json to_json(const StrategyOutcome& o) {
  nlohmann::ordered_json j;
  if (const auto* p = std::get_if<Prediction>(&o.prediction)) {
    j["prediction"] = {{"humanitarian_label", to_string(p->humanitarian)}, {"event_type", to_string(p->event)}};
    if (p->confidence) j["prediction"]["confidence"] = *p->confidence;
    j["parse_error"] = nullptr;
  } else {
    const auto& e = std::get<ParseError>(o.prediction);
    j["prediction"] = nullptr;
    j["parse_error"] = {{"kind", to_string(e.kind)}, {"detail", e.detail}};
    if (e.kind == ParseErrorKind::LabelViolation) {
      j["parse_error"]["field"] = e.field;
      j["parse_error"]["value"] = e.value;
    }
  }
  j["raw"] = o.raw;
  j["rag_triggered"] = o.rag_triggered;
  j["phase1_confidence"] = o.phase1_confidence ? nlohmann::ordered_json(*o.phase1_confidence) : nlohmann::ordered_json(nullptr);
  if (o.phase1_raw) j["phase1_raw"] = *o.phase1_raw;
  auto arr = nlohmann::ordered_json::array();
  for (const auto& n : o.neighbors_used)
    arr.push_back({{"position", n.position}, {"score", n.score}, {"label", to_string(n.label)}});
  j["neighbors"] = std::move(arr);
  j["error"] = o.error ? nlohmann::ordered_json(*o.error) : nlohmann::ordered_json(nullptr);
  return j;
}

/// Reads back the prediction recorded by to_json, for scoring.
inline ParseResult prediction_from_json(const nlohmann::json& j) {
  if (j.contains("prediction") && j["prediction"].is_object()) {
    Prediction p;
    p.humanitarian = parse_humanitarian(j["prediction"].at("humanitarian_label").get<std::string>());
    p.event = parse_event_type(j["prediction"].at("event_type").get<std::string>());
    p.raw = j.value("raw", "");
    if (j["prediction"].contains("confidence")) p.confidence = j["prediction"]["confidence"].get<double>();
    return p;
  }
  ParseError e;
  e.raw = j.value("raw", "");
  if (j.contains("parse_error") && j["parse_error"].is_object()) {
    const auto kind = j["parse_error"].value("kind", "FormatViolation");
    e.kind = kind == "LabelViolation"        ? ParseErrorKind::LabelViolation
             : kind == "RepetitionViolation" ? ParseErrorKind::RepetitionViolation
                                             : ParseErrorKind::FormatViolation;
    e.detail = j["parse_error"].value("detail", "");
  }
  return e;
}

}  // namespace crisisrag
