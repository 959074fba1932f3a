#pragma once

// Prompt templates and demonstration selection for zero- and few-shot
// classification.

#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "crisisrag/chat.hpp"
#include "crisisrag/corpus.hpp"
#include "crisisrag/errors.hpp"
#include "crisisrag/labels.hpp"
#include "crisisrag/rng.hpp"
#include "crisisrag/schema.hpp"
#include "crisisrag/tfidf.hpp"

namespace crisisrag {

inline constexpr std::string_view kZeroShotSystemPrompt =
    "You are an expert disaster tweet classifier.\n"
    "You must classify each tweet into TWO fields:\n"
    "\n"
    "1) Humanitarian Label (choose exactly ONE):\n"
    "caution_and_advice,\n"
    "displaced_people_and_evacuations,\n"
    "infrastructure_and_utility_damage,\n"
    "injured_or_dead_people,\n"
    "missing_or_found_people,\n"
    "not_humanitarian,\n"
    "other_relevant_information,\n"
    "requests_or_urgent_needs,\n"
    "rescue_volunteering_or_donation_effort,\n"
    "sympathy_and_support\n"
    "\n"
    "2) Event Type (choose exactly ONE):\n"
    "earthquake, fire, flood, hurricane\n"
    "\n"
    "Return ONLY ONE JSON object. No explanation.\n"
    "Use this EXACT format:\n"
    "{\"humanitarian_label\": \"...\", \"event_type\": \"...\"}";

inline constexpr std::string_view kFewShotSystemPrompt =
    "You are an expert disaster tweet classifier.\n"
    "Classify each tweet into TWO fields and return ONLY ONE JSON object. No explanation.\n"
    "Humanitarian Label (choose 1): caution_and_advice, displaced_people_and_evacuations, "
    "infrastructure_and_utility_damage, injured_or_dead_people, missing_or_found_people, not_humanitarian, "
    "other_relevant_information, requests_or_urgent_needs, rescue_volunteering_or_donation_effort, "
    "sympathy_and_support\n"
    "Event Type (choose 1): earthquake, fire, flood, hurricane";

struct Demonstration {
  std::string tweet;
  HumanitarianLabel humanitarian{};
  EventType event{};

  friend bool operator==(const Demonstration&, const Demonstration&) = default;
};

inline Demonstration to_demonstration(const TweetRecord& r) { return {r.tweet, r.label, r.event_type}; }

enum class ShotStrategy { Manual, Static, Dynamic };

struct ShotConfig {
  std::size_t k = 10;
  ShotStrategy strategy = ShotStrategy::Static;
  std::uint64_t seed = 0;
};

namespace detail {
inline void require_tweet(std::string_view tweet) {
  if (!has_visible_char(tweet)) throw Error(Errc::EmptyTweet, "tweet text is empty");
}
}  // namespace detail

inline Transcript build_zero_shot(std::string_view tweet) {
  detail::require_tweet(tweet);
  return {{Role::System, std::string(kZeroShotSystemPrompt)}, {Role::User, "Tweet: " + std::string(tweet)}};
}

inline std::string quoted_tweet_line(std::string_view tweet) { return "Tweet: \"" + std::string(tweet) + "\""; }

/// System prompt, then one user/assistant pair per demonstration in the given
/// order, then the test tweet as the final user message.
inline Transcript build_few_shot(const std::vector<Demonstration>& demos, std::string_view tweet) {
  if (demos.empty()) throw Error(Errc::EmptyDemos, "few-shot prompt needs at least one demonstration");
  detail::require_tweet(tweet);
  Transcript t;
  t.reserve(2 * demos.size() + 2);
  t.push_back({Role::System, std::string(kFewShotSystemPrompt)});
  for (const auto& d : demos) {
    t.push_back({Role::User, quoted_tweet_line(d.tweet)});
    t.push_back({Role::Assistant, serialize_answer(d.humanitarian, d.event)});
  }
  t.push_back({Role::User, quoted_tweet_line(tweet)});
  return t;
}

/// Corpus positions chosen by stratified static sampling: one uniform draw per
/// humanitarian label (alphabetical order) while fewer than k are chosen, then
/// uniform top-up draws from the records not yet chosen.
inline std::vector<std::size_t> select_static_stratified_positions(const Corpus& train, std::size_t k,
                                                                   std::uint64_t seed) {
  if (k == 0) throw Error(Errc::InvalidConfig, "k must be at least 1");
  if (train.empty()) throw Error(Errc::EmptyCorpus, "training pool is empty");
  if (k > train.size())
    throw Error(Errc::KTooLarge, "k=" + std::to_string(k) + " exceeds pool size " + std::to_string(train.size()));

  SplitMix64 rng(seed);
  std::vector<std::size_t> chosen;
  std::vector<bool> taken(train.size(), false);
  for (auto label : all_humanitarian_labels()) {
    if (chosen.size() >= k) break;
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < train.size(); ++i)
      if (train[i].label == label) members.push_back(i);
    if (members.empty()) continue;
    auto pick = members[rng.uniform_index(members.size())];
    chosen.push_back(pick);
    taken[pick] = true;
  }
  while (chosen.size() < k) {
    std::vector<std::size_t> remaining;
    for (std::size_t i = 0; i < train.size(); ++i)
      if (!taken[i]) remaining.push_back(i);
    auto pick = remaining[rng.uniform_index(remaining.size())];
    chosen.push_back(pick);
    taken[pick] = true;
  }
  return chosen;
}

inline std::vector<Demonstration> select_static_stratified(const Corpus& train, std::size_t k, std::uint64_t seed) {
  std::vector<Demonstration> out;
  for (auto pos : select_static_stratified_positions(train, k, seed)) out.push_back(to_demonstration(train[pos]));
  return out;
}

/// Top-k training records by TF-IDF cosine similarity to the query, in
/// similarity order. `tfidf` must have been fitted on the tweets of `train`.
inline std::vector<Demonstration> select_dynamic(std::string_view query, const Corpus& train, std::size_t k,
                                                 const TfidfModel& tfidf) {
  if (k == 0) throw Error(Errc::InvalidConfig, "k must be at least 1");
  if (k > train.size())
    throw Error(Errc::KTooLarge, "k=" + std::to_string(k) + " exceeds pool size " + std::to_string(train.size()));
  if (tfidf.num_docs() != train.size())
    throw Error(Errc::InvalidConfig, "TF-IDF model was fitted on a different pool");
  std::vector<Demonstration> out;
  for (const auto& hit : tfidf.cosine_topk(query, k)) out.push_back(to_demonstration(train[hit.doc]));
  return out;
}

inline TfidfModel fit_tfidf(const Corpus& train) {
  std::vector<std::string> docs;
  docs.reserve(train.size());
  for (const auto& r : train) docs.push_back(r.tweet);
  return TfidfModel::fit(docs);
}

/// Manual demonstrations: JSONL with tweet, humanitarian_label, event_type.
inline std::vector<Demonstration> load_demonstrations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  std::vector<Demonstration> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!detail::has_visible_char(line)) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("tweet") || !j["tweet"].is_string() ||
        !j.contains("humanitarian_label") || !j.contains("event_type"))
      throw Error(Errc::MalformedRecord, where + ": expected {tweet, humanitarian_label, event_type}");
    Demonstration d;
    d.tweet = j["tweet"].get<std::string>();
    d.humanitarian = parse_humanitarian(j["humanitarian_label"].get<std::string>());
    d.event = parse_event_type(j["event_type"].get<std::string>());
    detail::require_tweet(d.tweet);
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace crisisrag
