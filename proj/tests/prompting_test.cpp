#include <gtest/gtest.h>

#include <algorithm>
#include <cstdint>
#include <set>

#include "crisisrag/prompting.hpp"
#include "crisisrag/rng.hpp"
#include "test_support.hpp"

using namespace crisisrag;
using crisisrag::testing::fixture;
using crisisrag::testing::slurp;

namespace {

// Second, independent transcription of the seeded generator and of the
// stratified selection loop, used as the oracle for exact ids.
struct OracleRng {
  std::uint64_t s;
  std::uint64_t operator()() {
    s += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = s;
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
  std::size_t below(std::size_t n) {
    const std::uint64_t reject_under = (~std::uint64_t{0} - n + 1) % n;
    std::uint64_t r;
    do r = (*this)(); while (r < reject_under);
    return static_cast<std::size_t>(r % n);
  }
};

std::vector<std::string> oracle_stratified_ids(const Corpus& train, std::size_t k, std::uint64_t seed) {
  OracleRng rng{seed};
  std::vector<std::string> picked;
  std::set<std::size_t> used;
  std::vector<std::string> names(kHumanitarianNames.begin(), kHumanitarianNames.end());
  std::sort(names.begin(), names.end());
  for (const auto& name : names) {
    if (picked.size() >= k) continue;
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < train.size(); ++i)
      if (to_string(train[i].label) == name) pool.push_back(i);
    if (pool.empty()) continue;
    auto i = pool[rng.below(pool.size())];
    picked.push_back(train[i].tweet_id);
    used.insert(i);
  }
  while (picked.size() < k) {
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < train.size(); ++i)
      if (!used.count(i)) pool.push_back(i);
    auto i = pool[rng.below(pool.size())];
    picked.push_back(train[i].tweet_id);
    used.insert(i);
  }
  return picked;
}

Corpus ten_label_pool(std::size_t per_label) {
  Corpus c;
  std::size_t id = 100;
  for (std::size_t rep = 0; rep < per_label; ++rep)
    for (auto l : all_humanitarian_labels())
      c.push_back({std::to_string(id++), "tweet " + std::to_string(id) + " about " + std::string(to_string(l)), l,
                   "x_flood", EventType::Flood, Split::Train});
  return c;
}

std::uint64_t fnv(std::string_view s) { return fnv1a64(s.data(), s.size()); }

}  // namespace

TEST(ZeroShot, StructureAndLabels) {
  auto t = build_zero_shot("x");
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t[0].role, Role::System);
  EXPECT_EQ(t[1].role, Role::User);
  EXPECT_EQ(t[1].content, "Tweet: x");
  for (auto name : kHumanitarianNames) {
    const auto& s = t[0].content;
    const auto first = s.find(name);
    ASSERT_NE(first, std::string::npos) << name;
    EXPECT_EQ(s.find(name, first + 1), std::string::npos) << name;
  }
  EXPECT_NE(t[0].content.find("earthquake, fire, flood, hurricane"), std::string::npos);
  EXPECT_NE(t[0].content.find("Return ONLY ONE JSON object. No explanation."), std::string::npos);
  EXPECT_EQ(t[0].content, build_zero_shot("something else entirely")[0].content);
}

TEST(ZeroShot, TemplateChecksum) {
  // FNV-1a 64 of the template, frozen when the template was authored.
  EXPECT_EQ(fnv(kZeroShotSystemPrompt), 0x4460c18fa3cd8f78ULL) << std::hex << fnv(kZeroShotSystemPrompt);
  EXPECT_EQ(slurp(fixture("golden/zero_shot_system.txt")), std::string(kZeroShotSystemPrompt));
}

TEST(ZeroShot, EmptyTweetRejected) {
  EXPECT_THROW(build_zero_shot(""), Error);
  EXPECT_THROW(build_zero_shot(" \n"), Error);
}

TEST(FewShot, StructureAndParseableAnswers) {
  std::vector<Demonstration> demos = {{"quake kills 235", HumanitarianLabel::InjuredOrDeadPeople, EventType::Earthquake},
                                      {"praying for kerala", HumanitarianLabel::SympathyAndSupport, EventType::Flood}};
  auto t = build_few_shot(demos, "test tweet");
  ASSERT_EQ(t.size(), 6u);
  EXPECT_EQ(t[0].role, Role::System);
  EXPECT_EQ(t[1].role, Role::User);
  EXPECT_EQ(t[1].content, "Tweet: \"quake kills 235\"");
  EXPECT_EQ(t[2].role, Role::Assistant);
  auto parsed = parse_prediction(t[2].content);
  ASSERT_TRUE(parsed_ok(parsed));
  EXPECT_EQ(std::get<Prediction>(parsed).humanitarian, HumanitarianLabel::InjuredOrDeadPeople);
  EXPECT_EQ(std::get<Prediction>(parsed).event, EventType::Earthquake);
  EXPECT_EQ(t[5].role, Role::User);
  EXPECT_EQ(t[5].content, "Tweet: \"test tweet\"");
  for (auto name : kHumanitarianNames) EXPECT_NE(t[0].content.find(name), std::string::npos);
}

TEST(FewShot, EmptyDemosRejected) {
  try {
    build_few_shot({}, "x");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::EmptyDemos);
  }
}

TEST(FewShot, GoldenTranscript) {
  auto pool = ten_label_pool(1);
  std::vector<Demonstration> demos;
  for (std::size_t i = 0; i < 5; ++i) demos.push_back(to_demonstration(pool[2 * i]));
  EXPECT_EQ(render_transcript(build_few_shot(demos, "Bridge collapsed on route 9, send help")),
            slurp(fixture("golden/few_shot_5.txt")));
}

TEST(StaticStratified, TwoLabelsCoverage) {
  Corpus c = {{"1", "a1", HumanitarianLabel::CautionAndAdvice, "f", EventType::Fire, Split::Train},
              {"2", "a2", HumanitarianLabel::CautionAndAdvice, "f", EventType::Fire, Split::Train},
              {"3", "b1", HumanitarianLabel::NotHumanitarian, "f", EventType::Fire, Split::Train}};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto d = select_static_stratified(c, 2, seed);
    ASSERT_EQ(d.size(), 2u);
    EXPECT_EQ(d[0].humanitarian, HumanitarianLabel::CautionAndAdvice);
    EXPECT_EQ(d[1].humanitarian, HumanitarianLabel::NotHumanitarian);
  }
}

TEST(StaticStratified, TenLabelsEachOnce) {
  auto pool = ten_label_pool(4);
  auto d = select_static_stratified(pool, 10, 42);
  std::set<HumanitarianLabel> labels;
  for (const auto& x : d) labels.insert(x.humanitarian);
  EXPECT_EQ(labels.size(), 10u);
}

TEST(StaticStratified, TopUpMatchesOracle) {
  auto pool = ten_label_pool(3);
  for (std::uint64_t seed : {0ULL, 1ULL, 42ULL, 0xDEADBEEFULL}) {
    auto positions = select_static_stratified_positions(pool, 12, seed);
    std::vector<std::string> ids;
    for (auto p : positions) ids.push_back(pool[p].tweet_id);
    EXPECT_EQ(ids, oracle_stratified_ids(pool, 12, seed)) << "seed " << seed;
    EXPECT_EQ(std::set<std::string>(ids.begin(), ids.end()).size(), 12u);
  }
}

TEST(StaticStratified, ReproducibleAndCovering) {
  SplitMix64 gen(5);
  for (int trial = 0; trial < 100; ++trial) {
    Corpus c;
    const auto n = 1 + gen.uniform_index(60);
    for (std::size_t i = 0; i < n; ++i)
      c.push_back({std::to_string(i), "t", static_cast<HumanitarianLabel>(gen.uniform_index(kNumHumanitarian)), "f",
                   EventType::Fire, Split::Train});
    std::set<HumanitarianLabel> present;
    for (const auto& r : c) present.insert(r.label);
    const auto k = present.size() + gen.uniform_index(n - present.size() + 1);
    const auto seed = gen.next();
    auto a = select_static_stratified_positions(c, k, seed);
    EXPECT_EQ(a, select_static_stratified_positions(c, k, seed));
    std::set<HumanitarianLabel> covered;
    for (auto p : a) covered.insert(c[p].label);
    EXPECT_EQ(covered, present);
  }
}

TEST(StaticStratified, KTooLarge) {
  auto pool = ten_label_pool(1);
  try {
    select_static_stratified(pool, 11, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::KTooLarge);
  }
}

TEST(Dynamic, RetrievesBySimilarity) {
  Corpus train = {{"1", "flood water rescue", HumanitarianLabel::RescueVolunteeringOrDonationEffort, "x_flood",
                   EventType::Flood, Split::Train},
                  {"2", "fire damage", HumanitarianLabel::InfrastructureAndUtilityDamage, "x_fire", EventType::Fire,
                   Split::Train},
                  {"3", "flood donations", HumanitarianLabel::RescueVolunteeringOrDonationEffort, "x_flood",
                   EventType::Flood, Split::Train}};
  auto tfidf = fit_tfidf(train);
  auto d = select_dynamic("flood rescue", train, 2, tfidf);
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d[0].tweet, "flood water rescue");
  EXPECT_EQ(d[1].tweet, "flood donations");

  EXPECT_EQ(select_dynamic("fire damage", train, 1, tfidf)[0].tweet, "fire damage");

  auto all = select_dynamic("anything", train, 3, tfidf);
  std::set<std::string> tweets;
  for (const auto& x : all) tweets.insert(x.tweet);
  EXPECT_EQ(tweets.size(), 3u);
  EXPECT_THROW(select_dynamic("x", train, 4, tfidf), Error);
}

TEST(ManualDemos, LoadFromJsonl) {
  auto demos = load_demonstrations(fixture("manual_demos.jsonl"));
  ASSERT_EQ(demos.size(), 2u);
  EXPECT_EQ(demos[1].humanitarian, HumanitarianLabel::RequestsOrUrgentNeeds);
  EXPECT_EQ(demos[1].event, EventType::Hurricane);
}
