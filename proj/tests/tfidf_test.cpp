#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "crisisrag/rng.hpp"
#include "crisisrag/tfidf.hpp"

using namespace crisisrag;

namespace {

// Independent dense reimplementation: weights computed directly from the
// formula tf(t, d) * ln(|D| / df(t)) over a term->weight map.
std::map<std::string, double> oracle_vector(const std::vector<std::string>& docs, const std::string& text) {
  std::map<std::string, int> df;
  for (const auto& d : docs) {
    std::set<std::string> uniq;
    for (auto& t : tokenize(d)) uniq.insert(t);
    for (const auto& t : uniq) ++df[t];
  }
  std::map<std::string, double> v;
  for (auto& t : tokenize(text))
    if (df.count(t)) v[t] += std::log(static_cast<double>(docs.size()) / df[t]);
  return v;
}

double oracle_cosine(const std::map<std::string, double>& a, const std::map<std::string, double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (auto& [t, w] : a) {
    na += w * w;
    auto it = b.find(t);
    if (it != b.end()) dot += w * it->second;
  }
  for (auto& [t, w] : b) nb += w * w;
  if (na == 0 || nb == 0) return 0;
  return dot / std::sqrt(na * nb);
}

}  // namespace

TEST(Tokenize, LowercasesAndSplits) {
  EXPECT_EQ(tokenize("Flood-WATER, rescue!!  2019"), (std::vector<std::string>{"flood", "water", "rescue", "2019"}));
  EXPECT_TRUE(tokenize(" ,.; ").empty());
}

TEST(TfidfFit, HandComputedIdf) {
  auto m = TfidfModel::fit({"a b", "a"});
  EXPECT_EQ(m.vocabulary().size(), 2u);
  EXPECT_TRUE(m.vocabulary().count("a"));
  EXPECT_TRUE(m.vocabulary().count("b"));
  EXPECT_DOUBLE_EQ(m.idf("a"), 0.0);
  EXPECT_DOUBLE_EQ(m.idf("b"), std::log(2.0));
}

TEST(TfidfFit, SingleDocumentHasZeroIdf) {
  auto m = TfidfModel::fit({"flood water rescue"});
  for (double v : m.idf()) EXPECT_EQ(v, 0.0);
}

TEST(TfidfFit, EmptyCorpusRejected) {
  EXPECT_THROW(TfidfModel::fit({}), Error);
}

TEST(CosineTopk, ThreeDocHandOracle) {
  // idf: flood ln(3/2); water, rescue, fire, damage, donations ln 3.
  // q = (flood ln1.5, rescue ln3)
  // d0 = (flood ln1.5, water ln3, rescue ln3): cos = (ln1.5^2 + ln3^2) / (|q| |d0|) = 0.729302...
  // d2 = (flood ln1.5, donations ln3):         cos = ln1.5^2 / (ln1.5^2 + ln3^2)     = 0.119883...
  // d1 shares nothing:                         cos = 0
  auto m = TfidfModel::fit({"flood water rescue", "fire damage", "flood donations"});
  auto hits = m.cosine_topk("flood rescue", 3);
  ASSERT_EQ(hits.size(), 3u);
  EXPECT_EQ(hits[0].doc, 0u);
  EXPECT_EQ(hits[1].doc, 2u);
  EXPECT_EQ(hits[2].doc, 1u);
  const double l15 = std::log(1.5), l3 = std::log(3.0);
  const double q2 = l15 * l15 + l3 * l3;
  EXPECT_NEAR(hits[0].similarity, q2 / (std::sqrt(q2) * std::sqrt(l15 * l15 + 2 * l3 * l3)), 1e-12);
  EXPECT_NEAR(hits[0].similarity, 0.729302, 1e-6);
  EXPECT_NEAR(hits[1].similarity, l15 * l15 / q2, 1e-12);
  EXPECT_NEAR(hits[1].similarity, 0.119883, 1e-6);
  EXPECT_EQ(hits[2].similarity, 0.0);
}

TEST(CosineTopk, SelfQueryRanksFirst) {
  auto m = TfidfModel::fit({"flood water rescue", "fire damage", "flood donations"});
  auto hits = m.cosine_topk("fire damage", 1);
  EXPECT_EQ(hits[0].doc, 1u);
  EXPECT_NEAR(hits[0].similarity, 1.0, 1e-12);
}

TEST(CosineTopk, DisjointQueryKeepsCorpusOrder) {
  auto m = TfidfModel::fit({"flood water rescue", "fire damage", "flood donations"});
  auto hits = m.cosine_topk("volcano ash", 10);
  ASSERT_EQ(hits.size(), 3u);  // k clamped
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(hits[i].doc, i);
    EXPECT_EQ(hits[i].similarity, 0.0);
  }
}

TEST(CosineTopk, MatchesOracleAndInvariantsOnRandomCorpora) {
  SplitMix64 rng(99);
  const std::vector<std::string> words = {"flood", "fire", "help", "need", "water", "rescue", "quake", "pray",
                                          "donate", "road", "power", "storm"};
  auto random_text = [&] {
    std::string s;
    const auto len = 1 + rng.uniform_index(6);
    for (std::size_t i = 0; i < len; ++i) s += words[rng.uniform_index(words.size())] + " ";
    return s;
  };
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<std::string> docs;
    const auto n = 2 + rng.uniform_index(15);
    for (std::size_t i = 0; i < n; ++i) docs.push_back(random_text());
    auto m = TfidfModel::fit(docs);
    const auto q = random_text();
    auto hits = m.cosine_topk(q, n);
    ASSERT_EQ(hits.size(), n);
    const auto qv = oracle_vector(docs, q);
    for (std::size_t r = 0; r < n; ++r) {
      const double expected = oracle_cosine(qv, oracle_vector(docs, docs[hits[r].doc]));
      EXPECT_NEAR(hits[r].similarity, expected, 1e-12);
      EXPECT_GE(hits[r].similarity, -1e-12);
      EXPECT_LE(hits[r].similarity, 1.0 + 1e-12);
      if (r > 0) {
        EXPECT_GE(hits[r - 1].similarity, hits[r].similarity);
        if (hits[r - 1].similarity == hits[r].similarity) {
          EXPECT_LT(hits[r - 1].doc, hits[r].doc);
        }
      }
    }
    // Symmetry between two fitted document vectors.
    const auto& dv = m.doc_vectors();
    EXPECT_NEAR(sparse_cosine(dv[0], dv[1]), sparse_cosine(dv[1], dv[0]), 1e-15);
    // Duplicating every query token leaves the ranking unchanged.
    auto doubled = m.cosine_topk(q + " " + q, n);
    for (std::size_t r = 0; r < n; ++r) {
      EXPECT_EQ(doubled[r].doc, hits[r].doc);
      EXPECT_NEAR(doubled[r].similarity, hits[r].similarity, 1e-12);
    }
  }
}
