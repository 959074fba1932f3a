#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "crisisrag/eval.hpp"
#include "crisisrag/rng.hpp"
#include "reference_figures.hpp"

using namespace crisisrag;
using namespace crisisrag::testing;
using H = HumanitarianLabel;

namespace {

Prediction pred(H h, EventType e) {
  Prediction p;
  p.humanitarian = h;
  p.event = e;
  return p;
}

// Brute-force metrics by counting TP/FP/FN per class straight from the lists.
struct Brute {
  double acc;
  std::vector<double> p, r, f;
  std::vector<std::size_t> support;
  double macro, weighted;
};

template <class Get>
Brute brute(std::size_t classes, std::size_t n, Get get) {
  Brute b{};
  b.p.assign(classes, 0);
  b.r.assign(classes, 0);
  b.f.assign(classes, 0);
  b.support.assign(classes, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    auto [g, p, ok] = get(i);
    if (ok && g == p) ++correct;
  }
  b.acc = double(correct) / n;
  for (std::size_t c = 0; c < classes; ++c) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      auto [g, p, ok] = get(i);
      const bool gold_c = g == c, pred_c = ok && p == c;
      if (gold_c && pred_c) ++tp;
      if (!gold_c && pred_c) ++fp;
      if (gold_c && !pred_c) ++fn;
    }
    b.support[c] = tp + fn;
    b.p[c] = tp + fp ? double(tp) / (tp + fp) : 0.0;
    b.r[c] = tp + fn ? double(tp) / (tp + fn) : 0.0;
    b.f[c] = b.p[c] + b.r[c] > 0 ? 2 * b.p[c] * b.r[c] / (b.p[c] + b.r[c]) : 0.0;
    b.macro += b.f[c] / classes;
    b.weighted += b.f[c] * b.support[c] / n;
  }
  return b;
}

template <std::size_t K>
void expect_matches(const TaskReport<K>& t, const Brute& b) {
  EXPECT_NEAR(t.accuracy, b.acc, 1e-9);
  for (std::size_t c = 0; c < K; ++c) {
    EXPECT_NEAR(t.per_class[c].precision, b.p[c], 1e-9);
    EXPECT_NEAR(t.per_class[c].recall, b.r[c], 1e-9);
    EXPECT_NEAR(t.per_class[c].f1, b.f[c], 1e-9);
    EXPECT_EQ(t.per_class[c].support, b.support[c]);
  }
  EXPECT_NEAR(t.macro_f1, b.macro, 1e-9);
  EXPECT_NEAR(t.weighted_f1, b.weighted, 1e-9);
}

void random_instance(SplitMix64& rng, std::size_t n, std::vector<GoldLabel>& golds, std::vector<ParseResult>& preds) {
  golds.clear();
  preds.clear();
  for (std::size_t i = 0; i < n; ++i) {
    golds.push_back({static_cast<H>(rng.uniform_index(10)), static_cast<EventType>(rng.uniform_index(4))});
    if (rng.uniform_index(10) == 0)
      preds.push_back(ParseError{});
    else if (rng.uniform_index(2) == 0)
      preds.push_back(pred(golds.back().humanitarian, static_cast<EventType>(rng.uniform_index(4))));
    else
      preds.push_back(pred(static_cast<H>(rng.uniform_index(10)), golds.back().event));
  }
}

}  // namespace

TEST(Score, PerfectPredictions) {
  std::vector<GoldLabel> golds;
  std::vector<ParseResult> preds;
  for (std::size_t i = 0; i < 40; ++i) {
    golds.push_back({static_cast<H>(i % 10), static_cast<EventType>(i % 4)});
    preds.push_back(pred(static_cast<H>(i % 10), static_cast<EventType>(i % 4)));
  }
  auto r = score(golds, preds);
  EXPECT_EQ(r.accuracy_h(), 1.0);
  EXPECT_EQ(r.accuracy_e(), 1.0);
  EXPECT_EQ(r.humanitarian.macro_f1, 1.0);
  EXPECT_EQ(r.humanitarian.trace(), 40u);
  EXPECT_TRUE(top_confusion_pairs(r, 15).empty());
}

TEST(Score, RandomAgainstBruteForce) {
  SplitMix64 rng(50);
  std::vector<GoldLabel> golds;
  std::vector<ParseResult> preds;
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = t == 0 ? 50 : 1 + rng.uniform_index(100);
    random_instance(rng, n, golds, preds);
    auto r = score(golds, preds);
    auto bh = brute(10, n, [&](std::size_t i) {
      const auto* p = std::get_if<Prediction>(&preds[i]);
      return std::tuple{index_of(golds[i].humanitarian), p ? index_of(p->humanitarian) : 0, p != nullptr};
    });
    auto be = brute(4, n, [&](std::size_t i) {
      const auto* p = std::get_if<Prediction>(&preds[i]);
      return std::tuple{index_of(golds[i].event), p ? index_of(p->event) : 0, p != nullptr};
    });
    expect_matches(r.humanitarian, bh);
    expect_matches(r.event, be);

    // Identities.
    EXPECT_NEAR(r.accuracy_h(), double(r.humanitarian.trace()) / n, 1e-15);
    std::size_t total_support = 0;
    double fmin = 1, fmax = 0;
    for (std::size_t c = 0; c < 10; ++c) {
      std::size_t row = r.humanitarian.invalid[c];
      for (auto v : r.humanitarian.confusion[c]) row += v;
      EXPECT_EQ(row, r.humanitarian.per_class[c].support);
      total_support += row;
      if (row) {
        fmin = std::min(fmin, r.humanitarian.per_class[c].f1);
        fmax = std::max(fmax, r.humanitarian.per_class[c].f1);
      }
    }
    EXPECT_EQ(total_support, n);
    EXPECT_GE(r.humanitarian.weighted_f1, fmin - 1e-12);
    EXPECT_LE(r.humanitarian.weighted_f1, fmax + 1e-12);
    std::size_t off = 0;
    for (const auto& p : top_confusion_pairs(r, 100)) off += p.count;
    std::size_t cm_total = 0;
    for (auto& row : r.humanitarian.confusion)
      for (auto v : row) cm_total += v;
    EXPECT_EQ(off, cm_total - r.humanitarian.trace());
  }
}

TEST(Score, NeverPredictedClassIsZeroNotNan) {
  std::vector<GoldLabel> golds = {{H::CautionAndAdvice, EventType::Fire}, {H::NotHumanitarian, EventType::Fire}};
  std::vector<ParseResult> preds = {pred(H::NotHumanitarian, EventType::Fire), pred(H::NotHumanitarian, EventType::Fire)};
  auto r = score(golds, preds);
  const auto& c = r.humanitarian.per_class[index_of(H::CautionAndAdvice)];
  EXPECT_EQ(c.precision, 0.0);
  EXPECT_EQ(c.f1, 0.0);
  for (const auto& s : r.humanitarian.per_class) EXPECT_FALSE(std::isnan(s.f1));
  EXPECT_NEAR(r.humanitarian.macro_f1, (2.0 / 3.0) / 10.0, 1e-12);
}

TEST(Score, ParseFailuresWrongOnBoth) {
  std::vector<GoldLabel> golds = {{H::CautionAndAdvice, EventType::Fire}, {H::NotHumanitarian, EventType::Flood}};
  std::vector<ParseResult> preds = {pred(H::CautionAndAdvice, EventType::Fire), parse_prediction("Support and Solidarity")};
  auto r = score(golds, preds);
  EXPECT_EQ(r.parse_failures, 1u);
  EXPECT_EQ(r.accuracy_h(), 0.5);
  EXPECT_EQ(r.accuracy_e(), 0.5);
  EXPECT_EQ(r.humanitarian.invalid[index_of(H::NotHumanitarian)], 1u);
  const auto csv = confusion_csv(r);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "gold,caution_and_advice,displaced_people_and_evacuations,infrastructure_and_utility_damage,"
            "injured_or_dead_people,missing_or_found_people,not_humanitarian,other_relevant_information,"
            "requests_or_urgent_needs,rescue_volunteering_or_donation_effort,sympathy_and_support,invalid");
}

TEST(Score, Guards) {
  std::vector<GoldLabel> golds(2);
  std::vector<ParseResult> preds(1);
  try {
    score(golds, preds);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::LengthMismatch);
  }
  EXPECT_THROW(score({}, {}), Error);
}

TEST(ConfusionPairs, BidirectionalCells) {
  std::array<std::array<std::size_t, 10>, 10> cm{};
  const auto o = index_of(H::OtherRelevantInformation), nh = index_of(H::NotHumanitarian);
  cm[o][nh] = 277;
  cm[nh][o] = 277;
  cm[0][1] = 50;
  auto pairs = top_confusion_pairs(cm, 15, H::OtherRelevantInformation);
  ASSERT_EQ(pairs.size(), 3u);
  EXPECT_EQ(pairs[0].gold, H::NotHumanitarian);  // tie broken by gold name
  EXPECT_EQ(pairs[1].gold, H::OtherRelevantInformation);
  EXPECT_EQ(pairs[0].count + pairs[1].count, 554u);
  EXPECT_TRUE(pairs[0].involves_focus && pairs[1].involves_focus);
  EXPECT_FALSE(pairs[2].involves_focus);
  EXPECT_EQ(top_confusion_pairs(cm, 1).size(), 1u);
}

TEST(ConfusionPairs, HandThreeByThree) {
  // Classes 0..2 only. Off-diagonals: (0,1)=4 (0,2)=1 (1,0)=4 (1,2)=7 (2,0)=0 (2,1)=2
  std::array<std::array<std::size_t, 10>, 10> cm{};
  cm[0] = {9, 4, 1};
  cm[1] = {4, 8, 7};
  cm[2] = {0, 2, 5};
  auto pairs = top_confusion_pairs(cm, 10);
  std::vector<std::tuple<std::size_t, std::size_t, std::size_t>> got;
  for (auto& p : pairs) got.emplace_back(index_of(p.gold), index_of(p.predicted), p.count);
  EXPECT_EQ(got, (std::vector<std::tuple<std::size_t, std::size_t, std::size_t>>{
                     {1, 2, 7}, {0, 1, 4}, {1, 0, 4}, {2, 1, 2}, {0, 2, 1}}));
}

TEST(Ceiling, ReferenceRowsReproduced) {
  auto base = reference_base_report();
  auto relabels = reference_relabels();
  auto c = correction_ceiling(base, relabels);
  ASSERT_EQ(c.pairs.size(), kConfusionPairRows.size());
  for (const auto& row : kConfusionPairRows) {
    auto it = std::find_if(c.pairs.begin(), c.pairs.end(),
                           [&](auto& p) { return p.gold == row.gold && p.predicted == row.predicted; });
    ASSERT_NE(it, c.pairs.end());
    EXPECT_EQ(it->frequency, row.frequency);
    EXPECT_NEAR(std::round(it->oracle_accuracy * 10000) / 100, row.printed_accuracy, 1e-9);
    EXPECT_EQ(it->corrected, row.printed_corrected);
    EXPECT_EQ(corrected_count(row.frequency, row.printed_accuracy / 100), row.printed_corrected);
  }
  EXPECT_EQ(c.total_corrected, 290u);  // the six listed rows only
}

TEST(Ceiling, AggregateArithmetic) {
  const double ceiling = ceiling_accuracy(kBaseAccuracy, kPrintedTotalCorrected, kTestSetSize);
  EXPECT_NEAR(std::round(ceiling * 10000) / 100, kPrintedCeiling, 1e-9);
  EXPECT_NEAR(std::round((ceiling - kBaseAccuracy) * 10000) / 100, kPrintedDelta, 1e-9);
}

TEST(Ceiling, EmptyAndPerfect) {
  auto base = reference_base_report();
  auto c = correction_ceiling(base, {});
  EXPECT_EQ(c.ceiling_accuracy, kBaseAccuracy);
  EXPECT_EQ(c.total_corrected, 0u);

  // Oracle right on every error of a small report: ceiling is exactly 1.
  std::vector<GoldLabel> golds = {{H::CautionAndAdvice, EventType::Fire},
                                  {H::NotHumanitarian, EventType::Fire},
                                  {H::NotHumanitarian, EventType::Fire},
                                  {H::SympathyAndSupport, EventType::Fire}};
  std::vector<ParseResult> preds = {pred(H::CautionAndAdvice, EventType::Fire), pred(H::SympathyAndSupport, EventType::Fire),
                                    pred(H::SympathyAndSupport, EventType::Fire), pred(H::CautionAndAdvice, EventType::Fire)};
  auto r = score(golds, preds);
  std::vector<OracleRelabel> all = {{"1", H::NotHumanitarian, H::SympathyAndSupport, H::NotHumanitarian},
                                    {"2", H::SympathyAndSupport, H::CautionAndAdvice, H::SympathyAndSupport}};
  EXPECT_EQ(correction_ceiling(r, all).ceiling_accuracy, 1.0);
}

TEST(Ceiling, RelabelMustBeAnError) {
  auto base = reference_base_report();
  std::vector<OracleRelabel> bad = {{"x", H::CautionAndAdvice, H::CautionAndAdvice, H::CautionAndAdvice}};
  try {
    correction_ceiling(base, bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::RelabelNotAnError);
  }
  bad = {{"y", H::CautionAndAdvice, H::SympathyAndSupport, H::CautionAndAdvice}};  // empty cell
  EXPECT_THROW(correction_ceiling(base, bad), Error);
}

TEST(Cost, PerPoint) {
  EXPECT_NEAR(cost_per_point(22.0, 2.59), 8.49, 0.005);
  EXPECT_EQ(cost_per_point(10.0, 10.0), 1.0);
  try {
    cost_per_point(5.0, 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ZeroDelta);
  }
}

TEST(Relabels, LoadJsonl) {
  std::istringstream in(
      R"({"sample_id": 17, "gold": "not_humanitarian", "model_pred": "other_relevant_information", "oracle_pred": "not_humanitarian"})"
      "\n");
  auto r = load_relabels(in);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0].sample_id, "17");
  EXPECT_EQ(r[0].model_pred, H::OtherRelevantInformation);
  std::istringstream bad(R"({"sample_id": "1", "gold": "nope", "model_pred": "x", "oracle_pred": "y"})");
  EXPECT_THROW(load_relabels(bad), Error);
}
