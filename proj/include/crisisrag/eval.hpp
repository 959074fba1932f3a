#pragma once

// Dual-task scoring, confusion-pair extraction and the oracle correction
// ceiling.
//
// Per class c: precision = TP/(TP+FP), recall = TP/(TP+FN), F1 the harmonic
// mean; every 0/0 is taken as 0. Macro-F1 averages all classes of the label
// space with equal weight, weighted-F1 weights by gold support. A completion
// that failed to parse predicts no class: it is wrong on both tasks, adds to
// FN of its gold class and is tallied in the `invalid` column.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "crisisrag/errors.hpp"
#include "crisisrag/labels.hpp"
#include "crisisrag/schema.hpp"

namespace crisisrag {

struct GoldLabel {
  HumanitarianLabel humanitarian{};
  EventType event{};
};

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

template <std::size_t K>
struct TaskReport {
  double accuracy = 0.0;
  std::array<ClassScores, K> per_class{};
  double macro_f1 = 0.0;
  double weighted_f1 = 0.0;
  std::array<std::array<std::size_t, K>, K> confusion{};  // [gold][predicted]
  std::array<std::size_t, K> invalid{};                   // unparseable, by gold class

  std::size_t trace() const {
    std::size_t t = 0;
    for (std::size_t i = 0; i < K; ++i) t += confusion[i][i];
    return t;
  }
};

struct EvalReport {
  std::size_t n = 0;
  std::size_t parse_failures = 0;
  TaskReport<kNumHumanitarian> humanitarian;
  TaskReport<kNumEventTypes> event;

  double accuracy_h() const { return humanitarian.accuracy; }
  double accuracy_e() const { return event.accuracy; }
};

namespace detail {

inline double safe_div(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

template <std::size_t K>
void finish_task(TaskReport<K>& t, std::size_t n) {
  std::array<std::size_t, K> predicted{};
  for (std::size_t g = 0; g < K; ++g)
    for (std::size_t p = 0; p < K; ++p) predicted[p] += t.confusion[g][p];
  double macro = 0.0, weighted = 0.0;
  for (std::size_t c = 0; c < K; ++c) {
    auto& s = t.per_class[c];
    std::size_t row = t.invalid[c];
    for (std::size_t p = 0; p < K; ++p) row += t.confusion[c][p];
    s.support = row;
    const double tp = static_cast<double>(t.confusion[c][c]);
    s.precision = safe_div(tp, static_cast<double>(predicted[c]));
    s.recall = safe_div(tp, static_cast<double>(s.support));
    s.f1 = safe_div(2.0 * s.precision * s.recall, s.precision + s.recall);
    macro += s.f1;
    weighted += s.f1 * static_cast<double>(s.support);
  }
  t.macro_f1 = macro / static_cast<double>(K);
  t.weighted_f1 = weighted / static_cast<double>(n);
  t.accuracy = static_cast<double>(t.trace()) / static_cast<double>(n);
}

}  // namespace detail

inline EvalReport score(std::span<const GoldLabel> golds, std::span<const ParseResult> preds) {
  if (golds.size() != preds.size())
    throw Error(Errc::LengthMismatch, std::to_string(golds.size()) + " gold labels vs " +
                                          std::to_string(preds.size()) + " predictions");
  if (golds.empty()) throw Error(Errc::EmptyCorpus, "nothing to score");
  EvalReport r;
  r.n = golds.size();
  for (std::size_t i = 0; i < golds.size(); ++i) {
    const auto gh = index_of(golds[i].humanitarian);
    const auto ge = index_of(golds[i].event);
    if (const auto* p = std::get_if<Prediction>(&preds[i])) {
      ++r.humanitarian.confusion[gh][index_of(p->humanitarian)];
      ++r.event.confusion[ge][index_of(p->event)];
    } else {
      ++r.parse_failures;
      ++r.humanitarian.invalid[gh];
      ++r.event.invalid[ge];
    }
  }
  detail::finish_task(r.humanitarian, r.n);
  detail::finish_task(r.event, r.n);
  return r;
}

// ---------------------------------------------------------------------------
// Confusion pairs
// ---------------------------------------------------------------------------

struct ConfusionPair {
  HumanitarianLabel gold{};
  HumanitarianLabel predicted{};
  std::size_t count = 0;
  bool involves_focus = false;

  friend bool operator==(const ConfusionPair&, const ConfusionPair&) = default;
};

/// Off-diagonal humanitarian cells with a nonzero count, largest first, ties by
/// (gold, predicted) name order; at most `limit` pairs.
inline std::vector<ConfusionPair> top_confusion_pairs(
    const std::array<std::array<std::size_t, kNumHumanitarian>, kNumHumanitarian>& confusion, std::size_t limit,
    std::optional<HumanitarianLabel> focus = std::nullopt) {
  std::vector<ConfusionPair> pairs;
  for (std::size_t g = 0; g < kNumHumanitarian; ++g)
    for (std::size_t p = 0; p < kNumHumanitarian; ++p) {
      if (g == p || confusion[g][p] == 0) continue;
      ConfusionPair c{static_cast<HumanitarianLabel>(g), static_cast<HumanitarianLabel>(p), confusion[g][p], false};
      c.involves_focus = focus && (c.gold == *focus || c.predicted == *focus);
      pairs.push_back(c);
    }
  std::stable_sort(pairs.begin(), pairs.end(), [](const ConfusionPair& a, const ConfusionPair& b) {
    if (a.count != b.count) return a.count > b.count;
    return std::tie(a.gold, a.predicted) < std::tie(b.gold, b.predicted);
  });
  if (pairs.size() > limit) pairs.resize(limit);
  return pairs;
}

inline std::vector<ConfusionPair> top_confusion_pairs(const EvalReport& report, std::size_t limit,
                                                      std::optional<HumanitarianLabel> focus = std::nullopt) {
  return top_confusion_pairs(report.humanitarian.confusion, limit, focus);
}

// ---------------------------------------------------------------------------
// Oracle correction ceiling
// ---------------------------------------------------------------------------

struct OracleRelabel {
  std::string sample_id;
  HumanitarianLabel gold{};
  HumanitarianLabel model_pred{};
  HumanitarianLabel oracle_pred{};
};

struct PairCorrection {
  HumanitarianLabel gold{};
  HumanitarianLabel predicted{};
  std::size_t frequency = 0;       // confusion cell in the base report
  std::size_t relabelled = 0;
  std::size_t oracle_correct = 0;
  double oracle_accuracy = 0.0;
  std::size_t corrected = 0;       // round(frequency * oracle_accuracy)
};

struct CeilingAnalysis {
  std::vector<PairCorrection> pairs;
  double oracle_accuracy_on_errors = 0.0;
  std::size_t total_corrected = 0;
  double base_accuracy = 0.0;
  double ceiling_accuracy = 0.0;
  double delta = 0.0;
};

/// Expected fixes for one pair: frequency x accuracy, rounded half away from
/// zero.
inline std::size_t corrected_count(std::size_t frequency, double oracle_accuracy) {
  return static_cast<std::size_t>(std::round(static_cast<double>(frequency) * oracle_accuracy));
}

inline double ceiling_accuracy(double base_accuracy, std::size_t total_corrected, std::size_t n) {
  if (n == 0) throw Error(Errc::EmptyCorpus, "n must be positive");
  return base_accuracy + static_cast<double>(total_corrected) / static_cast<double>(n);
}

/// Groups the relabels by (gold, model prediction), measures the oracle's
/// accuracy on each group and scales it by that cell's frequency in the base
/// confusion matrix.
inline CeilingAnalysis correction_ceiling(const EvalReport& base, std::span<const OracleRelabel> relabels) {
  CeilingAnalysis out;
  out.base_accuracy = base.accuracy_h();
  std::map<std::pair<HumanitarianLabel, HumanitarianLabel>, PairCorrection> groups;
  std::size_t correct = 0;
  for (const auto& r : relabels) {
    const auto& cell = base.humanitarian.confusion[index_of(r.gold)][index_of(r.model_pred)];
    if (r.gold == r.model_pred || cell == 0)
      throw Error(Errc::RelabelNotAnError, "sample " + r.sample_id + " is not a model error in the base report");
    auto& g = groups[{r.gold, r.model_pred}];
    g.gold = r.gold;
    g.predicted = r.model_pred;
    g.frequency = cell;
    ++g.relabelled;
    if (r.oracle_pred == r.gold) {
      ++g.oracle_correct;
      ++correct;
    }
  }
  for (auto& [_, g] : groups) {
    g.oracle_accuracy = static_cast<double>(g.oracle_correct) / static_cast<double>(g.relabelled);
    g.corrected = corrected_count(g.frequency, g.oracle_accuracy);
    out.total_corrected += g.corrected;
    out.pairs.push_back(g);
  }
  std::stable_sort(out.pairs.begin(), out.pairs.end(),
                   [](const PairCorrection& a, const PairCorrection& b) { return a.frequency > b.frequency; });
  out.oracle_accuracy_on_errors =
      relabels.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(relabels.size());
  out.ceiling_accuracy = ceiling_accuracy(out.base_accuracy, out.total_corrected, base.n);
  out.delta = out.ceiling_accuracy - out.base_accuracy;
  return out;
}

/// Cost of one accuracy point: total_cost / delta_points.
inline double cost_per_point(double total_cost, double delta_accuracy_points) {
  if (!(delta_accuracy_points > 0.0)) throw Error(Errc::ZeroDelta, "accuracy gain must be positive");
  return total_cost / delta_accuracy_points;
}

inline std::vector<OracleRelabel> load_relabels(std::istream& in, std::string_view source = "<stream>") {
  std::vector<OracleRelabel> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    const std::string where = std::string(source) + ":" + std::to_string(lineno);
    if (j.is_discarded() || !j.is_object()) throw Error(Errc::MalformedRecord, where + ": not a JSON object");
    OracleRelabel r;
    const auto& id = j.at("sample_id");
    r.sample_id = id.is_string() ? id.get<std::string>() : id.dump();
    r.gold = parse_humanitarian(j.at("gold").get<std::string>());
    r.model_pred = parse_humanitarian(j.at("model_pred").get<std::string>());
    r.oracle_pred = parse_humanitarian(j.at("oracle_pred").get<std::string>());
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<OracleRelabel> load_relabels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  return load_relabels(in, path.string());
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

template <std::size_t K>
nlohmann::ordered_json task_to_json(const TaskReport<K>& t, const std::array<std::string_view, K>& names) {
  nlohmann::ordered_json j;
  j["accuracy"] = t.accuracy;
  j["macro_f1"] = t.macro_f1;
  j["weighted_f1"] = t.weighted_f1;
  for (std::size_t c = 0; c < K; ++c) {
    const auto& s = t.per_class[c];
    j["per_class"][std::string(names[c])] = {
        {"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}, {"support", s.support}};
  }
  auto rows = nlohmann::ordered_json::array();
  for (std::size_t g = 0; g < K; ++g) rows.push_back(t.confusion[g]);
  j["confusion"] = std::move(rows);
  j["invalid"] = t.invalid;
  return j;
}

inline nlohmann::ordered_json to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["n"] = r.n;
  j["parse_failures"] = r.parse_failures;
  j["accuracy_h"] = r.accuracy_h();
  j["accuracy_e"] = r.accuracy_e();
  j["humanitarian"] = task_to_json(r.humanitarian, kHumanitarianNames);
  j["event"] = task_to_json(r.event, kEventNames);
  return j;
}

inline nlohmann::ordered_json to_json(const std::vector<ConfusionPair>& pairs) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& p : pairs)
    arr.push_back({{"gold", to_string(p.gold)},
                   {"predicted", to_string(p.predicted)},
                   {"count", p.count},
                   {"involves_focus", p.involves_focus}});
  return arr;
}

inline nlohmann::ordered_json to_json(const CeilingAnalysis& c) {
  nlohmann::ordered_json j;
  auto arr = nlohmann::ordered_json::array();
  for (const auto& p : c.pairs)
    arr.push_back({{"gold", to_string(p.gold)},
                   {"predicted", to_string(p.predicted)},
                   {"frequency", p.frequency},
                   {"relabelled", p.relabelled},
                   {"oracle_correct", p.oracle_correct},
                   {"oracle_accuracy", p.oracle_accuracy},
                   {"corrected", p.corrected}});
  j["pairs"] = std::move(arr);
  j["oracle_accuracy_on_errors"] = c.oracle_accuracy_on_errors;
  j["total_corrected"] = c.total_corrected;
  j["base_accuracy"] = c.base_accuracy;
  j["ceiling_accuracy"] = c.ceiling_accuracy;
  j["delta"] = c.delta;
  return j;
}

/// Humanitarian confusion matrix as CSV: header "gold,<labels...>,invalid",
/// one row per gold label.
inline std::string confusion_csv(const EvalReport& r) {
  std::ostringstream out;
  out << "gold";
  for (auto name : kHumanitarianNames) out << ',' << name;
  out << ",invalid\n";
  for (std::size_t g = 0; g < kNumHumanitarian; ++g) {
    out << kHumanitarianNames[g];
    for (std::size_t p = 0; p < kNumHumanitarian; ++p) out << ',' << r.humanitarian.confusion[g][p];
    out << ',' << r.humanitarian.invalid[g] << '\n';
  }
  return out.str();
}

}  // namespace crisisrag
