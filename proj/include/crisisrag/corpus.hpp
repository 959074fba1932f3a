#pragma once

// Corpus ingestion: raw TSV label/text files -> joined, normalized records ->
// five-field JSONL (tweet_id, tweet, label, event_name, event_type).

#include <algorithm>
#include <array>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "crisisrag/errors.hpp"
#include "crisisrag/labels.hpp"

namespace crisisrag {

struct TweetRecord {
  std::string tweet_id;
  std::string tweet;
  HumanitarianLabel label{};
  std::string event_name;
  EventType event_type{};
  Split split = Split::Train;

  friend bool operator==(const TweetRecord&, const TweetRecord&) = default;
};

using Corpus = std::vector<TweetRecord>;

struct LabelRow {
  std::string tweet_id;
  HumanitarianLabel label{};
  std::string event_name;

  friend bool operator==(const LabelRow&, const LabelRow&) = default;
};

struct JoinResult {
  Corpus records;
  std::vector<std::string> orphan_ids;  // labelled ids with no usable text
};

struct CorpusStats {
  // counts[label][event][split]
  std::array<std::array<std::array<std::size_t, 3>, kNumEventTypes>, kNumHumanitarian> counts{};
  std::array<std::size_t, 3> split_totals{};
  std::array<std::size_t, kNumHumanitarian> label_totals{};
  std::size_t total = 0;
  double imbalance_ratio = 1.0;
};

namespace detail {

inline bool is_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return c >= '0' && c <= '9'; });
}

inline bool has_visible_char(std::string_view s) {
  return std::any_of(s.begin(), s.end(), [](unsigned char c) { return !std::isspace(c); });
}

inline std::vector<std::string> split_tabs(std::string_view line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  for (;;) {
    auto tab = line.find('\t', start);
    cells.emplace_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return cells;
}

inline bool read_line(std::istream& in, std::string& line) {
  if (!std::getline(in, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

inline std::size_t find_column(const std::vector<std::string>& header,
                               std::initializer_list<std::string_view> names, std::string_view source) {
  for (auto name : names) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it != header.end()) return static_cast<std::size_t>(it - header.begin());
  }
  throw Error(Errc::MissingColumn, std::string(source) + ": no column named '" + std::string(*names.begin()) + "'");
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  return in;
}

}  // namespace detail

/// Maps an event name such as "ecuador_earthquake_2016" to its disaster type
/// by keyword containment. Keywords are tried in the fixed order earthquake,
/// fire, wildfire, flood, hurricane, cyclone; the first hit wins.
inline EventType normalize_event(std::string_view event_name) {
  static constexpr std::array<std::pair<std::string_view, EventType>, 6> kTable{{
      {"earthquake", EventType::Earthquake},
      {"fire", EventType::Fire},
      {"wildfire", EventType::Fire},
      {"flood", EventType::Flood},
      {"hurricane", EventType::Hurricane},
      {"cyclone", EventType::Hurricane},
  }};
  for (const auto& [keyword, type] : kTable)
    if (event_name.find(keyword) != std::string_view::npos) return type;
  throw Error(Errc::UnmappableEvent, "'" + std::string(event_name) + "' contains no disaster keyword");
}

/// Label file: header row with tweet_id, class_label (or label) and
/// event_name (or event) columns in any order.
inline std::vector<LabelRow> parse_label_tsv(std::istream& in, std::string_view source = "<stream>") {
  std::string line;
  if (!detail::read_line(in, line)) throw Error(Errc::MissingColumn, std::string(source) + ": missing header row");
  const auto header = detail::split_tabs(line);
  const auto id_col = detail::find_column(header, {"tweet_id"}, source);
  const auto label_col = detail::find_column(header, {"class_label", "label"}, source);
  const auto event_col = detail::find_column(header, {"event_name", "event"}, source);
  const auto needed = std::max({id_col, label_col, event_col}) + 1;

  std::vector<LabelRow> rows;
  std::unordered_set<std::string> seen;
  std::size_t row_index = 0;
  while (detail::read_line(in, line)) {
    ++row_index;
    if (line.empty()) continue;
    auto cells = detail::split_tabs(line);
    const std::string where = std::string(source) + " row " + std::to_string(row_index);
    if (cells.size() < needed) throw Error(Errc::MalformedRecord, where + ": too few columns");
    if (!detail::is_digits(cells[id_col]))
      throw Error(Errc::MalformedRecord, where + ": tweet_id '" + cells[id_col] + "' is not a digit string");
    auto label = humanitarian_from_string(cells[label_col]);
    if (!label) throw Error(Errc::UnknownLabel, where + ": '" + cells[label_col] + "'");
    if (!seen.insert(cells[id_col]).second) throw Error(Errc::DuplicateId, where + ": " + cells[id_col]);
    rows.push_back({cells[id_col], *label, cells[event_col]});
  }
  return rows;
}

inline std::vector<LabelRow> parse_label_tsv(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  return parse_label_tsv(in, path.string());
}

/// Event text file: header row with tweet_id and tweet_text (or tweet/text).
/// Later occurrences of an id already present are ignored.
inline void parse_text_tsv(std::istream& in, std::unordered_map<std::string, std::string>& texts,
                           std::string_view source = "<stream>") {
  std::string line;
  if (!detail::read_line(in, line)) throw Error(Errc::MissingColumn, std::string(source) + ": missing header row");
  const auto header = detail::split_tabs(line);
  const auto id_col = detail::find_column(header, {"tweet_id"}, source);
  const auto text_col = detail::find_column(header, {"tweet_text", "tweet", "text"}, source);
  const auto needed = std::max(id_col, text_col) + 1;
  while (detail::read_line(in, line)) {
    if (line.empty()) continue;
    auto cells = detail::split_tabs(line);
    if (cells.size() < needed) continue;
    texts.try_emplace(cells[id_col], cells[text_col]);
  }
}

inline void parse_text_tsv(const std::filesystem::path& path, std::unordered_map<std::string, std::string>& texts) {
  auto in = detail::open_input(path);
  parse_text_tsv(in, texts, path.string());
}

/// Joins label rows with tweet texts. Ids without a non-blank text are
/// reported in orphan_ids and left out of the records.
inline JoinResult join_records(const std::vector<LabelRow>& labels,
                               const std::unordered_map<std::string, std::string>& texts, Split split) {
  JoinResult out;
  out.records.reserve(labels.size());
  for (const auto& row : labels) {
    auto it = texts.find(row.tweet_id);
    if (it == texts.end() || !detail::has_visible_char(it->second)) {
      out.orphan_ids.push_back(row.tweet_id);
      continue;
    }
    out.records.push_back({row.tweet_id, it->second, row.label, row.event_name, normalize_event(row.event_name), split});
  }
  return out;
}

inline nlohmann::ordered_json to_json(const TweetRecord& r) {
  nlohmann::ordered_json j;
  j["tweet_id"] = r.tweet_id;
  j["tweet"] = r.tweet;
  j["label"] = std::string(to_string(r.label));
  j["event_name"] = r.event_name;
  j["event_type"] = std::string(to_string(r.event_type));
  return j;
}

inline std::string to_jsonl_line(const TweetRecord& r) {
  return to_json(r).dump(-1, ' ', false, nlohmann::ordered_json::error_handler_t::replace);
}

inline void write_jsonl(std::ostream& out, const Corpus& records) {
  for (const auto& r : records) out << to_jsonl_line(r) << '\n';
}

inline void write_jsonl(const std::filesystem::path& path, const Corpus& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  write_jsonl(out, records);
}

/// Joins and writes in one step; the returned orphans are the ids that could
/// not be emitted.
inline JoinResult join_and_emit(const std::vector<LabelRow>& labels,
                                const std::unordered_map<std::string, std::string>& texts, Split split,
                                std::ostream& out) {
  auto result = join_records(labels, texts, split);
  write_jsonl(out, result.records);
  return result;
}

inline TweetRecord record_from_json(const nlohmann::json& j, Split split, std::string_view where) {
  auto field = [&](const char* name) -> std::string {
    auto it = j.find(name);
    if (it == j.end() || !it->is_string())
      throw Error(Errc::MalformedRecord, std::string(where) + ": missing string field '" + name + "'");
    return it->get<std::string>();
  };
  TweetRecord r;
  r.tweet_id = field("tweet_id");
  r.tweet = field("tweet");
  const auto label = field("label");
  r.event_name = field("event_name");
  const auto event = field("event_type");
  r.split = split;
  if (!detail::is_digits(r.tweet_id))
    throw Error(Errc::MalformedRecord, std::string(where) + ": tweet_id is not a digit string");
  if (!detail::has_visible_char(r.tweet)) throw Error(Errc::MalformedRecord, std::string(where) + ": blank tweet");
  auto l = humanitarian_from_string(label);
  if (!l) throw Error(Errc::UnknownLabel, std::string(where) + ": '" + label + "'");
  auto e = event_from_string(event);
  if (!e) throw Error(Errc::UnknownLabel, std::string(where) + ": event_type '" + event + "'");
  r.label = *l;
  r.event_type = *e;
  return r;
}

inline Corpus read_jsonl(std::istream& in, Split split, std::string_view source = "<stream>") {
  Corpus out;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (detail::read_line(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = std::string(source) + ":" + std::to_string(lineno);
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error(Errc::MalformedRecord, where + ": not a JSON object");
    auto r = record_from_json(j, split, where);
    if (!seen.insert(r.tweet_id).second) throw Error(Errc::DuplicateId, where + ": " + r.tweet_id);
    out.push_back(std::move(r));
  }
  return out;
}

inline Corpus read_jsonl(const std::filesystem::path& path, Split split) {
  auto in = detail::open_input(path);
  return read_jsonl(in, split, path.string());
}

/// Ratio of the largest to the smallest per-label total, over labels present.
inline double imbalance_ratio(std::span<const std::size_t> label_totals) {
  std::size_t hi = 0, lo = 0;
  for (auto t : label_totals) {
    if (t == 0) continue;
    hi = std::max(hi, t);
    lo = lo == 0 ? t : std::min(lo, t);
  }
  if (lo == 0) throw Error(Errc::EmptyCorpus, "no label has any members");
  return static_cast<double>(hi) / static_cast<double>(lo);
}

inline CorpusStats compute_stats(const Corpus& corpus) {
  if (corpus.empty()) throw Error(Errc::EmptyCorpus, "cannot compute statistics of an empty corpus");
  CorpusStats s;
  for (const auto& r : corpus) {
    ++s.counts[index_of(r.label)][index_of(r.event_type)][index_of(r.split)];
    ++s.split_totals[index_of(r.split)];
    ++s.label_totals[index_of(r.label)];
  }
  s.total = corpus.size();
  s.imbalance_ratio = imbalance_ratio(s.label_totals);
  return s;
}

inline nlohmann::ordered_json to_json(const CorpusStats& s) {
  nlohmann::ordered_json j;
  j["total"] = s.total;
  for (std::size_t sp = 0; sp < 3; ++sp) j["split_totals"][std::string(kSplitNames[sp])] = s.split_totals[sp];
  for (std::size_t l = 0; l < kNumHumanitarian; ++l)
    j["label_totals"][std::string(kHumanitarianNames[l])] = s.label_totals[l];
  j["imbalance_ratio"] = s.imbalance_ratio;
  auto& cells = j["counts"] = nlohmann::ordered_json::array();
  for (std::size_t l = 0; l < kNumHumanitarian; ++l)
    for (std::size_t e = 0; e < kNumEventTypes; ++e)
      for (std::size_t sp = 0; sp < 3; ++sp)
        if (s.counts[l][e][sp] != 0)
          cells.push_back({{"label", kHumanitarianNames[l]},
                           {"event_type", kEventNames[e]},
                           {"split", kSplitNames[sp]},
                           {"count", s.counts[l][e][sp]}});
  return j;
}

}  // namespace crisisrag
