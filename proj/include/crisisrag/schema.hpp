#pragma once

// Strict single-object output contract for dual-task completions.
//
// A completion is accepted only when, after trimming surrounding whitespace,
// it is exactly one JSON object with exactly the keys "humanitarian_label" and
// "event_type", each holding a member of the corresponding closed label set.
// Values are compared byte-for-byte: no case folding, no fuzzy matching.

#include <array>
#include <cctype>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include <nlohmann/json.hpp>

#include "crisisrag/labels.hpp"

namespace crisisrag {

struct Prediction {
  HumanitarianLabel humanitarian{};
  EventType event{};
  std::string raw;
  std::optional<double> confidence;
};

enum class ParseErrorKind {
  FormatViolation,      // no JSON object, extra content, wrong keys
  LabelViolation,       // right shape, value outside the closed set
  RepetitionViolation,  // format violation caused by echoing the input
};

constexpr std::string_view to_string(ParseErrorKind k) {
  switch (k) {
    case ParseErrorKind::FormatViolation: return "FormatViolation";
    case ParseErrorKind::LabelViolation: return "LabelViolation";
    case ParseErrorKind::RepetitionViolation: return "RepetitionViolation";
  }
  return "FormatViolation";
}

struct ParseError {
  ParseErrorKind kind = ParseErrorKind::FormatViolation;
  std::string detail;
  std::string field;  // LabelViolation only
  std::string value;  // LabelViolation only
  std::string raw;

  bool is_format_violation() const { return kind != ParseErrorKind::LabelViolation; }
};

using ParseResult = std::variant<Prediction, ParseError>;

inline bool parsed_ok(const ParseResult& r) { return std::holds_alternative<Prediction>(r); }

namespace detail {

inline std::string_view trim_ascii(std::string_view s) {
  auto ws = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
  while (!s.empty() && ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && ws(s.back())) s.remove_suffix(1);
  return s;
}

inline ParseError format_error(std::string detail, std::string_view raw, std::string_view echoed_input) {
  ParseError e;
  e.kind = ParseErrorKind::FormatViolation;
  e.detail = std::move(detail);
  e.raw = std::string(raw);
  auto needle = trim_ascii(echoed_input);
  if (!needle.empty() && raw.find(needle) != std::string_view::npos) {
    e.kind = ParseErrorKind::RepetitionViolation;
    e.detail += " (input echoed)";
  }
  return e;
}

}  // namespace detail

/// Parses a completion under the strict contract. When `echoed_input` is the
/// tweet that was classified, format violations that contain it verbatim are
/// reported as RepetitionViolation.
inline ParseResult parse_prediction(std::string_view completion, std::string_view echoed_input = {}) {
  using nlohmann::json;
  const std::string_view body = detail::trim_ascii(completion);
  if (body.empty()) return detail::format_error("empty completion", completion, echoed_input);
  if (body.front() != '{' || body.back() != '}')
    return detail::format_error("completion is not a single JSON object", completion, echoed_input);

  int top_level_keys = 0;
  bool duplicate_key = false;
  std::array<bool, 2> seen{false, false};
  json::parser_callback_t cb = [&](int depth, json::parse_event_t event, json& parsed) {
    if (event == json::parse_event_t::key && depth == 1) {
      ++top_level_keys;
      const auto& k = parsed.get_ref<const std::string&>();
      std::size_t slot = k == "humanitarian_label" ? 0 : k == "event_type" ? 1 : 2;
      if (slot < 2) {
        if (seen[slot]) duplicate_key = true;
        seen[slot] = true;
      }
    }
    return true;
  };

  json doc = json::parse(body.begin(), body.end(), cb, /*allow_exceptions=*/false);
  if (doc.is_discarded())
    return detail::format_error("not valid JSON or trailing content after the object", completion,
                                echoed_input);
  if (!doc.is_object()) return detail::format_error("top-level value is not an object", completion, echoed_input);
  if (duplicate_key) return detail::format_error("duplicate key", completion, echoed_input);
  if (top_level_keys != 2 || !seen[0] || !seen[1])
    return detail::format_error("object must have exactly the keys humanitarian_label and event_type",
                                completion, echoed_input);

  auto label_error = [&](std::string field, const json& v) {
    ParseError e;
    e.kind = ParseErrorKind::LabelViolation;
    e.field = std::move(field);
    e.value = v.is_string() ? v.get<std::string>() : v.dump(-1, ' ', false, json::error_handler_t::replace);
    e.detail = "value '" + e.value + "' is not in the closed set for " + e.field;
    e.raw = std::string(completion);
    return e;
  };

  const json& h = doc["humanitarian_label"];
  const json& ev = doc["event_type"];
  std::optional<HumanitarianLabel> hl;
  std::optional<EventType> et;
  if (h.is_string()) hl = humanitarian_from_string(h.get_ref<const std::string&>());
  if (!hl) return label_error("humanitarian_label", h);
  if (ev.is_string()) et = event_from_string(ev.get_ref<const std::string&>());
  if (!et) return label_error("event_type", ev);

  Prediction p;
  p.humanitarian = *hl;
  p.event = *et;
  p.raw = std::string(completion);
  return p;
}

/// Canonical answer text, the exact form used for assistant demonstrations.
inline std::string serialize_answer(HumanitarianLabel h, EventType e) {
  std::string out = "{\"humanitarian_label\": \"";
  out += to_string(h);
  out += "\", \"event_type\": \"";
  out += to_string(e);
  out += "\"}";
  return out;
}

// ---------------------------------------------------------------------------
// Lenient diagnostics. Never used for scoring.
// ---------------------------------------------------------------------------

namespace detail {
inline std::string fold_label(std::string_view s) {
  std::string out;
  bool pending_sep = false;
  for (unsigned char c : trim_ascii(s)) {
    if (std::isalnum(c)) {
      if (pending_sep && !out.empty()) out += '_';
      pending_sep = false;
      out += static_cast<char>(std::tolower(c));
    } else {
      pending_sep = true;
    }
  }
  return out;
}
}  // namespace detail

/// Recovers a prediction from a completion that failed strict parsing when a
/// forgiving reading exists: the first balanced-looking object inside the text,
/// labels case-folded with separators collapsed to underscores.
inline std::optional<Prediction> lenient_parse(std::string_view completion) {
  using nlohmann::json;
  auto open = completion.find('{');
  auto close = completion.rfind('}');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open) return std::nullopt;
  auto inner = completion.substr(open, close - open + 1);
  json doc = json::parse(inner.begin(), inner.end(), nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) return std::nullopt;
  auto h = doc.find("humanitarian_label");
  auto e = doc.find("event_type");
  if (h == doc.end() || e == doc.end() || !h->is_string() || !e->is_string()) return std::nullopt;
  auto hl = humanitarian_from_string(detail::fold_label(h->get<std::string>()));
  auto et = event_from_string(detail::fold_label(e->get<std::string>()));
  if (!hl || !et) return std::nullopt;
  return Prediction{*hl, *et, std::string(completion), std::nullopt};
}

/// Tally of strict failures, split by whether a lenient reading would have
/// succeeded. Reported alongside metrics, never folded into them.
struct NearMissCounter {
  std::size_t format = 0;
  std::size_t label = 0;
  std::size_t repetition = 0;
  std::size_t recoverable = 0;

  void record(const ParseError& err) {
    switch (err.kind) {
      case ParseErrorKind::FormatViolation: ++format; break;
      case ParseErrorKind::LabelViolation: ++label; break;
      case ParseErrorKind::RepetitionViolation: ++repetition; break;
    }
    if (lenient_parse(err.raw)) ++recoverable;
  }

  std::size_t total() const { return format + label + repetition; }
};

}  // namespace crisisrag
