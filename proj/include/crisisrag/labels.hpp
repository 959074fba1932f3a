#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "crisisrag/errors.hpp"

namespace crisisrag {

/// The ten humanitarian information categories. Enumerator order is the
/// alphabetical order of the canonical spellings, which is also the iteration
/// order used by stratified sampling and the row/column order of confusion
/// matrices.
enum class HumanitarianLabel : std::size_t {
  CautionAndAdvice,
  DisplacedPeopleAndEvacuations,
  InfrastructureAndUtilityDamage,
  InjuredOrDeadPeople,
  MissingOrFoundPeople,
  NotHumanitarian,
  OtherRelevantInformation,
  RequestsOrUrgentNeeds,
  RescueVolunteeringOrDonationEffort,
  SympathyAndSupport,
};

enum class EventType : std::size_t { Earthquake, Fire, Flood, Hurricane };

enum class Split : std::size_t { Train, Dev, Test };

inline constexpr std::size_t kNumHumanitarian = 10;
inline constexpr std::size_t kNumEventTypes = 4;

inline constexpr std::array<std::string_view, kNumHumanitarian> kHumanitarianNames{
    "caution_and_advice",
    "displaced_people_and_evacuations",
    "infrastructure_and_utility_damage",
    "injured_or_dead_people",
    "missing_or_found_people",
    "not_humanitarian",
    "other_relevant_information",
    "requests_or_urgent_needs",
    "rescue_volunteering_or_donation_effort",
    "sympathy_and_support",
};

inline constexpr std::array<std::string_view, kNumEventTypes> kEventNames{
    "earthquake", "fire", "flood", "hurricane"};

inline constexpr std::array<std::string_view, 3> kSplitNames{"train", "dev", "test"};

inline constexpr std::array<HumanitarianLabel, kNumHumanitarian> all_humanitarian_labels() {
  std::array<HumanitarianLabel, kNumHumanitarian> out{};
  for (std::size_t i = 0; i < kNumHumanitarian; ++i) out[i] = static_cast<HumanitarianLabel>(i);
  return out;
}

inline constexpr std::array<EventType, kNumEventTypes> all_event_types() {
  std::array<EventType, kNumEventTypes> out{};
  for (std::size_t i = 0; i < kNumEventTypes; ++i) out[i] = static_cast<EventType>(i);
  return out;
}

constexpr std::size_t index_of(HumanitarianLabel l) { return static_cast<std::size_t>(l); }
constexpr std::size_t index_of(EventType e) { return static_cast<std::size_t>(e); }
constexpr std::size_t index_of(Split s) { return static_cast<std::size_t>(s); }

constexpr std::string_view to_string(HumanitarianLabel l) { return kHumanitarianNames[index_of(l)]; }
constexpr std::string_view to_string(EventType e) { return kEventNames[index_of(e)]; }
constexpr std::string_view to_string(Split s) { return kSplitNames[index_of(s)]; }

// Exact, case-sensitive lookups. No folding: the output contract is strict.
inline std::optional<HumanitarianLabel> humanitarian_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kNumHumanitarian; ++i)
    if (kHumanitarianNames[i] == s) return static_cast<HumanitarianLabel>(i);
  return std::nullopt;
}

inline std::optional<EventType> event_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kNumEventTypes; ++i)
    if (kEventNames[i] == s) return static_cast<EventType>(i);
  return std::nullopt;
}

inline std::optional<Split> split_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kSplitNames.size(); ++i)
    if (kSplitNames[i] == s) return static_cast<Split>(i);
  return std::nullopt;
}

inline HumanitarianLabel parse_humanitarian(std::string_view s) {
  if (auto l = humanitarian_from_string(s)) return *l;
  throw Error(Errc::UnknownLabel, "'" + std::string(s) + "' is not a humanitarian label");
}

inline EventType parse_event_type(std::string_view s) {
  if (auto e = event_from_string(s)) return *e;
  throw Error(Errc::UnknownLabel, "'" + std::string(s) + "' is not an event type");
}

}  // namespace crisisrag
