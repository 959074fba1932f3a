#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace crisisrag {

enum class Role { System, User, Assistant };

constexpr std::string_view to_string(Role r) {
  switch (r) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

struct ChatMessage {
  Role role = Role::User;
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

using Transcript = std::vector<ChatMessage>;

inline nlohmann::json to_json(const Transcript& messages) {
  auto arr = nlohmann::json::array();
  for (const auto& m : messages) arr.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  return arr;
}

/// Human-readable dump used for golden transcript files.
inline std::string render_transcript(const Transcript& messages) {
  std::string out;
  for (const auto& m : messages) {
    out += "### ";
    out += to_string(m.role);
    out += '\n';
    out += m.content;
    out += '\n';
  }
  return out;
}

}  // namespace crisisrag
