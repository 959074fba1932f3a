#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace crisisrag {

/// Lowercases ASCII, splits on every byte that is not an ASCII letter or digit
/// and drops empty tokens. Bytes >= 0x80 are kept inside tokens so UTF-8 words
/// survive intact.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    const bool ascii_alnum = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
    if (ascii_alnum || c >= 0x80) {
      current += (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c);
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

/// Whitespace-token count scaled by 1.3 and rounded up. A rough budget
/// estimate, not a tokenizer.
inline std::size_t estimate_tokens(std::string_view text) {
  std::size_t words = 0;
  bool in_word = false;
  for (unsigned char c : text) {
    const bool ws = c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
    if (!ws && !in_word) ++words;
    in_word = !ws;
  }
  return (words * 13 + 9) / 10;
}

}  // namespace crisisrag
