#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>

#include "crisisrag/corpus.hpp"

#ifndef CRISISRAG_FIXTURE_DIR
#error "CRISISRAG_FIXTURE_DIR must be defined by the build"
#endif

namespace crisisrag::testing {

inline std::filesystem::path fixture(const std::string& rel) { return std::filesystem::path(CRISISRAG_FIXTURE_DIR) / rel; }

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("crisisrag_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// The bundled 60-record corpus joined from the raw fixture, in split order
/// train, dev, test.
inline Corpus load_mini_corpus() {
  Corpus all;
  std::unordered_map<std::string, std::string> texts;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(fixture("mini_raw/events_set1")))
    if (entry.is_regular_file()) parse_text_tsv(entry.path(), texts);
  for (auto split : {Split::Train, Split::Dev, Split::Test}) {
    auto labels = parse_label_tsv(fixture("mini_raw/all_combined/all_" + std::string(to_string(split)) + ".tsv"));
    auto joined = join_records(labels, texts, split);
    if (!joined.orphan_ids.empty()) throw Error(Errc::MalformedRecord, "fixture has orphan labels");
    all.insert(all.end(), joined.records.begin(), joined.records.end());
  }
  return all;
}

}  // namespace crisisrag::testing
