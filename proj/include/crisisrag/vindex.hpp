#pragma once

// Exact inner-product index over L2-normalized embeddings.
//
// On-disk layout for prefix P:
//   P.json        {"format":"crisisrag-index","version":1,"dimension":d,"enriched":b,"count":n}
//   P.f32         n*d IEEE-754 float32 values, little-endian, row-major, no padding
//   P.meta.jsonl  n lines {"position":i,"tweet_id":...,"tweet":...,"label":...,"event_type":...}

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "crisisrag/corpus.hpp"
#include "crisisrag/embedding.hpp"
#include "crisisrag/errors.hpp"
#include "crisisrag/labels.hpp"

namespace crisisrag {

inline constexpr double kUnitNormTolerance = 1e-6;

struct EntryMeta {
  std::string tweet_id;
  std::string tweet;
  HumanitarianLabel label{};
  EventType event{};
};

struct Neighbor {
  std::size_t position = 0;  // corpus position of the entry
  double score = 0.0;
  std::string tweet;
  HumanitarianLabel label{};
  EventType event{};
};

/// The string embedded for a record: the raw tweet, or with enrichment
/// "Label: <label>. Tweet: <tweet>".
inline std::string index_text(const TweetRecord& r, bool enriched) {
  if (!enriched) return r.tweet;
  return "Label: " + std::string(to_string(r.label)) + ". Tweet: " + r.tweet;
}

class VectorIndex {
 public:
  VectorIndex() = default;

  /// Takes ownership of row vectors (normalized here) and their metadata.
  static VectorIndex from_vectors(std::vector<Vector> vectors, std::vector<EntryMeta> meta, bool enriched = false) {
    if (vectors.empty()) throw Error(Errc::EmptyCorpus, "index needs at least one entry");
    if (vectors.size() != meta.size()) throw Error(Errc::LengthMismatch, "vectors and metadata differ in length");
    VectorIndex idx;
    idx.dim_ = vectors.front().size();
    idx.enriched_ = enriched;
    idx.data_.reserve(vectors.size() * idx.dim_);
    for (std::size_t i = 0; i < vectors.size(); ++i) {
      auto& v = vectors[i];
      if (v.size() != idx.dim_) throw Error(Errc::DimensionMismatch, "entry " + std::to_string(i) + " has wrong size");
      const double n = norm2(v);
      if (!(n > 0.0) || !std::isfinite(n)) throw Error(Errc::ZeroNormVector, "entry " + meta[i].tweet_id);
      for (double x : v) idx.data_.push_back(static_cast<float>(x / n));
    }
    idx.meta_ = std::move(meta);
    return idx;
  }

  static VectorIndex build(const Corpus& corpus, const Embedder& embedder, bool enriched) {
    if (corpus.empty()) throw Error(Errc::EmptyCorpus, "cannot index an empty corpus");
    std::vector<std::string> texts;
    texts.reserve(corpus.size());
    for (const auto& r : corpus) texts.push_back(index_text(r, enriched));

    std::vector<Vector> vectors;
    try {
      vectors = embedder.embed(texts);
    } catch (const Error& e) {
      if (e.code() != Errc::EmptyText && e.code() != Errc::ZeroNormEmbedding) throw;
      for (std::size_t i = 0; i < texts.size(); ++i) {
        try {
          embedder.embed({texts[i]});
        } catch (const Error&) {
          throw Error(Errc::ZeroNormVector, "tweet " + corpus[i].tweet_id + " embeds to a zero vector");
        }
      }
      throw;
    }
    if (vectors.size() != corpus.size()) throw Error(Errc::DimensionMismatch, "embedder returned wrong count");

    std::vector<EntryMeta> meta;
    meta.reserve(corpus.size());
    for (const auto& r : corpus) meta.push_back({r.tweet_id, r.tweet, r.label, r.event_type});
    return from_vectors(std::move(vectors), std::move(meta), enriched);
  }

  std::size_t size() const { return meta_.size(); }
  std::size_t dimension() const { return dim_; }
  bool enriched() const { return enriched_; }
  const EntryMeta& meta(std::size_t i) const { return meta_[i]; }
  std::span<const float> vector(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }

  double inner_product(std::size_t i, std::span<const double> q) const {
    auto v = vector(i);
    double s = 0.0;
    for (std::size_t j = 0; j < dim_; ++j) s += static_cast<double>(v[j]) * q[j];
    return s;
  }

  /// Exact top-k by inner product, descending, ties by corpus position. k is
  /// clamped to the index size.
  std::vector<Neighbor> search(std::span<const double> query, std::size_t k) const {
    if (query.size() != dim_) throw Error(Errc::DimensionMismatch, "query dimension does not match index");
    if (k == 0) throw Error(Errc::InvalidConfig, "k must be at least 1");
    if (std::abs(norm2(query) - 1.0) > kUnitNormTolerance)
      throw Error(Errc::UnnormalizedQuery, "query vector is not unit length");
    std::vector<std::pair<double, std::size_t>> scored(size());
    for (std::size_t i = 0; i < size(); ++i) scored[i] = {inner_product(i, query), i};
    k = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(),
                      [](const auto& a, const auto& b) {
                        if (a.first != b.first) return a.first > b.first;
                        return a.second < b.second;
                      });
    std::vector<Neighbor> out;
    out.reserve(k);
    for (std::size_t r = 0; r < k; ++r) {
      const auto& m = meta_[scored[r].second];
      out.push_back({scored[r].second, scored[r].first, m.tweet, m.label, m.event});
    }
    return out;
  }

  void save(const std::filesystem::path& prefix) const {
    nlohmann::ordered_json header;
    header["format"] = "crisisrag-index";
    header["version"] = 1;
    header["dimension"] = dim_;
    header["enriched"] = enriched_;
    header["count"] = size();
    write_text(with_suffix(prefix, ".json"), header.dump() + "\n");

    std::ofstream bin(with_suffix(prefix, ".f32"), std::ios::binary | std::ios::trunc);
    if (!bin) throw Error(Errc::Io, "cannot write " + with_suffix(prefix, ".f32").string());
    for (float f : data_) {
      auto bits = std::bit_cast<std::uint32_t>(f);
      unsigned char bytes[4] = {static_cast<unsigned char>(bits), static_cast<unsigned char>(bits >> 8),
                                static_cast<unsigned char>(bits >> 16), static_cast<unsigned char>(bits >> 24)};
      bin.write(reinterpret_cast<const char*>(bytes), 4);
    }

    std::string meta;
    for (std::size_t i = 0; i < size(); ++i) {
      nlohmann::ordered_json m;
      m["position"] = i;
      m["tweet_id"] = meta_[i].tweet_id;
      m["tweet"] = meta_[i].tweet;
      m["label"] = to_string(meta_[i].label);
      m["event_type"] = to_string(meta_[i].event);
      meta += m.dump(-1, ' ', false, nlohmann::ordered_json::error_handler_t::replace) + "\n";
    }
    write_text(with_suffix(prefix, ".meta.jsonl"), meta);
  }

  static VectorIndex load(const std::filesystem::path& prefix) {
    std::ifstream hin(with_suffix(prefix, ".json"));
    if (!hin) throw Error(Errc::Io, "cannot open " + with_suffix(prefix, ".json").string());
    auto header = nlohmann::json::parse(hin, nullptr, false);
    if (header.is_discarded() || header.value("format", "") != "crisisrag-index")
      throw Error(Errc::MalformedRecord, "bad index header");
    VectorIndex idx;
    idx.dim_ = header.at("dimension").get<std::size_t>();
    idx.enriched_ = header.at("enriched").get<bool>();
    const auto count = header.at("count").get<std::size_t>();

    std::ifstream bin(with_suffix(prefix, ".f32"), std::ios::binary);
    if (!bin) throw Error(Errc::Io, "cannot open " + with_suffix(prefix, ".f32").string());
    idx.data_.resize(count * idx.dim_);
    for (auto& f : idx.data_) {
      unsigned char b[4];
      if (!bin.read(reinterpret_cast<char*>(b), 4)) throw Error(Errc::MalformedRecord, "vector file truncated");
      const std::uint32_t bits = std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) |
                                 (std::uint32_t{b[3]} << 24);
      f = std::bit_cast<float>(bits);
    }

    std::ifstream min(with_suffix(prefix, ".meta.jsonl"));
    if (!min) throw Error(Errc::Io, "cannot open " + with_suffix(prefix, ".meta.jsonl").string());
    std::string line;
    while (std::getline(min, line)) {
      if (line.empty()) continue;
      auto m = nlohmann::json::parse(line, nullptr, false);
      if (m.is_discarded()) throw Error(Errc::MalformedRecord, "bad metadata line");
      idx.meta_.push_back({m.at("tweet_id").get<std::string>(), m.at("tweet").get<std::string>(),
                           parse_humanitarian(m.at("label").get<std::string>()),
                           parse_event_type(m.at("event_type").get<std::string>())});
    }
    if (idx.meta_.size() != count) throw Error(Errc::MalformedRecord, "metadata count does not match header");
    return idx;
  }

 private:
  static std::filesystem::path with_suffix(const std::filesystem::path& prefix, const char* suffix) {
    return std::filesystem::path(prefix.string() + suffix);
  }

  static void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::Io, "cannot write " + path.string());
    out << text;
  }

  std::size_t dim_ = 0;
  bool enriched_ = false;
  std::vector<float> data_;
  std::vector<EntryMeta> meta_;
};

}  // namespace crisisrag
