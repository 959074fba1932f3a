#pragma once

// TF-IDF with raw-count term frequency and natural-log inverse document
// frequency, idf(t) = ln(|D| / df(t)). No smoothing, no stopwords.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "crisisrag/errors.hpp"
#include "crisisrag/text.hpp"

namespace crisisrag {

/// Sparse vector as (term index, weight) pairs sorted by term index.
using SparseVector = std::vector<std::pair<std::size_t, double>>;

inline double sparse_dot(const SparseVector& a, const SparseVector& b) {
  double dot = 0.0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (ia->first < ib->first) {
      ++ia;
    } else if (ib->first < ia->first) {
      ++ib;
    } else {
      dot += ia->second * ib->second;
      ++ia;
      ++ib;
    }
  }
  return dot;
}

inline double sparse_norm(const SparseVector& a) {
  double s = 0.0;
  for (const auto& [_, w] : a) s += w * w;
  return std::sqrt(s);
}

/// Cosine similarity; 0 when either vector has zero norm.
inline double sparse_cosine(const SparseVector& a, const SparseVector& b) {
  const double na = sparse_norm(a);
  const double nb = sparse_norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(sparse_dot(a, b) / (na * nb), 0.0, 1.0);
}

struct ScoredDoc {
  std::size_t doc = 0;
  double similarity = 0.0;
};

class TfidfModel {
 public:
  static TfidfModel fit(const std::vector<std::string>& docs) {
    if (docs.empty()) throw Error(Errc::EmptyCorpus, "TF-IDF needs at least one document");
    TfidfModel m;
    std::vector<std::map<std::string, std::size_t>> counts(docs.size());
    std::map<std::string, std::size_t> df;
    for (std::size_t d = 0; d < docs.size(); ++d) {
      for (auto& tok : tokenize(docs[d])) ++counts[d][tok];
      for (const auto& [tok, _] : counts[d]) ++df[tok];
    }
    // Vocabulary indices follow lexicographic term order.
    for (const auto& [tok, n] : df) {
      m.vocabulary_.emplace(tok, m.idf_.size());
      m.idf_.push_back(std::log(static_cast<double>(docs.size()) / static_cast<double>(n)));
    }
    m.doc_vectors_.reserve(docs.size());
    for (const auto& c : counts) m.doc_vectors_.push_back(m.weigh(c));
    return m;
  }

  /// TF-IDF vector of arbitrary text; terms outside the vocabulary are dropped.
  SparseVector transform(std::string_view text) const {
    std::map<std::string, std::size_t> c;
    for (auto& tok : tokenize(text)) ++c[tok];
    return weigh(c);
  }

  /// Documents ranked by cosine similarity to the query, descending, ties by
  /// lower document index. k is clamped to the corpus size.
  std::vector<ScoredDoc> cosine_topk(std::string_view query, std::size_t k) const {
    const auto q = transform(query);
    std::vector<ScoredDoc> scored(doc_vectors_.size());
    for (std::size_t d = 0; d < doc_vectors_.size(); ++d) scored[d] = {d, sparse_cosine(q, doc_vectors_[d])};
    k = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(),
                      [](const ScoredDoc& a, const ScoredDoc& b) {
                        if (a.similarity != b.similarity) return a.similarity > b.similarity;
                        return a.doc < b.doc;
                      });
    scored.resize(k);
    return scored;
  }

  const std::unordered_map<std::string, std::size_t>& vocabulary() const { return vocabulary_; }
  const std::vector<double>& idf() const { return idf_; }
  const std::vector<SparseVector>& doc_vectors() const { return doc_vectors_; }
  std::size_t num_docs() const { return doc_vectors_.size(); }

  double idf(std::string_view term) const {
    auto it = vocabulary_.find(std::string(term));
    return it == vocabulary_.end() ? 0.0 : idf_[it->second];
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    for (const auto& [term, idx] : vocabulary_) j["idf"][term] = idf_[idx];
    j["num_docs"] = num_docs();
    return j;
  }

 private:
  SparseVector weigh(const std::map<std::string, std::size_t>& counts) const {
    SparseVector v;
    for (const auto& [tok, n] : counts) {
      auto it = vocabulary_.find(tok);
      if (it == vocabulary_.end()) continue;
      v.emplace_back(it->second, static_cast<double>(n) * idf_[it->second]);
    }
    std::sort(v.begin(), v.end());
    return v;
  }

  std::unordered_map<std::string, std::size_t> vocabulary_;
  std::vector<double> idf_;
  std::vector<SparseVector> doc_vectors_;
};

}  // namespace crisisrag
