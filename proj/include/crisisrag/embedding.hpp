#pragma once

// Embeddings, the linear contrastive adapter and clustering quality metrics.
//
// The adapter is a square matrix W applied to frozen base embeddings. It is
// trained on labelled text pairs with the cosine-similarity loss
//
//   L(W) = 1/N * sum_i (cos(W u_i, W v_i) - y_i)^2
//
// where y_i = 1 when the pair shares a humanitarian label and 0 otherwise.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "crisisrag/errors.hpp"
#include "crisisrag/labels.hpp"
#include "crisisrag/linalg.hpp"
#include "crisisrag/rng.hpp"
#include "crisisrag/text.hpp"

namespace crisisrag {

inline constexpr std::size_t kDefaultEmbeddingDim = 384;

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::size_t dimension() const = 0;
  virtual std::vector<Vector> embed(const std::vector<std::string>& texts) const = 0;

  Vector embed_one(const std::string& text) const { return embed({text}).front(); }
};

/// L2-normalizes in place; throws ZeroNormEmbedding for an all-zero vector.
inline void normalize(Vector& v) {
  const double n = norm2(v);
  if (!(n > 0.0) || !std::isfinite(n)) throw Error(Errc::ZeroNormEmbedding, "cannot normalize a zero vector");
  for (double& x : v) x /= n;
}

/// Deterministic hashed bag-of-tokens embedder for tests and offline runs.
/// Each token (see tokenize) is hashed with 64-bit FNV-1a; bucket = h mod d,
/// sign = +1 when the top bit of h is clear and -1 otherwise. Contributions are
/// summed and the result is L2-normalized.
class HashedEmbedder final : public Embedder {
 public:
  explicit HashedEmbedder(std::size_t dim = kDefaultEmbeddingDim) : dim_(dim) {
    if (dim == 0) throw Error(Errc::InvalidConfig, "embedding dimension must be positive");
  }

  std::size_t dimension() const override { return dim_; }

  std::vector<Vector> embed(const std::vector<std::string>& texts) const override {
    std::vector<Vector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed_text(t));
    return out;
  }

  Vector embed_text(std::string_view text) const {
    auto tokens = tokenize(text);
    if (tokens.empty()) throw Error(Errc::EmptyText, "text has no tokens to embed");
    Vector v(dim_, 0.0);
    for (const auto& tok : tokens) {
      const auto h = fnv1a64(tok.data(), tok.size());
      v[h % dim_] += (h >> 63) ? -1.0 : 1.0;
    }
    normalize(v);
    return v;
  }

 private:
  std::size_t dim_;
};

struct LabeledText {
  std::string text;
  HumanitarianLabel label{};
};

struct TrainingPair {
  std::size_t u_index = 0;
  std::size_t v_index = 0;
  std::string u_text;
  std::string v_text;
  double target = 0.0;

  friend bool operator==(const TrainingPair&, const TrainingPair&) = default;
};

/// Two pairs per anchor, in anchor order: first a positive drawn uniformly from
/// the other members of the anchor's label, then a negative drawn uniformly
/// from all records with a different label.
inline std::vector<TrainingPair> make_pairs(const std::vector<LabeledText>& corpus, std::uint64_t seed) {
  std::map<HumanitarianLabel, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < corpus.size(); ++i) by_label[corpus[i].label].push_back(i);
  for (const auto& [label, members] : by_label)
    if (members.size() < 2)
      throw Error(Errc::InsufficientClassMembers, std::string(to_string(label)) + " has fewer than 2 members");
  if (by_label.size() < 2)
    throw Error(Errc::InsufficientClassMembers,
                by_label.empty() ? std::string("corpus is empty")
                                 : std::string(to_string(by_label.begin()->first)) + " is the only label");

  SplitMix64 rng(seed);
  std::vector<TrainingPair> pairs;
  pairs.reserve(2 * corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& same = by_label[corpus[i].label];
    std::vector<std::size_t> pos_pool;
    for (auto j : same)
      if (j != i) pos_pool.push_back(j);
    std::vector<std::size_t> neg_pool;
    for (std::size_t j = 0; j < corpus.size(); ++j)
      if (corpus[j].label != corpus[i].label) neg_pool.push_back(j);
    const auto p = pos_pool[rng.uniform_index(pos_pool.size())];
    const auto n = neg_pool[rng.uniform_index(neg_pool.size())];
    pairs.push_back({i, p, corpus[i].text, corpus[p].text, 1.0});
    pairs.push_back({i, n, corpus[i].text, corpus[n].text, 0.0});
  }
  return pairs;
}

struct EmbeddedPair {
  Vector u;
  Vector v;
  double target = 0.0;
};

inline std::vector<EmbeddedPair> embed_pairs(const std::vector<TrainingPair>& pairs, std::span<const Vector> base) {
  std::vector<EmbeddedPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (p.u_index >= base.size() || p.v_index >= base.size())
      throw Error(Errc::DimensionMismatch, "pair refers past the end of the embedding table");
    out.push_back({base[p.u_index], base[p.v_index], p.target});
  }
  return out;
}

class LinearAdapter {
 public:
  LinearAdapter() = default;
  explicit LinearAdapter(std::size_t dim) : weights_(Matrix::identity(dim)) {}
  explicit LinearAdapter(Matrix weights, std::size_t trained_steps = 0)
      : weights_(std::move(weights)), trained_steps_(trained_steps) {
    if (weights_.rows() != weights_.cols()) throw Error(Errc::DimensionMismatch, "adapter matrix must be square");
  }

  std::size_t dimension() const { return weights_.rows(); }
  const Matrix& weights() const { return weights_; }
  Matrix& weights() { return weights_; }
  std::size_t trained_steps() const { return trained_steps_; }
  void add_steps(std::size_t n) { trained_steps_ += n; }

  Vector apply(std::span<const double> x) const {
    if (x.size() != dimension()) throw Error(Errc::DimensionMismatch, "embedding dimension does not match adapter");
    return matvec(weights_, x);
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["dimension"] = dimension();
    j["trained_steps"] = trained_steps_;
    auto rows = nlohmann::json::array();
    for (std::size_t r = 0; r < dimension(); ++r) {
      auto row = weights_.row(r);
      rows.push_back(std::vector<double>(row.begin(), row.end()));
    }
    j["weights"] = std::move(rows);
    return j;
  }

  static LinearAdapter from_json(const nlohmann::json& j) {
    const auto d = j.at("dimension").get<std::size_t>();
    const auto& rows = j.at("weights");
    if (!rows.is_array() || rows.size() != d) throw Error(Errc::DimensionMismatch, "adapter row count != dimension");
    Matrix w(d, d);
    for (std::size_t r = 0; r < d; ++r) {
      const auto& row = rows[r];
      if (!row.is_array() || row.size() != d) throw Error(Errc::DimensionMismatch, "adapter row length != dimension");
      for (std::size_t c = 0; c < d; ++c) w(r, c) = row[c].get<double>();
    }
    if (!all_finite(w.data())) throw Error(Errc::MalformedRecord, "adapter has non-finite weights");
    return LinearAdapter(std::move(w), j.value("trained_steps", std::size_t{0}));
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(Errc::Io, "cannot write " + path.string());
    out << to_json().dump() << '\n';
  }

  static LinearAdapter load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::Io, "cannot open " + path.string());
    auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw Error(Errc::MalformedRecord, path.string() + " is not JSON");
    return from_json(j);
  }

 private:
  Matrix weights_;
  std::size_t trained_steps_ = 0;
};

/// Base embedder followed by the adapter.
class AdaptedEmbedder final : public Embedder {
 public:
  AdaptedEmbedder(const Embedder& base, const LinearAdapter& adapter) : base_(base), adapter_(adapter) {
    if (base.dimension() != adapter.dimension())
      throw Error(Errc::DimensionMismatch, "adapter dimension does not match embedder");
  }

  std::size_t dimension() const override { return base_.dimension(); }

  std::vector<Vector> embed(const std::vector<std::string>& texts) const override {
    auto base = base_.embed(texts);
    for (auto& v : base) v = adapter_.apply(v);
    return base;
  }

 private:
  const Embedder& base_;
  const LinearAdapter& adapter_;
};

// ---------------------------------------------------------------------------
// Cosine-similarity loss and its gradient
// ---------------------------------------------------------------------------

/// Mean squared error between cos(W u, W v) and the pair targets.
inline double cosine_loss(const Matrix& w, std::span<const EmbeddedPair> pairs) {
  if (pairs.empty()) return 0.0;
  double total = 0.0;
  for (const auto& p : pairs) {
    const auto a = matvec(w, p.u);
    const auto b = matvec(w, p.v);
    const double na = norm2(a), nb = norm2(b);
    if (na == 0.0 || nb == 0.0) throw Error(Errc::ZeroNormEmbedding, "adapter maps an embedding to zero");
    const double r = dot(a, b) / (na * nb) - p.target;
    total += r * r;
  }
  return total / static_cast<double>(pairs.size());
}

/// Analytic dL/dW. With a = W u, b = W v and c = cos(a, b):
///   dc/da = b / (|a||b|) - c a / |a|^2,   dc/db = a / (|a||b|) - c b / |b|^2
///   dL/dW = 2/N * sum (c - y) (dc/da u^T + dc/db v^T)
inline Matrix cosine_loss_gradient(const Matrix& w, std::span<const EmbeddedPair> pairs) {
  const std::size_t d = w.rows();
  Matrix grad(d, w.cols());
  if (pairs.empty()) return grad;
  const double scale = 2.0 / static_cast<double>(pairs.size());
  Vector ga(d), gb(d);
  for (const auto& p : pairs) {
    const auto a = matvec(w, p.u);
    const auto b = matvec(w, p.v);
    const double na = norm2(a), nb = norm2(b);
    if (na == 0.0 || nb == 0.0) throw Error(Errc::ZeroNormEmbedding, "adapter maps an embedding to zero");
    const double c = dot(a, b) / (na * nb);
    const double coef = scale * (c - p.target);
    for (std::size_t i = 0; i < d; ++i) {
      ga[i] = coef * (b[i] / (na * nb) - c * a[i] / (na * na));
      gb[i] = coef * (a[i] / (na * nb) - c * b[i] / (nb * nb));
    }
    for (std::size_t i = 0; i < d; ++i) {
      auto row = grad.row(i);
      for (std::size_t j = 0; j < row.size(); ++j) row[j] += ga[i] * p.u[j] + gb[i] * p.v[j];
    }
  }
  return grad;
}

struct AdapterTrainingConfig {
  std::size_t steps = 200;
  double learning_rate = 0.05;
  std::size_t batch_size = 0;  // 0 = full batch
  std::uint64_t seed = 0;      // mini-batch shuffling

  /// Step budget covering `epochs` passes over `num_pairs` at `batch`.
  static AdapterTrainingConfig for_epochs(std::size_t num_pairs, std::size_t epochs = 2, std::size_t batch = 32,
                                          double learning_rate = 0.05, std::uint64_t seed = 0) {
    const std::size_t per_epoch = batch == 0 ? 1 : (num_pairs + batch - 1) / batch;
    return {per_epoch * epochs, learning_rate, batch, seed};
  }
};

struct AdapterTrainingResult {
  LinearAdapter adapter;
  std::vector<double> loss_trace;  // batch loss before each step
  double initial_loss = 0.0;       // full-set loss before training
  double final_loss = 0.0;         // full-set loss after training
};

/// Gradient descent on W starting from `init` (identity when absent). Mini
/// batches walk a seeded shuffle of the pairs and reshuffle on every pass.
inline AdapterTrainingResult train_adapter(std::span<const EmbeddedPair> pairs, const AdapterTrainingConfig& config,
                                           std::optional<LinearAdapter> init = std::nullopt) {
  if (pairs.empty()) throw Error(Errc::InvalidConfig, "no training pairs");
  const std::size_t d = pairs.front().u.size();
  for (const auto& p : pairs) {
    if (p.u.size() != d || p.v.size() != d) throw Error(Errc::DimensionMismatch, "pair embeddings differ in size");
    if (norm2(p.u) == 0.0 || norm2(p.v) == 0.0) throw Error(Errc::ZeroNormEmbedding, "base embedding is zero");
  }
  LinearAdapter adapter = init ? std::move(*init) : LinearAdapter(d);
  if (adapter.dimension() != d) throw Error(Errc::DimensionMismatch, "initial adapter dimension mismatch");

  AdapterTrainingResult result;
  result.initial_loss = cosine_loss(adapter.weights(), pairs);

  const bool full = config.batch_size == 0 || config.batch_size >= pairs.size();
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  SplitMix64 rng(config.seed);
  auto reshuffle = [&] {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);
  };
  if (!full) reshuffle();

  std::size_t cursor = 0;
  std::vector<EmbeddedPair> batch;
  for (std::size_t step = 0; step < config.steps; ++step) {
    std::span<const EmbeddedPair> view = pairs;
    if (!full) {
      if (cursor >= order.size()) {
        reshuffle();
        cursor = 0;
      }
      batch.clear();
      const auto end = std::min(order.size(), cursor + config.batch_size);
      for (; cursor < end; ++cursor) batch.push_back(pairs[order[cursor]]);
      view = batch;
    }
    const double loss = cosine_loss(adapter.weights(), view);
    if (!std::isfinite(loss)) throw Error(Errc::DivergedLoss, "loss became non-finite at step " + std::to_string(step));
    result.loss_trace.push_back(loss);
    const auto grad = cosine_loss_gradient(adapter.weights(), view);
    auto& w = adapter.weights().data();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= config.learning_rate * grad.data()[i];
    if (!all_finite(w)) throw Error(Errc::DivergedLoss, "weights became non-finite at step " + std::to_string(step));
  }
  adapter.add_steps(config.steps);
  result.final_loss = cosine_loss(adapter.weights(), pairs);
  if (!std::isfinite(result.final_loss)) throw Error(Errc::DivergedLoss, "final loss is non-finite");
  result.adapter = std::move(adapter);
  return result;
}

// ---------------------------------------------------------------------------
// Cluster quality. Both metrics use Euclidean distance on the vectors as given.
// ---------------------------------------------------------------------------

struct ClusterMetrics {
  double mean_intra = 0.0;
  double mean_inter = 0.0;
  std::optional<double> separation_ratio;  // absent when mean_intra == 0
  bool degenerate_intra = false;
  double silhouette = 0.0;
};

namespace detail {
template <class Label>
void check_clusters(std::span<const Vector> points, std::span<const Label> labels) {
  if (points.size() != labels.size()) throw Error(Errc::LengthMismatch, "points and labels differ in length");
  std::map<Label, std::size_t> sizes;
  for (const auto& l : labels) ++sizes[l];
  if (sizes.size() < 2) throw Error(Errc::DegenerateInput, "need at least two labels");
  for (const auto& [_, n] : sizes)
    if (n < 2) throw Error(Errc::InsufficientClassMembers, "every label needs at least two members");
  for (const auto& p : points)
    if (p.size() != points.front().size()) throw Error(Errc::DimensionMismatch, "points differ in dimension");
}
}  // namespace detail

/// Mean pairwise Euclidean distance within labels and across labels over all
/// unordered pairs, and their ratio inter / intra.
template <class Label>
ClusterMetrics separation_ratio(std::span<const Vector> points, std::span<const Label> labels) {
  detail::check_clusters(points, labels);
  double intra = 0.0, inter = 0.0;
  std::size_t n_intra = 0, n_inter = 0;
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      const double dist = euclidean(points[i], points[j]);
      if (labels[i] == labels[j]) {
        intra += dist;
        ++n_intra;
      } else {
        inter += dist;
        ++n_inter;
      }
    }
  ClusterMetrics m;
  m.mean_intra = intra / static_cast<double>(n_intra);
  m.mean_inter = inter / static_cast<double>(n_inter);
  if (m.mean_intra > 0.0)
    m.separation_ratio = m.mean_inter / m.mean_intra;
  else
    m.degenerate_intra = true;
  return m;
}

/// Mean silhouette (b - a) / max(a, b); a point with max(a, b) == 0 scores 0.
template <class Label>
double silhouette(std::span<const Vector> points, std::span<const Label> labels) {
  detail::check_clusters(points, labels);
  std::map<Label, std::size_t> cluster_of;
  for (const auto& l : labels) cluster_of.try_emplace(l, cluster_of.size());
  const std::size_t k = cluster_of.size();
  std::vector<std::size_t> cid(labels.size());
  std::vector<std::size_t> sizes(k, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    cid[i] = cluster_of[labels[i]];
    ++sizes[cid[i]];
  }
  double total = 0.0;
  std::vector<double> sums(k);
  for (std::size_t i = 0; i < points.size(); ++i) {
    std::fill(sums.begin(), sums.end(), 0.0);
    for (std::size_t j = 0; j < points.size(); ++j)
      if (j != i) sums[cid[j]] += euclidean(points[i], points[j]);
    const double a = sums[cid[i]] / static_cast<double>(sizes[cid[i]] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c)
      if (c != cid[i]) b = std::min(b, sums[c] / static_cast<double>(sizes[c]));
    const double denom = std::max(a, b);
    total += denom > 0.0 ? (b - a) / denom : 0.0;
  }
  return std::clamp(total / static_cast<double>(points.size()), -1.0, 1.0);
}

template <class Label>
ClusterMetrics cluster_metrics(std::span<const Vector> points, std::span<const Label> labels) {
  auto m = separation_ratio(points, labels);
  m.silhouette = silhouette(points, labels);
  return m;
}

}  // namespace crisisrag
