#pragma once

// LoRA parameter accounting and the low-rank forward pass
//   h = W0 x + (alpha / r) B A x,   A: r x d_in,  B: d_out x r.

#include <array>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "crisisrag/errors.hpp"
#include "crisisrag/linalg.hpp"

namespace crisisrag {

enum class LoraTarget { Q, K, V, O, Gate, Up, Down };

inline constexpr std::array<LoraTarget, 7> kAllLoraTargets{LoraTarget::Q,    LoraTarget::K,  LoraTarget::V,
                                                           LoraTarget::O,    LoraTarget::Gate, LoraTarget::Up,
                                                           LoraTarget::Down};

constexpr std::string_view to_string(LoraTarget t) {
  switch (t) {
    case LoraTarget::Q: return "q_proj";
    case LoraTarget::K: return "k_proj";
    case LoraTarget::V: return "v_proj";
    case LoraTarget::O: return "o_proj";
    case LoraTarget::Gate: return "gate_proj";
    case LoraTarget::Up: return "up_proj";
    case LoraTarget::Down: return "down_proj";
  }
  return "";
}

/// Accepts "q_proj" or the short form "q".
inline LoraTarget parse_lora_target(std::string_view s) {
  for (auto t : kAllLoraTargets) {
    const auto full = to_string(t);
    if (s == full || s == full.substr(0, full.size() - 5)) return t;
  }
  throw Error(Errc::InvalidConfig, "unknown LoRA target '" + std::string(s) + "'");
}

struct ModelDims {
  std::uint64_t hidden = 4096;
  std::uint64_t intermediate = 14336;
  std::uint64_t kv_dim = 1024;  // grouped-query attention: hidden / 4
  std::uint64_t layers = 32;
  std::uint64_t total_params = 8'030'261'248ULL;

  void validate() const {
    if (hidden == 0 || intermediate == 0 || kv_dim == 0 || layers == 0 || total_params == 0)
      throw Error(Errc::InvalidConfig, "model dimensions must be positive");
  }
};

struct LoraConfig {
  std::uint64_t rank = 64;
  double alpha = 128.0;
  std::set<LoraTarget> targets{kAllLoraTargets.begin(), kAllLoraTargets.end()};

  double scaling() const { return alpha / static_cast<double>(rank); }

  void validate() const {
    if (rank == 0) throw Error(Errc::InvalidConfig, "LoRA rank must be at least 1");
    if (!std::isfinite(scaling())) throw Error(Errc::InvalidConfig, "alpha / r must be finite");
  }
};

/// (d_out, d_in) of the projection a target adapts.
inline std::pair<std::uint64_t, std::uint64_t> target_shape(const ModelDims& d, LoraTarget t) {
  switch (t) {
    case LoraTarget::Q: return {d.hidden, d.hidden};
    case LoraTarget::K: return {d.kv_dim, d.hidden};
    case LoraTarget::V: return {d.kv_dim, d.hidden};
    case LoraTarget::O: return {d.hidden, d.hidden};
    case LoraTarget::Gate: return {d.intermediate, d.hidden};
    case LoraTarget::Up: return {d.intermediate, d.hidden};
    case LoraTarget::Down: return {d.hidden, d.intermediate};
  }
  return {0, 0};
}

struct TargetBreakdown {
  LoraTarget target{};
  std::uint64_t d_out = 0;
  std::uint64_t d_in = 0;
  std::uint64_t per_layer = 0;  // r*d_in + d_out*r
  std::uint64_t total = 0;      // per_layer * layers
};

struct LoraPlan {
  std::vector<TargetBreakdown> targets;
  std::uint64_t trainable = 0;
  double ratio = 0.0;
};

inline LoraPlan count_params(const ModelDims& dims, const LoraConfig& cfg) {
  dims.validate();
  cfg.validate();
  LoraPlan plan;
  for (auto t : cfg.targets) {
    const auto [d_out, d_in] = target_shape(dims, t);
    TargetBreakdown b{t, d_out, d_in, cfg.rank * d_in + d_out * cfg.rank, 0};
    b.total = b.per_layer * dims.layers;
    plan.trainable += b.total;
    plan.targets.push_back(b);
  }
  plan.ratio = static_cast<double>(plan.trainable) / static_cast<double>(dims.total_params);
  return plan;
}

inline nlohmann::ordered_json to_json(const LoraPlan& plan, const ModelDims& dims, const LoraConfig& cfg) {
  nlohmann::ordered_json j;
  j["model"] = {{"hidden", dims.hidden},
                {"intermediate", dims.intermediate},
                {"kv_dim", dims.kv_dim},
                {"layers", dims.layers},
                {"total_params", dims.total_params}};
  j["rank"] = cfg.rank;
  j["alpha"] = cfg.alpha;
  j["scaling"] = cfg.scaling();
  auto arr = nlohmann::ordered_json::array();
  for (const auto& b : plan.targets)
    arr.push_back({{"target", to_string(b.target)},
                   {"d_out", b.d_out},
                   {"d_in", b.d_in},
                   {"per_layer", b.per_layer},
                   {"total", b.total}});
  j["targets"] = std::move(arr);
  j["trainable"] = plan.trainable;
  j["ratio"] = plan.ratio;
  return j;
}

/// W0 x + (alpha / r) B (A x), computed without forming B A.
inline Vector lora_forward(const Matrix& w0, const Matrix& a, const Matrix& b, double alpha, std::size_t r,
                           std::span<const double> x) {
  if (r == 0) throw Error(Errc::InvalidConfig, "rank must be at least 1");
  if (a.rows() != r || b.cols() != r || a.cols() != w0.cols() || b.rows() != w0.rows() || x.size() != w0.cols())
    throw Error(Errc::ShapeMismatch, "W0, A, B and x do not conform");
  auto h = matvec(w0, x);
  const auto ax = matvec(a, x);
  const auto bax = matvec(b, ax);
  const double s = alpha / static_cast<double>(r);
  for (std::size_t i = 0; i < h.size(); ++i) h[i] += s * bax[i];
  return h;
}

/// W0 + (alpha / r) B A.
inline Matrix merge_lora(const Matrix& w0, const Matrix& a, const Matrix& b, double alpha, std::size_t r) {
  if (r == 0) throw Error(Errc::InvalidConfig, "rank must be at least 1");
  auto ba = matmul(b, a);
  if (ba.rows() != w0.rows() || ba.cols() != w0.cols()) throw Error(Errc::ShapeMismatch, "B A does not match W0");
  const double s = alpha / static_cast<double>(r);
  Matrix out = w0;
  for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] += s * ba.data()[i];
  return out;
}

}  // namespace crisisrag
