#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "cmcrl/common.hpp"
#include "cmcrl/memory.hpp"
#include "cmcrl/model.hpp"
#include "cmcrl/rng.hpp"
#include "cmcrl/tensor.hpp"

namespace cmcrl {

/// sum: one softmax over the layer-summed logits (the multi-layer loss as
/// printed); mean: average of per-layer single-softmax losses (ablation
/// variant).
enum class LayerMode { sum, mean };

struct LossConfig {
  double temperature = 0.05;
  std::vector<int> layer_set = {1, 2, 3, 4};
  LayerMode mode = LayerMode::sum;

  void validate() const {
    check_config(temperature > 0.0, "temperature must be positive");
    check_config(!layer_set.empty(), "loss layer_set must be nonempty");
    for (int k : layer_set) check_config(k >= 1 && k <= 4, "loss layer_set entries must be in 1..4");
  }
};

/// -log softmax(logits)[positive], evaluated with max-logit subtraction.
/// Exactly 0 for a single logit. Optionally fills softmax probabilities.
inline double nll_from_logits(const std::vector<double>& logits, std::size_t positive,
                              std::vector<double>* probs = nullptr) {
  check_contract(positive < logits.size(), "nll_from_logits: positive index out of range");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double denom = 0.0;
  for (double l : logits) denom += std::exp(l - mx);
  if (probs) {
    probs->resize(logits.size());
    for (std::size_t j = 0; j < logits.size(); ++j) (*probs)[j] = std::exp(logits[j] - mx) / denom;
  }
  return -(logits[positive] - mx - std::log(denom));
}

/// One sample's multi-layer embedding as raw pointers (dimension d each,
/// null for inactive layers).
template <class T>
struct SampleView {
  std::array<const T*, 4> z{nullptr, nullptr, nullptr, nullptr};
  std::size_t d = 0;
};

/// The multi-layer InfoNCE loss of one sample against the centroid bank:
///
///   -log( exp(sum_k <z_k, c_{j+,k}> / tau) / sum_j exp(sum_k <z_k, c_{j,k}> / tau) )
///
/// computed in double with max-logit subtraction. The bank is treated as
/// constant; grad_out (when given) receives dL/dz_k for each active layer.
template <class T>
double mlnce(const SampleView<T>& sample, int j_plus, const std::array<Tensor<T>, 4>& bank_layers,
             int num_clusters, const LossConfig& cfg,
             std::array<std::vector<double>, 4>* grad_out = nullptr) {
  cfg.validate();
  check_contract(num_clusters >= 1, "mlnce: empty bank (m = 0)");
  check_contract(j_plus >= 1 && j_plus <= num_clusters,
                 "mlnce: pseudo-label must be a valid cluster id (noise is excluded upstream)");
  const auto m = static_cast<std::size_t>(num_clusters);
  const std::size_t d = sample.d;
  const auto pos = static_cast<std::size_t>(j_plus - 1);

  std::vector<int> active;
  for (int k : cfg.layer_set) {
    check_contract(sample.z[static_cast<std::size_t>(k - 1)] != nullptr,
                   "mlnce: sample missing layer " + std::to_string(k));
    check_contract(!bank_layers[static_cast<std::size_t>(k - 1)].empty(),
                   "mlnce: bank missing layer " + std::to_string(k));
    active.push_back(k);
  }

  if (grad_out)
    for (int k : active) (*grad_out)[static_cast<std::size_t>(k - 1)].assign(d, 0.0);

  if (cfg.mode == LayerMode::sum) {
    std::vector<double> logits(m, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (int k : active) {
        const auto& bank = bank_layers[static_cast<std::size_t>(k - 1)];
        s += dot(sample.z[static_cast<std::size_t>(k - 1)], bank.data() + j * d, d);
      }
      logits[j] = s / cfg.temperature;
    }
    std::vector<double> probs;
    const double loss = nll_from_logits(logits, pos, grad_out ? &probs : nullptr);
    if (grad_out) {
      // dL/dz_k = (sum_j p_j c_{j,k} - c_{j+,k}) / tau
      for (int k : active) {
        const auto& bank = bank_layers[static_cast<std::size_t>(k - 1)];
        auto& g = (*grad_out)[static_cast<std::size_t>(k - 1)];
        for (std::size_t j = 0; j < m; ++j) {
          const double w = (probs[j] - (j == pos ? 1.0 : 0.0)) / cfg.temperature;
          const T* row = bank.data() + j * d;
          for (std::size_t c = 0; c < d; ++c) g[c] += w * static_cast<double>(row[c]);
        }
      }
    }
    return loss;
  }

  // mean mode: average of per-layer InfoNCE terms
  double total = 0.0;
  const double inv_l = 1.0 / static_cast<double>(active.size());
  for (int k : active) {
    const auto& bank = bank_layers[static_cast<std::size_t>(k - 1)];
    std::vector<double> logits(m, 0.0);
    for (std::size_t j = 0; j < m; ++j)
      logits[j] =
          dot(sample.z[static_cast<std::size_t>(k - 1)], bank.data() + j * d, d) / cfg.temperature;
    std::vector<double> probs;
    total += nll_from_logits(logits, pos, grad_out ? &probs : nullptr);
    if (grad_out) {
      auto& g = (*grad_out)[static_cast<std::size_t>(k - 1)];
      for (std::size_t j = 0; j < m; ++j) {
        const double w = inv_l * (probs[j] - (j == pos ? 1.0 : 0.0)) / cfg.temperature;
        const T* row = bank.data() + j * d;
        for (std::size_t c = 0; c < d; ++c) g[c] += w * static_cast<double>(row[c]);
      }
    }
  }
  return total * inv_l;
}

/// Convenience overload reading sample i from batch embedding matrices.
template <class T>
double mlnce(const LayerEmbeddings<T>& batch, std::size_t i, int j_plus, const CentroidBank& bank,
             const LossConfig& cfg, std::array<std::vector<double>, 4>* grad_out = nullptr) {
  SampleView<T> s;
  for (int k = 0; k < 4; ++k) {
    const auto& z = batch.layers[static_cast<std::size_t>(k)];
    if (z.empty()) continue;
    s.z[static_cast<std::size_t>(k)] = z.data() + i * z.dim(1);
    s.d = z.dim(1);
  }
  return mlnce(s, j_plus, bank.layers, bank.num_clusters, cfg, grad_out);
}

// ---------------------------------------------------------------------------
// Gradient validation harness
// ---------------------------------------------------------------------------

/// Max relative error between the analytic gradient of mlnce w.r.t. every
/// active z_k and central finite differences with the given step.
inline double mlnce_gradient_check(int m, int d, const std::vector<int>& layer_set,
                                   std::uint64_t seed, double h = 1e-4) {
  Rng rng(seed);
  const auto du = static_cast<std::size_t>(d);
  std::array<Tensor<double>, 4> bank;
  for (int k : layer_set) {
    Tensor<double> rows({static_cast<std::size_t>(m), du});
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = rng.normal();
    for (int j = 0; j < m; ++j) l2_normalize(rows.data() + static_cast<std::size_t>(j) * du, du);
    bank[static_cast<std::size_t>(k - 1)] = std::move(rows);
  }
  std::array<std::vector<double>, 4> z;
  for (int k : layer_set) {
    auto& v = z[static_cast<std::size_t>(k - 1)];
    v.resize(du);
    for (auto& x : v) x = rng.normal();
    l2_normalize(v.data(), du);
  }
  const int j_plus = static_cast<int>(rng.uniform_int(1, m));

  LossConfig cfg;
  cfg.layer_set = layer_set;
  cfg.temperature = 0.05;

  auto eval = [&]() {
    SampleView<double> s;
    s.d = du;
    for (int k : layer_set) s.z[static_cast<std::size_t>(k - 1)] = z[static_cast<std::size_t>(k - 1)].data();
    return mlnce(s, j_plus, bank, m, cfg, nullptr);
  };

  std::array<std::vector<double>, 4> grad;
  {
    SampleView<double> s;
    s.d = du;
    for (int k : layer_set) s.z[static_cast<std::size_t>(k - 1)] = z[static_cast<std::size_t>(k - 1)].data();
    mlnce(s, j_plus, bank, m, cfg, &grad);
  }

  double max_rel = 0.0;
  for (int k : layer_set) {
    auto& v = z[static_cast<std::size_t>(k - 1)];
    for (std::size_t c = 0; c < du; ++c) {
      const double orig = v[c];
      v[c] = orig + h;
      const double up = eval();
      v[c] = orig - h;
      const double down = eval();
      v[c] = orig;
      const double fd = (up - down) / (2.0 * h);
      const double an = grad[static_cast<std::size_t>(k - 1)][c];
      const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-8});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace cmcrl
