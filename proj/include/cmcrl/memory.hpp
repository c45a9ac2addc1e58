#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "cmcrl/cluster.hpp"
#include "cmcrl/common.hpp"
#include "cmcrl/tensor.hpp"

namespace cmcrl {

enum class MemoryUpdate { sequential, hardest };

/// The memory dictionary: one centroid row per cluster and layer,
/// re-initialized from fresh clustering each epoch and momentum-updated per
/// batch. Rows stay unit-normalized. The bank is a constant in the loss
/// gradient; only the momentum rule moves it.
struct CentroidBank {
  std::array<Tensor<float>, 4> layers;  // {m, d} per active layer
  double alpha = 0.1;
  int epoch_id = 0;
  int num_clusters = 0;

  static CentroidBank init_from(const CentroidSet& centroids, double alpha, int epoch_id = 0) {
    check_config(alpha >= 0.0 && alpha <= 1.0, "momentum alpha must be in [0,1]");
    check_contract(!centroids.empty(), "cannot initialize memory from an empty centroid set");
    CentroidBank bank;
    bank.layers = centroids.layers;
    bank.alpha = alpha;
    bank.epoch_id = epoch_id;
    bank.num_clusters = centroids.num_clusters;
    return bank;
  }

  /// z_bar_j <- alpha * z_bar_j + (1 - alpha) * z, then renormalize.
  /// layer_k and cluster_j are 1-based; z must be unit-normalized.
  void momentum_update(int layer_k, int cluster_j, const float* z, std::size_t d) {
    check_contract(layer_k >= 1 && layer_k <= 4, "momentum_update: layer out of range");
    check_contract(cluster_j >= 1 && cluster_j <= num_clusters,
                   "momentum_update: noise or out-of-range cluster id");
    auto& rows = layers[static_cast<std::size_t>(layer_k - 1)];
    check_contract(!rows.empty() && rows.dim(1) == d, "momentum_update: layer inactive or bad dim");
    float* row = rows.data() + static_cast<std::size_t>(cluster_j - 1) * d;
    const auto a = static_cast<float>(alpha);
    for (std::size_t c = 0; c < d; ++c) row[c] = a * row[c] + (1.0f - a) * z[c];
    l2_normalize(row, d);
  }

  std::vector<int> active_layers() const {
    std::vector<int> out;
    for (int k = 0; k < 4; ++k)
      if (!layers[static_cast<std::size_t>(k)].empty()) out.push_back(k + 1);
    return out;
  }
};

/// Apply one batch of updates. Sequential mode walks samples in batch order;
/// hardest mode updates each cluster once, with its least-similar batch
/// member (similarity taken on the deepest active layer).
inline void apply_batch_update(CentroidBank& bank, const LayerEmbeddings<float>& batch,
                               const std::vector<int>& pseudo_labels, MemoryUpdate mode) {
  const auto active = bank.active_layers();
  check_contract(!active.empty(), "apply_batch_update: bank has no active layer");
  const std::size_t n = pseudo_labels.size();

  if (mode == MemoryUpdate::sequential) {
    for (std::size_t i = 0; i < n; ++i) {
      const int j = pseudo_labels[i];
      check_contract(j >= 1, "apply_batch_update: noise sample in batch");
      for (int k : active) {
        const auto& z = batch.layers[static_cast<std::size_t>(k - 1)];
        bank.momentum_update(k, j, z.data() + i * z.dim(1), z.dim(1));
      }
    }
    return;
  }

  const int deep = active.back();
  const auto& zd = batch.layers[static_cast<std::size_t>(deep - 1)];
  const std::size_t d = zd.dim(1);
  std::vector<std::size_t> hardest;  // batch index of hardest member per cluster seen
  std::vector<int> clusters;
  for (std::size_t i = 0; i < n; ++i) {
    const int j = pseudo_labels[i];
    check_contract(j >= 1, "apply_batch_update: noise sample in batch");
    const float* row =
        bank.layers[static_cast<std::size_t>(deep - 1)].data() + static_cast<std::size_t>(j - 1) * d;
    const double sim = dot(zd.data() + i * d, row, d);
    bool found = false;
    for (std::size_t c = 0; c < clusters.size(); ++c) {
      if (clusters[c] == j) {
        const double best = dot(zd.data() + hardest[c] * d, row, d);
        if (sim < best) hardest[c] = i;
        found = true;
        break;
      }
    }
    if (!found) {
      clusters.push_back(j);
      hardest.push_back(i);
    }
  }
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    for (int k : active) {
      const auto& z = batch.layers[static_cast<std::size_t>(k - 1)];
      bank.momentum_update(k, clusters[c], z.data() + hardest[c] * z.dim(1), z.dim(1));
    }
  }
}

}  // namespace cmcrl
