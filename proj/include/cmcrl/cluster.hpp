#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <numeric>
#include <string>
#include <vector>

#include "cmcrl/common.hpp"
#include "cmcrl/model.hpp"
#include "cmcrl/tensor.hpp"

namespace cmcrl {

struct ClusterConfig {
  double eps = 0.4;
  int k1 = 30;
  int k2 = 6;
  int min_samples = 4;
  double lambda = 0.0;            // 0 = pure Jaccard; >0 mixes normalized cosine distance
  bool cluster_on_concat = false; // cluster on concatenated layer embeddings instead of the final

  void validate() const {
    check_config(eps > 0.0 && eps <= 1.0, "eps must be in (0,1]");
    check_config(k2 >= 1 && k1 > k2, "need k1 > k2 >= 1");
    check_config(min_samples >= 1, "min_samples must be >= 1");
    check_config(lambda >= 0.0 && lambda <= 1.0, "lambda must be in [0,1]");
  }
};

/// DBSCAN result. Pseudo-labels are 1..m with -1 marking noise; cluster ids
/// are ordered by each cluster's lowest member index.
struct ClusterAssignment {
  std::vector<int> pseudo_labels;
  int num_clusters = 0;                      // m
  std::vector<std::vector<std::size_t>> members;  // members[j-1] for cluster j
  std::size_t num_clustered = 0;             // N_C

  std::size_t size() const { return pseudo_labels.size(); }
};

/// Per-layer cluster centroid matrices ({m, d}, unit rows), empty for
/// inactive layers.
struct CentroidSet {
  std::array<Tensor<float>, 4> layers;
  int num_clusters = 0;

  bool empty() const { return num_clusters == 0; }
};

// ---------------------------------------------------------------------------
// k-reciprocal Jaccard distance
// ---------------------------------------------------------------------------
//
// The re-ranked distance used for DBSCAN, following the k-reciprocal
// encoding scheme from the re-identification literature:
//
//   1. d0(i,j) = 2 - 2 <z_i, z_j>          (unit vectors)
//   2. rank lists sorted by (d0, index); N(i,k) = first k+1 entries (self
//      included); R(i,k) = { c in N(i,k) : i in N(c,k) }
//   3. expansion with half-size reciprocal sets (h = k1/2, integer):
//      E(i) = R(i,k1) + R(c,h) for each c in R(i,k1) with
//      |R(c,h) n R(i,k1)| >= 2/3 |R(c,h)|
//   4. fuzzy membership V[i][j] = exp(-d0(i,j)) for j in E(i), row-normalized
//   5. local query expansion over the k2 nearest rank-list entries:
//      V[i] <- mean of V[a], a in first k2 entries of i's rank list
//   6. D(i,j) = 1 - sum_l min(V[i][l], V[j][l]) / sum_l max(V[i][l], V[j][l])
//
// With lambda > 0 the result is (1-lambda) * D + lambda * d0/4 (cosine
// distance rescaled to [0,1]).

namespace detail {

inline std::vector<std::vector<std::size_t>> rank_lists(const Tensor<double>& dist) {
  const std::size_t n = dist.dim(0);
  std::vector<std::vector<std::size_t>> ranks(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const double da = dist.at(i, a), db = dist.at(i, b);
      if (da != db) return da < db;
      return a < b;
    });
    ranks[i] = std::move(order);
  }
  return ranks;
}

inline std::vector<std::size_t> reciprocal_set(const std::vector<std::vector<std::size_t>>& ranks,
                                               std::size_t i, std::size_t k) {
  std::vector<std::size_t> out;
  for (std::size_t a = 0; a <= k && a < ranks[i].size(); ++a) {
    const std::size_t c = ranks[i][a];
    for (std::size_t b = 0; b <= k && b < ranks[c].size(); ++b) {
      if (ranks[c][b] == i) {
        out.push_back(c);
        break;
      }
    }
  }
  return out;
}

}  // namespace detail

/// Pairwise cosine distances 2 - 2<z_i,z_j>, computed in double.
inline Tensor<double> cosine_distance_matrix(const Tensor<float>& embeddings) {
  const std::size_t n = embeddings.dim(0), d = embeddings.dim(1);
  Tensor<double> dist({n, n}, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dp = dot(embeddings.data() + i * d, embeddings.data() + j * d, d);
      const double v = std::max(0.0, 2.0 - 2.0 * dp);
      dist.at(i, j) = v;
      dist.at(j, i) = v;
    }
  }
  return dist;
}

/// k-reciprocal Jaccard distance matrix over unit-norm embeddings {N, d}.
/// Symmetric, zero diagonal, entries in [0, 1].
inline Tensor<double> jaccard_distance_matrix(const Tensor<float>& embeddings, int k1, int k2,
                                              double lambda = 0.0) {
  const std::size_t n = embeddings.dim(0);
  check_config(k1 > 0 && static_cast<std::size_t>(k1) < n,
               "k1 must be smaller than the sample count (" + std::to_string(n) +
                   "); lower k1");
  check_config(k2 >= 1 && k2 < k1, "need 1 <= k2 < k1");

  const Tensor<double> d0 = cosine_distance_matrix(embeddings);
  const auto ranks = detail::rank_lists(d0);
  const auto k1u = static_cast<std::size_t>(k1);
  const std::size_t half = std::max<std::size_t>(1, k1u / 2);

  std::vector<std::vector<std::size_t>> r_k1(n), r_half(n);
  for (std::size_t i = 0; i < n; ++i) {
    r_k1[i] = detail::reciprocal_set(ranks, i, k1u);
    r_half[i] = detail::reciprocal_set(ranks, i, half);
  }

  // fuzzy membership rows
  Tensor<double> v({n, n}, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> expansion = r_k1[i];
    for (std::size_t c : r_k1[i]) {
      std::size_t overlap = 0;
      for (std::size_t e : r_half[c])
        if (std::find(r_k1[i].begin(), r_k1[i].end(), e) != r_k1[i].end()) ++overlap;
      if (3 * overlap >= 2 * r_half[c].size())
        expansion.insert(expansion.end(), r_half[c].begin(), r_half[c].end());
    }
    std::sort(expansion.begin(), expansion.end());
    expansion.erase(std::unique(expansion.begin(), expansion.end()), expansion.end());
    double sum = 0.0;
    for (std::size_t j : expansion) sum += std::exp(-d0.at(i, j));
    for (std::size_t j : expansion) v.at(i, j) = std::exp(-d0.at(i, j)) / sum;
  }

  // local query expansion
  if (k2 > 1) {
    Tensor<double> vq({n, n}, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (int a = 0; a < k2; ++a) {
        const std::size_t src = ranks[i][static_cast<std::size_t>(a)];
        for (std::size_t j = 0; j < n; ++j) vq.at(i, j) += v.at(src, j);
      }
      for (std::size_t j = 0; j < n; ++j) vq.at(i, j) /= static_cast<double>(k2);
    }
    v = std::move(vq);
  }

  Tensor<double> jac({n, n}, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double min_sum = 0.0, max_sum = 0.0;
      for (std::size_t l = 0; l < n; ++l) {
        min_sum += std::min(v.at(i, l), v.at(j, l));
        max_sum += std::max(v.at(i, l), v.at(j, l));
      }
      double dj = max_sum > 0.0 ? 1.0 - min_sum / max_sum : 1.0;
      if (lambda > 0.0) dj = (1.0 - lambda) * dj + lambda * d0.at(i, j) / 4.0;
      dj = std::min(1.0, std::max(0.0, dj));
      jac.at(i, j) = dj;
      jac.at(j, i) = dj;
    }
  }
  return jac;
}

// ---------------------------------------------------------------------------
// DBSCAN
// ---------------------------------------------------------------------------

/// DBSCAN on a precomputed distance matrix. Core points have at least
/// min_samples neighbors within eps (self included); expansion scans seeds
/// and neighbor lists in index order, so the labeling is deterministic.
inline ClusterAssignment dbscan(const Tensor<double>& distances, double eps, int min_samples) {
  check_contract(distances.rank() == 2 && distances.dim(0) == distances.dim(1),
                 "dbscan: square matrix required");
  const std::size_t n = distances.dim(0);

  std::vector<std::vector<std::size_t>> neighbors(n);
  std::vector<char> core(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j)
      if (distances.at(i, j) <= eps) neighbors[i].push_back(j);
    core[i] = neighbors[i].size() >= static_cast<std::size_t>(min_samples);
  }

  std::vector<int> label(n, 0);  // 0 = unassigned
  int next_id = 0;
  for (std::size_t seed = 0; seed < n; ++seed) {
    if (label[seed] != 0 || !core[seed]) continue;
    const int id = ++next_id;
    label[seed] = id;
    std::deque<std::size_t> queue{seed};
    while (!queue.empty()) {
      const std::size_t q = queue.front();
      queue.pop_front();
      for (std::size_t nb : neighbors[q]) {
        if (label[nb] != 0) continue;
        label[nb] = id;
        if (core[nb]) queue.push_back(nb);
      }
    }
  }

  // Relabel so cluster ids follow each cluster's lowest member index.
  std::vector<std::size_t> first_member(static_cast<std::size_t>(next_id), n);
  for (std::size_t i = 0; i < n; ++i)
    if (label[i] > 0) {
      auto& fm = first_member[static_cast<std::size_t>(label[i] - 1)];
      fm = std::min(fm, i);
    }
  std::vector<int> order(static_cast<std::size_t>(next_id));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return first_member[static_cast<std::size_t>(a)] <
                                       first_member[static_cast<std::size_t>(b)]; });
  std::vector<int> remap(static_cast<std::size_t>(next_id));
  for (int r = 0; r < next_id; ++r) remap[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])] = r + 1;

  ClusterAssignment out;
  out.pseudo_labels.assign(n, -1);
  out.num_clusters = next_id;
  out.members.resize(static_cast<std::size_t>(next_id));
  for (std::size_t i = 0; i < n; ++i) {
    if (label[i] > 0) {
      const int id = remap[static_cast<std::size_t>(label[i] - 1)];
      out.pseudo_labels[i] = id;
      out.members[static_cast<std::size_t>(id - 1)].push_back(i);
      ++out.num_clustered;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cluster centroids
// ---------------------------------------------------------------------------

/// Per-layer cluster centroids: arithmetic mean of member embeddings,
/// renormalized to unit length. Noise samples are excluded. Returns an
/// empty set when there is no cluster.
inline CentroidSet centroids(const LayerEmbeddings<float>& embeddings,
                             const ClusterAssignment& assignment) {
  CentroidSet out;
  out.num_clusters = assignment.num_clusters;
  if (assignment.num_clusters == 0) return out;
  const auto m = static_cast<std::size_t>(assignment.num_clusters);
  for (int k = 0; k < 4; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    const auto& z = embeddings.layers[ku];
    if (z.empty()) continue;
    check_contract(z.dim(0) == assignment.size(), "centroids: embedding/assignment size mismatch");
    const std::size_t d = z.dim(1);
    Tensor<double> acc({m, d}, 0.0);
    for (std::size_t i = 0; i < assignment.size(); ++i) {
      const int j = assignment.pseudo_labels[i];
      if (j < 0) continue;
      const auto ju = static_cast<std::size_t>(j - 1);
      for (std::size_t c = 0; c < d; ++c) acc.at(ju, c) += static_cast<double>(z.at(i, c));
    }
    Tensor<float> cent({m, d});
    for (std::size_t ju = 0; ju < m; ++ju) {
      const auto cnt = static_cast<double>(assignment.members[ju].size());
      for (std::size_t c = 0; c < d; ++c)
        cent.at(ju, c) = static_cast<float>(acc.at(ju, c) / cnt);
      l2_normalize(cent.data() + ju * d, d);
    }
    out.layers[ku] = std::move(cent);
  }
  return out;
}

/// The matrix DBSCAN clusters on: the final active layer's embeddings, or
/// the unit-renormalized concatenation of all active layers.
inline Tensor<float> clustering_features(const LayerEmbeddings<float>& embeddings,
                                         bool concat_layers) {
  int last = -1;
  std::size_t total_d = 0, n = 0;
  for (int k = 0; k < 4; ++k) {
    const auto& z = embeddings.layers[static_cast<std::size_t>(k)];
    if (z.empty()) continue;
    last = k;
    total_d += z.dim(1);
    n = z.dim(0);
  }
  check_contract(last >= 0, "clustering_features: no active layer");
  if (!concat_layers) return embeddings.layers[static_cast<std::size_t>(last)];
  Tensor<float> out({n, total_d});
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t off = 0;
    for (int k = 0; k < 4; ++k) {
      const auto& z = embeddings.layers[static_cast<std::size_t>(k)];
      if (z.empty()) continue;
      for (std::size_t c = 0; c < z.dim(1); ++c) out.at(i, off + c) = z.at(i, c);
      off += z.dim(1);
    }
    l2_normalize(out.data() + i * total_d, total_d);
  }
  return out;
}

}  // namespace cmcrl
