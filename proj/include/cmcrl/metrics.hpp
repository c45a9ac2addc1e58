#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "cmcrl/common.hpp"
#include "cmcrl/tensor.hpp"

namespace cmcrl {

struct MetricsReport {
  double cacc = -1.0;  // -1 marks "not available / undefined"
  double ari = -1.0;
  double acc = 0.0;
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
  Tensor<std::int64_t> confusion;            // {K, K}, rows = true class
  Tensor<std::int64_t> cluster_contingency;  // {K, m}, clustered samples only
};

// ---------------------------------------------------------------------------
// Assignment
// ---------------------------------------------------------------------------

/// Minimum-cost assignment on a square matrix (Kuhn's algorithm with
/// potentials, O(n^3)). Returns col assigned to each row.
inline std::vector<int> hungarian_min_assignment(const Tensor<double>& cost) {
  check_contract(cost.rank() == 2 && cost.dim(0) == cost.dim(1),
                 "hungarian: square matrix required");
  const int n = static_cast<int>(cost.dim(0));
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0), v(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<int> p(static_cast<std::size_t>(n) + 1, 0), way(static_cast<std::size_t>(n) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n) + 1, inf);
    std::vector<char> used(static_cast<std::size_t>(n) + 1, 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const int i0 = p[static_cast<std::size_t>(j0)];
      int j1 = -1;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = cost.at(static_cast<std::size_t>(i0 - 1), static_cast<std::size_t>(j - 1)) -
                           u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= n; ++j)
    if (p[static_cast<std::size_t>(j)] >= 1)
      row_to_col[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
  return row_to_col;
}

// ---------------------------------------------------------------------------
// Clustering metrics
// ---------------------------------------------------------------------------

/// Contingency N_qj over clustered samples: rows true classes 1..K, columns
/// clusters 1..m. Noise entries (pseudo -1) are dropped.
inline Tensor<std::int64_t> cluster_contingency(const std::vector<int>& true_labels,
                                                const std::vector<int>& pseudo_labels, int k,
                                                int m) {
  check_contract(true_labels.size() == pseudo_labels.size(), "contingency: size mismatch");
  Tensor<std::int64_t> n({static_cast<std::size_t>(k), static_cast<std::size_t>(m)},
                         std::int64_t(0));
  for (std::size_t i = 0; i < true_labels.size(); ++i) {
    const int j = pseudo_labels[i];
    if (j < 1) continue;
    check_contract(true_labels[i] >= 1 && true_labels[i] <= k, "contingency: label out of range");
    check_contract(j <= m, "contingency: cluster id out of range");
    n.at(static_cast<std::size_t>(true_labels[i] - 1), static_cast<std::size_t>(j - 1))++;
  }
  return n;
}

inline int max_label(const std::vector<int>& labels) {
  int mx = 0;
  for (int l : labels) mx = std::max(mx, l);
  return mx;
}

/// Cluster accuracy: the best fraction of clustered samples matched under an
/// injective cluster-to-label mapping (optimal assignment on the contingency,
/// padded to square; surplus clusters stay unmapped and count as errors).
/// Returns -1 when every sample is noise.
inline double cacc(const std::vector<int>& true_labels, const std::vector<int>& pseudo_labels) {
  const int k = max_label(true_labels);
  const int m = max_label(pseudo_labels);
  std::int64_t n_c = 0;
  for (int j : pseudo_labels)
    if (j >= 1) ++n_c;
  if (n_c == 0 || m == 0) return -1.0;

  const auto cont = cluster_contingency(true_labels, pseudo_labels, k, m);
  const int s = std::max(k, m);
  Tensor<double> cost({static_cast<std::size_t>(s), static_cast<std::size_t>(s)}, 0.0);
  for (int q = 0; q < k; ++q)
    for (int j = 0; j < m; ++j)
      cost.at(static_cast<std::size_t>(q), static_cast<std::size_t>(j)) =
          -static_cast<double>(cont.at(static_cast<std::size_t>(q), static_cast<std::size_t>(j)));
  const auto assign = hungarian_min_assignment(cost);
  std::int64_t matched = 0;
  for (int q = 0; q < k; ++q) {
    const int j = assign[static_cast<std::size_t>(q)];
    if (j >= 0 && j < m)
      matched += cont.at(static_cast<std::size_t>(q), static_cast<std::size_t>(j));
  }
  return static_cast<double>(matched) / static_cast<double>(n_c);
}

/// Adjusted Rand index over clustered samples, via pair counting on the
/// contingency table. Identical partitions give 1; the degenerate case with
/// a zero denominator (single class and single cluster) returns 1 by
/// convention. Returns -1 when every sample is noise.
inline double ari(const std::vector<int>& true_labels, const std::vector<int>& pseudo_labels) {
  const int k = max_label(true_labels);
  const int m = max_label(pseudo_labels);
  std::int64_t n_c = 0;
  for (int j : pseudo_labels)
    if (j >= 1) ++n_c;
  if (n_c == 0 || m == 0) return -1.0;
  if (n_c < 2) return 1.0;

  const auto cont = cluster_contingency(true_labels, pseudo_labels, k, m);
  auto comb2 = [](std::int64_t x) { return static_cast<double>(x) * static_cast<double>(x - 1) / 2.0; };

  double sum_ij = 0.0;
  std::vector<std::int64_t> a(static_cast<std::size_t>(k), 0), b(static_cast<std::size_t>(m), 0);
  for (int q = 0; q < k; ++q)
    for (int j = 0; j < m; ++j) {
      const auto nij = cont.at(static_cast<std::size_t>(q), static_cast<std::size_t>(j));
      sum_ij += comb2(nij);
      a[static_cast<std::size_t>(q)] += nij;
      b[static_cast<std::size_t>(j)] += nij;
    }
  double sum_a = 0.0, sum_b = 0.0;
  for (auto x : a) sum_a += comb2(x);
  for (auto x : b) sum_b += comb2(x);
  const double total_pairs = comb2(n_c);
  const double expected = sum_a * sum_b / total_pairs;
  const double maximum = (sum_a + sum_b) / 2.0;
  const double denom = maximum - expected;
  if (std::abs(denom) < 1e-12) return 1.0;
  return (sum_ij - expected) / denom;
}

// ---------------------------------------------------------------------------
// Classification metrics
// ---------------------------------------------------------------------------

struct ClassificationMetrics {
  double acc = 0.0;
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
  Tensor<std::int64_t> confusion;  // {K, K}, rows = true class
};

/// Top-1 accuracy, macro recall/precision, and the F1 score taken as the
/// harmonic mean of the two macro averages. Per-class ratios with an empty
/// denominator (class never predicted, or absent from the test set) count
/// as 0. With per_class_f1 the F1 is instead the mean of per-class F1
/// scores.
inline ClassificationMetrics classification_metrics(const std::vector<int>& true_labels,
                                                    const std::vector<int>& predicted_labels,
                                                    int k, bool per_class_f1 = false) {
  if (true_labels.empty()) throw eval_error("classification_metrics: empty input");
  check_contract(true_labels.size() == predicted_labels.size(),
                 "classification_metrics: size mismatch");
  ClassificationMetrics out;
  out.confusion =
      Tensor<std::int64_t>({static_cast<std::size_t>(k), static_cast<std::size_t>(k)}, 0);
  std::int64_t correct = 0;
  for (std::size_t i = 0; i < true_labels.size(); ++i) {
    const int y = true_labels[i], p = predicted_labels[i];
    check_contract(y >= 1 && y <= k && p >= 1 && p <= k,
                   "classification_metrics: label out of range");
    out.confusion.at(static_cast<std::size_t>(y - 1), static_cast<std::size_t>(p - 1))++;
    if (y == p) ++correct;
  }
  out.acc = static_cast<double>(correct) / static_cast<double>(true_labels.size());

  std::vector<double> recall_q(static_cast<std::size_t>(k), 0.0);
  std::vector<double> precision_q(static_cast<std::size_t>(k), 0.0);
  for (int q = 0; q < k; ++q) {
    std::int64_t row = 0, col = 0;
    for (int j = 0; j < k; ++j) {
      row += out.confusion.at(static_cast<std::size_t>(q), static_cast<std::size_t>(j));
      col += out.confusion.at(static_cast<std::size_t>(j), static_cast<std::size_t>(q));
    }
    const auto diag = out.confusion.at(static_cast<std::size_t>(q), static_cast<std::size_t>(q));
    recall_q[static_cast<std::size_t>(q)] =
        row > 0 ? static_cast<double>(diag) / static_cast<double>(row) : 0.0;
    precision_q[static_cast<std::size_t>(q)] =
        col > 0 ? static_cast<double>(diag) / static_cast<double>(col) : 0.0;
  }
  for (int q = 0; q < k; ++q) {
    out.recall += recall_q[static_cast<std::size_t>(q)];
    out.precision += precision_q[static_cast<std::size_t>(q)];
  }
  out.recall /= static_cast<double>(k);
  out.precision /= static_cast<double>(k);

  if (per_class_f1) {
    double sum = 0.0;
    for (int q = 0; q < k; ++q) {
      const double p = precision_q[static_cast<std::size_t>(q)];
      const double r = recall_q[static_cast<std::size_t>(q)];
      sum += (p + r > 0.0) ? 2.0 * p * r / (p + r) : 0.0;
    }
    out.f1 = sum / static_cast<double>(k);
  } else {
    out.f1 = (out.precision + out.recall > 0.0)
                 ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
                 : 0.0;
  }
  return out;
}

}  // namespace cmcrl
