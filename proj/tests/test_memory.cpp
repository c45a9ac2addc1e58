#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "cmcrl/memory.hpp"
#include "cmcrl/rng.hpp"

using namespace cmcrl;

namespace {

CentroidSet random_centroids(Rng& rng, int m, std::size_t d, const std::vector<int>& layers) {
  CentroidSet cs;
  cs.num_clusters = m;
  for (int k : layers) {
    Tensor<float> rows({static_cast<std::size_t>(m), d});
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<float>(rng.normal());
    for (int j = 0; j < m; ++j) l2_normalize(rows.data() + static_cast<std::size_t>(j) * d, d);
    cs.layers[static_cast<std::size_t>(k - 1)] = std::move(rows);
  }
  return cs;
}

}  // namespace

TEST_CASE("bank initialization copies centroid rows bitwise") {
  Rng rng(5);
  const auto cs = random_centroids(rng, 3, 8, {1, 2, 3, 4});
  const auto bank = CentroidBank::init_from(cs, 0.1, 7);
  for (int k = 0; k < 4; ++k) REQUIRE(bank.layers[static_cast<std::size_t>(k)] == cs.layers[static_cast<std::size_t>(k)]);
  REQUIRE(bank.epoch_id == 7);
  REQUIRE(bank.num_clusters == 3);
}

TEST_CASE("bank rejects momentum outside [0,1]") {
  Rng rng(6);
  const auto cs = random_centroids(rng, 2, 4, {4});
  REQUIRE_THROWS_AS(CentroidBank::init_from(cs, -0.1, 0), config_error);
  REQUIRE_THROWS_AS(CentroidBank::init_from(cs, 1.5, 0), config_error);
}

TEST_CASE("bank rejects an empty centroid set") {
  CentroidSet empty;
  REQUIRE_THROWS_AS(CentroidBank::init_from(empty, 0.1, 0), contract_error);
}

TEST_CASE("bank holds m rows per active layer") {
  Rng rng(8);
  const auto cs = random_centroids(rng, 3, 8, {1, 2, 3, 4});
  const auto bank = CentroidBank::init_from(cs, 0.1);
  std::size_t rows = 0;
  for (const auto& layer : bank.layers)
    if (!layer.empty()) rows += layer.dim(0);
  REQUIRE(rows == 12);
}

TEST_CASE("momentum update arithmetic at alpha 0.1") {
  CentroidSet cs;
  cs.num_clusters = 1;
  Tensor<float> row({1, 2});
  row.at(0, 0) = 1.0f;
  row.at(0, 1) = 0.0f;
  cs.layers[3] = row;
  auto bank = CentroidBank::init_from(cs, 0.1);
  const float z[2] = {0.0f, 1.0f};
  bank.momentum_update(4, 1, z, 2);
  // closed form in the same precision: (0.1, 0.9) renormalized
  const float ex = 0.1f * 1.0f + (1.0f - 0.1f) * 0.0f;
  const float ey = 0.1f * 0.0f + (1.0f - 0.1f) * 1.0f;
  const auto nrm = static_cast<float>(std::sqrt(static_cast<double>(ex) * ex + static_cast<double>(ey) * ey));
  REQUIRE(bank.layers[3].at(0, 0) == ex / nrm);
  REQUIRE(bank.layers[3].at(0, 1) == ey / nrm);
}

TEST_CASE("momentum alpha 1 leaves the row unchanged") {
  Rng rng(9);
  const auto cs = random_centroids(rng, 2, 6, {4});
  auto bank = CentroidBank::init_from(cs, 1.0);
  std::vector<float> z(6);
  for (auto& v : z) v = static_cast<float>(rng.normal());
  l2_normalize(z.data(), z.size());
  const auto before = bank.layers[3];
  bank.momentum_update(4, 1, z.data(), 6);
  // alpha=1: row = old exactly, then renormalized (already unit)
  for (std::size_t c = 0; c < 6; ++c)
    REQUIRE(bank.layers[3].at(0, c) == Catch::Approx(before.at(0, c)).margin(1e-6));
}

TEST_CASE("momentum alpha 0 replaces the row with the sample") {
  Rng rng(10);
  const auto cs = random_centroids(rng, 2, 6, {4});
  auto bank = CentroidBank::init_from(cs, 0.0);
  std::vector<float> z(6);
  for (auto& v : z) v = static_cast<float>(rng.normal());
  l2_normalize(z.data(), z.size());
  bank.momentum_update(4, 2, z.data(), 6);
  for (std::size_t c = 0; c < 6; ++c)
    REQUIRE(bank.layers[3].at(1, c) == Catch::Approx(z[c]).margin(1e-6));
}

TEST_CASE("updated rows stay unit length and other rows stay untouched") {
  Rng rng(12);
  const auto cs = random_centroids(rng, 4, 8, {1, 2, 3, 4});
  auto bank = CentroidBank::init_from(cs, 0.1);
  const auto before = bank.layers;
  std::vector<float> z(8);
  for (int step = 0; step < 20; ++step) {
    for (auto& v : z) v = static_cast<float>(rng.normal());
    l2_normalize(z.data(), z.size());
    const int k = static_cast<int>(rng.uniform_int(1, 4));
    bank.momentum_update(k, 2, z.data(), 8);
  }
  for (int k = 0; k < 4; ++k) {
    const auto& layer = bank.layers[static_cast<std::size_t>(k)];
    for (int j = 0; j < 4; ++j) {
      const double nrm = l2_norm(layer.data() + static_cast<std::size_t>(j) * 8, 8);
      REQUIRE(std::abs(nrm - 1.0) < 1e-5);
      if (j != 1) {
        for (std::size_t c = 0; c < 8; ++c)
          REQUIRE(layer.at(static_cast<std::size_t>(j), c) ==
                  before[static_cast<std::size_t>(k)].at(static_cast<std::size_t>(j), c));
      }
    }
  }
}

TEST_CASE("noise labels never reach the bank") {
  Rng rng(14);
  const auto cs = random_centroids(rng, 2, 4, {4});
  auto bank = CentroidBank::init_from(cs, 0.1);
  const float z[4] = {1, 0, 0, 0};
  REQUIRE_THROWS_AS(bank.momentum_update(4, -1, z, 4), contract_error);
  REQUIRE_THROWS_AS(bank.momentum_update(4, 3, z, 4), contract_error);
}

TEST_CASE("sequential batch updates are order-dependent but deterministic") {
  Rng rng(15);
  const auto cs = random_centroids(rng, 2, 4, {4});

  LayerEmbeddings<float> batch;
  Tensor<float> z({2, 4});
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = static_cast<float>(rng.normal());
  l2_normalize(z.data(), 4);
  l2_normalize(z.data() + 4, 4);
  batch.layers[3] = z;
  const std::vector<int> labels = {1, 1};

  auto bank_a = CentroidBank::init_from(cs, 0.1);
  apply_batch_update(bank_a, batch, labels, MemoryUpdate::sequential);
  auto bank_b = CentroidBank::init_from(cs, 0.1);
  apply_batch_update(bank_b, batch, labels, MemoryUpdate::sequential);
  REQUIRE(bank_a.layers[3] == bank_b.layers[3]);

  // reversed sample order gives a different (still unit-norm) row
  LayerEmbeddings<float> reversed;
  Tensor<float> zr({2, 4});
  for (std::size_t c = 0; c < 4; ++c) {
    zr.at(0, c) = z.at(1, c);
    zr.at(1, c) = z.at(0, c);
  }
  reversed.layers[3] = zr;
  auto bank_c = CentroidBank::init_from(cs, 0.1);
  apply_batch_update(bank_c, reversed, labels, MemoryUpdate::sequential);
  bool same = true;
  for (std::size_t c = 0; c < 4; ++c) same &= bank_c.layers[3].at(0, c) == bank_a.layers[3].at(0, c);
  REQUIRE_FALSE(same);
}

TEST_CASE("hardest update touches each batch cluster once") {
  Rng rng(16);
  const auto cs = random_centroids(rng, 3, 4, {4});
  auto bank = CentroidBank::init_from(cs, 0.0);  // alpha 0: row becomes the chosen sample

  LayerEmbeddings<float> batch;
  Tensor<float> z({4, 4});
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = static_cast<float>(rng.normal());
  for (int i = 0; i < 4; ++i) l2_normalize(z.data() + static_cast<std::size_t>(i) * 4, 4);
  batch.layers[3] = z;
  const std::vector<int> labels = {2, 2, 2, 2};

  // hardest member = lowest similarity to the pre-update centroid
  const float* row = cs.layers[3].data() + 1 * 4;
  std::size_t hardest = 0;
  double worst = 2.0;
  for (std::size_t i = 0; i < 4; ++i) {
    const double sim = dot(z.data() + i * 4, row, 4);
    if (sim < worst) {
      worst = sim;
      hardest = i;
    }
  }
  apply_batch_update(bank, batch, labels, MemoryUpdate::hardest);
  for (std::size_t c = 0; c < 4; ++c)
    REQUIRE(bank.layers[3].at(1, c) == Catch::Approx(z.at(hardest, c)).margin(1e-6));
}
