#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "cmcrl/checkpoint.hpp"
#include "cmcrl/loss.hpp"
#include "cmcrl/model.hpp"
#include "cmcrl/nn.hpp"
#include "cmcrl/rng.hpp"

using namespace cmcrl;

namespace {

// finite-difference check of a layer: loss = sum(y^2)/2 so dy = y
template <class Forward, class Backward>
double fd_layer_check(Tensor<double>& x, std::vector<Param<double>*> params, Forward fwd,
                      Backward bwd) {
  auto y = fwd();
  Tensor<double> dy = y;
  for (auto* p : params) p->zero_grad();
  auto dx = bwd(dy);
  auto loss = [&]() {
    auto out = fwd();
    double s = 0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * out[i] / 2;
    return s;
  };
  const double h = 1e-6;
  double max_rel = 0;
  auto probe = [&](double* v, double analytic) {
    const double orig = *v;
    *v = orig + h;
    const double up = loss();
    *v = orig - h;
    const double dn = loss();
    *v = orig;
    const double fd = (up - dn) / (2 * h);
    const double rel = std::abs(analytic - fd) / std::max({std::abs(analytic), std::abs(fd), 1.0});
    max_rel = std::max(max_rel, rel);
  };
  for (auto* p : params)
    for (std::size_t i = 0; i < p->value.size(); i += std::max<std::size_t>(1, p->value.size() / 9))
      probe(&p->value[i], p->grad[i]);
  for (std::size_t i = 0; i < x.size(); i += std::max<std::size_t>(1, x.size() / 9))
    probe(&x[i], dx[i]);
  return max_rel;
}

Tensor<double> random_tensor(Rng& rng, std::vector<std::size_t> dims) {
  Tensor<double> t(std::move(dims));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal();
  return t;
}

EncoderConfig tiny_config() {
  EncoderConfig ec;
  ec.stage_widths = {6, 8, 10, 12};
  ec.embedding_dim = 8;
  return ec;
}

}  // namespace

TEST_CASE("conv2d gradients match finite differences") {
  Rng rng(101);
  nn::Conv2d<double> conv("c", 2, 3, 3, 2, 1, rng);
  auto x = random_tensor(rng, {2, 2, 6, 6});
  REQUIRE(fd_layer_check(x, conv.params(), [&] { return conv.forward(x); },
                         [&](Tensor<double>& dy) { return conv.backward(dy); }) < 1e-7);
}

TEST_CASE("batchnorm gradients match finite differences") {
  Rng rng(102);
  nn::BatchNorm2d<double> bn("b", 3);
  auto x = random_tensor(rng, {3, 3, 4, 4});
  REQUIRE(fd_layer_check(x, bn.params(), [&] { return bn.forward(x, true); },
                         [&](Tensor<double>& dy) { return bn.backward(dy); }) < 1e-6);
}

TEST_CASE("instancenorm gradients match finite differences") {
  Rng rng(103);
  nn::InstanceNorm2d<double> in("i", 3);
  auto x = random_tensor(rng, {2, 3, 4, 4});
  REQUIRE(fd_layer_check(x, in.params(), [&] { return in.forward(x, true); },
                         [&](Tensor<double>& dy) { return in.backward(dy); }) < 1e-6);
}

TEST_CASE("linear and l2-normalize gradients match finite differences") {
  Rng rng(104);
  nn::Linear<double> fc("l", 5, 4, rng);
  auto x = random_tensor(rng, {3, 5});
  REQUIRE(fd_layer_check(x, fc.params(), [&] { return fc.forward(x); },
                         [&](Tensor<double>& dy) { return fc.backward(dy); }) < 1e-7);

  nn::L2Normalize<double> l2;
  auto x2 = random_tensor(rng, {3, 5});
  std::vector<Param<double>*> none;
  REQUIRE(fd_layer_check(x2, none, [&] { return l2.forward(x2); },
                         [&](Tensor<double>& dy) { return l2.backward(dy); }) < 1e-6);
}

TEST_CASE("encode produces one unit vector per active layer") {
  EncoderConfig ec;
  ec.stage_widths = {4, 6, 8, 10};
  ec.embedding_dim = 512;
  MultiLayerEncoder<float> enc(ec, 0);
  Rng rng(105);
  Tensor<float> x({16, 3, 16, 16});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(rng.uniform());
  const auto z = enc.forward(x, false);
  for (int k = 0; k < 4; ++k) {
    const auto& layer = z.layers[static_cast<std::size_t>(k)];
    REQUIRE(layer.dim(0) == 16);
    REQUIRE(layer.dim(1) == 512);
    for (std::size_t i = 0; i < 16; ++i)
      REQUIRE(std::abs(l2_norm(layer.data() + i * 512, 512) - 1.0) < 1e-5);
  }
}

TEST_CASE("duplicate images get identical embeddings in eval mode") {
  MultiLayerEncoder<float> enc(tiny_config(), 3);
  Rng rng(106);
  Tensor<float> x({4, 3, 16, 16});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(rng.uniform());
  const std::size_t img = 3 * 16 * 16;
  for (std::size_t j = 0; j < img; ++j) x[2 * img + j] = x[0 * img + j];
  const auto z = enc.forward(x, false);
  for (int k = 0; k < 4; ++k) {
    const auto& layer = z.layers[static_cast<std::size_t>(k)];
    for (std::size_t c = 0; c < layer.dim(1); ++c) REQUIRE(layer.at(0, c) == layer.at(2, c));
  }
}

TEST_CASE("incompatible image sizes are rejected") {
  MultiLayerEncoder<float> enc(tiny_config(), 0);
  Tensor<float> x({1, 3, 12, 12}, 0.1f);
  REQUIRE_THROWS_AS(enc.forward(x, false), config_error);
}

TEST_CASE("restricting the layer set never changes the final embedding") {
  Rng rng(107);
  Tensor<float> x({5, 3, 32, 32});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(rng.uniform());

  MultiLayerEncoder<float> enc(tiny_config(), 11);
  const auto full = enc.forward(x, false);
  enc.set_layer_set({4});
  const auto single = enc.forward(x, false);
  REQUIRE(single.layers[0].empty());
  REQUIRE(single.layers[3] == full.layers[3]);
}

TEST_CASE("ibn toggle keeps output shapes") {
  Rng rng(108);
  Tensor<float> x({3, 3, 16, 16});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(rng.uniform());
  auto cfg = tiny_config();
  MultiLayerEncoder<float> plain(cfg, 5);
  cfg.use_ibn = true;
  MultiLayerEncoder<float> ibn(cfg, 5);
  const auto a = plain.forward(x, true);
  const auto b = ibn.forward(x, true);
  for (int k = 0; k < 4; ++k)
    REQUIRE(a.layers[static_cast<std::size_t>(k)].dims() ==
            b.layers[static_cast<std::size_t>(k)].dims());
}

TEST_CASE("every parameter receives gradient from the multi-layer loss") {
  auto cfg = tiny_config();
  cfg.use_ibn = true;
  MultiLayerEncoder<float> enc(cfg, 21);
  Rng rng(109);
  Tensor<float> x({6, 3, 16, 16});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(rng.uniform());
  auto z = enc.forward(x, true);

  // two-cluster bank from the embeddings themselves
  std::array<Tensor<float>, 4> bank;
  for (int k = 0; k < 4; ++k) {
    Tensor<float> rows({2, cfg.embedding_dim});
    for (std::size_t c = 0; c < cfg.embedding_dim; ++c) {
      rows.at(0, c) = z.layers[static_cast<std::size_t>(k)].at(0, c);
      rows.at(1, c) = z.layers[static_cast<std::size_t>(k)].at(3, c);
    }
    bank[static_cast<std::size_t>(k)] = std::move(rows);
  }
  LossConfig lc;
  lc.temperature = 0.05;

  LayerEmbeddings<float> grads;
  for (int k = 0; k < 4; ++k)
    grads.layers[static_cast<std::size_t>(k)] =
        Tensor<float>(z.layers[static_cast<std::size_t>(k)].dims(), 0.0f);
  std::array<std::vector<double>, 4> g;
  for (std::size_t i = 0; i < 6; ++i) {
    SampleView<float> s;
    s.d = cfg.embedding_dim;
    for (int k = 0; k < 4; ++k)
      s.z[static_cast<std::size_t>(k)] =
          z.layers[static_cast<std::size_t>(k)].data() + i * cfg.embedding_dim;
    mlnce(s, static_cast<int>(i % 2) + 1, bank, 2, lc, &g);
    for (int k = 0; k < 4; ++k)
      for (std::size_t c = 0; c < cfg.embedding_dim; ++c)
        grads.layers[static_cast<std::size_t>(k)].at(i, c) = static_cast<float>(g[static_cast<std::size_t>(k)][c]);
  }
  for (auto* p : enc.params()) p->zero_grad();
  enc.backward(grads);
  for (auto* p : enc.params()) {
    double sum = 0;
    for (std::size_t i = 0; i < p->grad.size(); ++i) sum += std::abs(static_cast<double>(p->grad[i]));
    INFO(p->name);
    REQUIRE(sum > 0.0);
  }
}

TEST_CASE("classify matches a manual dot-product oracle") {
  Rng rng(110);
  LinearHead head(5, 9);
  for (std::size_t i = 0; i < head.weight.size(); ++i) head.weight[i] = static_cast<float>(rng.normal());
  for (std::size_t i = 0; i < head.bias.size(); ++i) head.bias[i] = static_cast<float>(rng.normal());
  std::vector<float> emb(9);
  for (auto& v : emb) v = static_cast<float>(rng.normal());
  const auto scores = classify(emb, head);
  for (std::size_t j = 0; j < 5; ++j) {
    double expect = head.bias[j];
    for (std::size_t c = 0; c < 9; ++c)
      expect += static_cast<double>(head.weight.at(j, c)) * static_cast<double>(emb[c]);
    REQUIRE(scores[j] == Catch::Approx(expect).margin(1e-6));
  }
}

TEST_CASE("classify with zero head ties to the lowest index") {
  LinearHead head(4, 6);
  const std::vector<float> emb(6, 0.3f);
  const auto scores = classify(emb, head);
  for (float s : scores) REQUIRE(s == 0.0f);
  REQUIRE(predict_class(scores) == 1);
}

TEST_CASE("classify with a forced one-hot row picks that class") {
  LinearHead head(4, 6);
  head.weight.at(2, 0) = 100.0f;
  std::vector<float> emb(6, 0.0f);
  emb[0] = 1.0f;
  REQUIRE(predict_class(classify(emb, head)) == 3);
}

TEST_CASE("classify rejects dimension mismatches") {
  LinearHead head(3, 4);
  const std::vector<float> emb(5, 0.0f);
  REQUIRE_THROWS_AS(classify(emb, head), contract_error);
}

TEST_CASE("checkpoint blobs round-trip bit-exactly") {
  namespace fs = std::filesystem;
  Rng rng(111);
  Checkpoint ck;
  ck.set("format", "test");
  ck.set("note", "value with spaces = and symbols");
  for (int b = 0; b < 3; ++b) {
    Tensor<float> t({4, 5});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(rng.normal());
    ck.add_blob("blob" + std::to_string(b), t);
  }
  const auto path = (fs::temp_directory_path() / "cmcrl_ck_test.cmcrl").string();
  ck.save(path);
  const auto loaded = Checkpoint::load(path);
  REQUIRE(loaded.get("note") == ck.get("note"));
  REQUIRE(loaded.blobs.size() == 3);
  for (std::size_t b = 0; b < 3; ++b) {
    REQUIRE(loaded.blobs[b].first == ck.blobs[b].first);
    REQUIRE(loaded.blobs[b].second == ck.blobs[b].second);
  }
  fs::remove(path);
}
