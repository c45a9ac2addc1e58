#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "cmcrl/common.hpp"
#include "cmcrl/data.hpp"
#include "cmcrl/nn.hpp"
#include "cmcrl/rng.hpp"
#include "cmcrl/tensor.hpp"

namespace cmcrl {

enum class Projection { linear, nonlinear };

/// Multi-stage encoder configuration. layer_set selects which stage
/// embeddings are produced: {4} is the single-layer cluster-contrast mode,
/// {1,2,3,4} the full multi-layer mode. The set never changes the
/// architecture or its initialization, only which heads are evaluated.
struct EncoderConfig {
  std::array<std::size_t, 4> stage_widths = {32, 64, 128, 256};
  std::size_t embedding_dim = 512;
  bool use_ibn = false;
  Projection projection = Projection::nonlinear;
  std::vector<int> layer_set = {1, 2, 3, 4};

  void validate() const {
    check_config(embedding_dim > 0, "embedding_dim must be positive");
    for (auto w : stage_widths) check_config(w > 0, "stage widths must be positive");
    check_config(!layer_set.empty(), "layer_set must be nonempty");
    for (int k : layer_set) check_config(k >= 1 && k <= 4, "layer_set entries must be in 1..4");
  }

  bool has_layer(int k) const {
    for (int v : layer_set)
      if (v == k) return true;
    return false;
  }
};

/// Per-layer embedding matrices for a batch: layers[k-1] is {N, d} for
/// k in the layer set, empty otherwise. layers[3] is the final embedding.
template <class T>
struct LayerEmbeddings {
  std::array<Tensor<T>, 4> layers;

  std::size_t batch_size() const {
    for (const auto& l : layers)
      if (!l.empty()) return l.dim(0);
    return 0;
  }
};

namespace detail {

/// One encoder stage: stride-2 3x3 conv, normalization, ReLU.
template <class T>
struct Stage {
  nn::Conv2d<T> conv;
  nn::Norm2d<T> norm;
  nn::ReLU<T> relu;

  Stage(const std::string& name, std::size_t cin, std::size_t cout, bool ibn, Rng& rng)
      : conv(name + ".conv", cin, cout, 3, 2, 1, rng, /*use_bias=*/false), norm(name + ".norm", cout, ibn) {}

  Tensor<T> forward(const Tensor<T>& x, bool train) {
    return relu.forward(norm.forward(conv.forward(x), train));
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    return conv.backward(norm.backward(relu.backward(dy)));
  }
};

/// Projection head: global average pooling, one or two affine layers,
/// L2 normalization.
template <class T>
struct Head {
  nn::GlobalAvgPool<T> pool;
  nn::Linear<T> fc1;
  std::unique_ptr<nn::ReLU<T>> act;
  std::unique_ptr<nn::Linear<T>> fc2;
  nn::L2Normalize<T> norm;

  Head(const std::string& name, std::size_t cin, std::size_t d, Projection proj, Rng& rng)
      : fc1(name + ".fc1", cin, d, rng) {
    if (proj == Projection::nonlinear) {
      act = std::make_unique<nn::ReLU<T>>();
      fc2 = std::make_unique<nn::Linear<T>>(name + ".fc2", d, d, rng);
    }
  }

  Tensor<T> forward(const Tensor<T>& feat) {
    Tensor<T> h = fc1.forward(pool.forward(feat));
    if (fc2) h = fc2->forward(act->forward(h));
    return norm.forward(h);
  }

  Tensor<T> backward(const Tensor<T>& dz) {
    Tensor<T> g = norm.backward(dz);
    if (fc2) g = act->backward(fc2->backward(g));
    return pool.backward(fc1.backward(g));
  }
};

}  // namespace detail

/// The 4-stage convolutional encoder with one projection head per stage.
/// All four heads always exist (so initialization is independent of the
/// active layer set); forward computes embeddings only for active layers.
template <class T>
class MultiLayerEncoder {
public:
  MultiLayerEncoder(const EncoderConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed);
    std::size_t cin = 3;
    for (int k = 0; k < 4; ++k) {
      const bool ibn = cfg_.use_ibn && k < 2;  // IBN in the shallow stages
      stages_.push_back(std::make_unique<detail::Stage<T>>("stage" + std::to_string(k + 1), cin,
                                                           cfg_.stage_widths[k], ibn, rng));
      cin = cfg_.stage_widths[k];
    }
    for (int k = 0; k < 4; ++k)
      heads_.push_back(std::make_unique<detail::Head<T>>(
          "head" + std::to_string(k + 1), cfg_.stage_widths[k], cfg_.embedding_dim,
          cfg_.projection, rng));
  }

  const EncoderConfig& config() const { return cfg_; }
  void set_layer_set(std::vector<int> layer_set) {
    cfg_.layer_set = std::move(layer_set);
    cfg_.validate();
  }

  static void check_image_size(std::size_t size) {
    check_config(size >= 16 && size % 16 == 0,
                 "image size must be a positive multiple of 16 for the 4 stride-2 stages, got " +
                     std::to_string(size));
  }

  /// Forward a batch {N,3,S,S}. Returns unit-norm {N,d} embeddings for every
  /// layer in the configured layer set.
  LayerEmbeddings<T> forward(const Tensor<T>& x, bool train) {
    check_contract(x.rank() == 4 && x.dim(0) > 0, "encoder: empty batch");
    check_image_size(x.dim(2));
    LayerEmbeddings<T> out;
    Tensor<T> h = x;
    for (int k = 0; k < 4; ++k) {
      h = stages_[static_cast<std::size_t>(k)]->forward(h, train);
      stage_out_dims_[static_cast<std::size_t>(k)] = h.dims();
      if (cfg_.has_layer(k + 1))
        out.layers[static_cast<std::size_t>(k)] =
            heads_[static_cast<std::size_t>(k)]->forward(h);
    }
    return out;
  }

  /// Backward from per-layer embedding gradients (empty tensors for layers
  /// without gradient). Accumulates into parameter grads.
  void backward(const LayerEmbeddings<T>& dz) {
    Tensor<T> grad;  // gradient flowing into stage k output
    for (int k = 3; k >= 0; --k) {
      const auto ku = static_cast<std::size_t>(k);
      if (!dz.layers[ku].empty()) {
        Tensor<T> g = heads_[ku]->backward(dz.layers[ku]);
        if (grad.empty()) {
          grad = std::move(g);
        } else {
          for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += g[i];
        }
      }
      if (grad.empty()) grad = Tensor<T>(stage_out_dims_[ku], T(0));
      grad = stages_[ku]->backward(grad);
    }
  }

  std::vector<Param<T>*> params() {
    std::vector<Param<T>*> out;
    for (auto& s : stages_) {
      auto p = s->conv.params();
      out.insert(out.end(), p.begin(), p.end());
      p = s->norm.params();
      out.insert(out.end(), p.begin(), p.end());
    }
    for (auto& h : heads_) {
      auto p = h->fc1.params();
      out.insert(out.end(), p.begin(), p.end());
      if (h->fc2) {
        p = h->fc2->params();
        out.insert(out.end(), p.begin(), p.end());
      }
    }
    return out;
  }

  std::vector<Buffer<T>*> buffers() {
    std::vector<Buffer<T>*> out;
    for (auto& s : stages_) {
      auto b = s->norm.buffers();
      out.insert(out.end(), b.begin(), b.end());
    }
    return out;
  }

private:
  EncoderConfig cfg_;
  std::vector<std::unique_ptr<detail::Stage<T>>> stages_;
  std::vector<std::unique_ptr<detail::Head<T>>> heads_;
  std::array<std::vector<std::size_t>, 4> stage_out_dims_;
};

/// Pack images [first, first+count) of a set into a {count,3,S,S} batch.
template <class T>
Tensor<T> pack_batch(const std::vector<Image>& images, const std::vector<std::size_t>& indices) {
  check_contract(!indices.empty(), "pack_batch: empty index list");
  const std::size_t s = images[indices[0]].dim(1);
  Tensor<T> x({indices.size(), 3, s, s});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const Image& img = images[indices[i]];
    for (std::size_t j = 0; j < img.size(); ++j) x[i * img.size() + j] = static_cast<T>(img[j]);
  }
  return x;
}

/// Evaluation-mode embeddings for a whole set, minibatched.
template <class T>
LayerEmbeddings<T> encode_set(MultiLayerEncoder<T>& enc, const LabeledImageSet& set,
                              std::size_t batch = 64) {
  check_contract(set.size() > 0, "encode_set: empty set");
  LayerEmbeddings<T> all;
  const std::size_t d = enc.config().embedding_dim;
  for (int k = 0; k < 4; ++k)
    if (enc.config().has_layer(k + 1))
      all.layers[static_cast<std::size_t>(k)] = Tensor<T>({set.size(), d});
  for (std::size_t start = 0; start < set.size(); start += batch) {
    const std::size_t n = std::min(batch, set.size() - start);
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = start + i;
    auto z = enc.forward(pack_batch<T>(set.images, idx), /*train=*/false);
    for (int k = 0; k < 4; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      if (z.layers[ku].empty()) continue;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j)
          all.layers[ku].at(start + i, j) = z.layers[ku].at(i, j);
    }
  }
  return all;
}

// ---------------------------------------------------------------------------
// Linear classification head
// ---------------------------------------------------------------------------

/// The fine-tuned classifier: affine map from the final embedding to class
/// scores.
struct LinearHead {
  Tensor<float> weight;  // {K, d}
  Tensor<float> bias;    // {K}

  LinearHead() = default;
  LinearHead(std::size_t k, std::size_t d) : weight({k, d}, 0.0f), bias({k}, 0.0f) {}

  std::size_t num_classes() const { return bias.dim(0); }
  std::size_t dim() const { return weight.empty() ? 0 : weight.dim(1); }
};

/// Affine class scores for one embedding.
inline std::vector<float> classify(const std::vector<float>& embedding, const LinearHead& head) {
  check_contract(embedding.size() == head.dim(), "classify: embedding dimension mismatch");
  const std::size_t k = head.num_classes(), d = head.dim();
  std::vector<float> scores(k, 0.0f);
  for (std::size_t j = 0; j < k; ++j) {
    double s = static_cast<double>(head.bias[j]);
    for (std::size_t i = 0; i < d; ++i)
      s += static_cast<double>(head.weight.at(j, i)) * static_cast<double>(embedding[i]);
    scores[j] = static_cast<float>(s);
  }
  return scores;
}

/// Argmax with ties resolved to the lowest index. Returns a 1-based class id.
inline int predict_class(const std::vector<float>& scores) {
  check_contract(!scores.empty(), "predict_class: empty scores");
  std::size_t best = 0;
  for (std::size_t j = 1; j < scores.size(); ++j)
    if (scores[j] > scores[best]) best = j;
  return static_cast<int>(best) + 1;
}

}  // namespace cmcrl
