#pragma once

#include <chrono>
#include <cmath>
#include <iostream>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "cmcrl/augment.hpp"
#include "cmcrl/checkpoint.hpp"
#include "cmcrl/cluster.hpp"
#include "cmcrl/config.hpp"
#include "cmcrl/data.hpp"
#include "cmcrl/loss.hpp"
#include "cmcrl/memory.hpp"
#include "cmcrl/metrics.hpp"
#include "cmcrl/model.hpp"
#include "cmcrl/nn.hpp"

namespace cmcrl {

/// One pre-training epoch's log record.
struct EpochRow {
  int epoch = 0;
  int m = 0;
  std::size_t n_clustered = 0;
  double mean_loss = std::numeric_limits<double>::quiet_NaN();
  double cacc = -1.0;
  double ari = -1.0;
  double wall_time_s = 0.0;
};

struct FinetuneRow {
  int epoch = 0;
  double mean_loss = 0.0;
  double train_acc = 0.0;
};

/// Full training state: encoder, optimizer, memory bank, epoch counter, and
/// the rng stream. Serializing and restoring the state resumes training
/// with bitwise-identical results.
struct TrainState {
  RunConfig cfg;
  MultiLayerEncoder<float> encoder;
  nn::Sgd<float> optimizer;
  CentroidBank bank;
  int epoch = 0;
  Rng rng;
  std::vector<EpochRow> history;

  explicit TrainState(const RunConfig& config)
      : cfg(config),
        encoder((config.validate(), config.encoder), config.seed),
        optimizer(encoder.params(), config.sgd_momentum, config.weight_decay),
        rng(config.seed ^ 0x9e3779b97f4a7c15ull) {}
};

namespace detail {

/// PK sampling: P = B / P_inst clusters, P_inst instances each. Clusters are
/// drawn without replacement when m >= P (with replacement otherwise);
/// instances uniformly with replacement within the cluster.
inline std::vector<std::size_t> pk_sample(const ClusterAssignment& assign, int batch_size,
                                          int instances_per_cluster, Rng& rng,
                                          std::vector<int>* sampled_labels) {
  const int p = batch_size / instances_per_cluster;
  const int m = assign.num_clusters;
  std::vector<int> clusters;
  if (m >= p) {
    std::vector<int> ids(static_cast<std::size_t>(m));
    for (int j = 0; j < m; ++j) ids[static_cast<std::size_t>(j)] = j + 1;
    rng.shuffle(ids);
    clusters.assign(ids.begin(), ids.begin() + p);
  } else {
    for (int i = 0; i < p; ++i)
      clusters.push_back(static_cast<int>(rng.uniform_int(1, m)));
  }
  std::vector<std::size_t> indices;
  indices.reserve(static_cast<std::size_t>(batch_size));
  if (sampled_labels) sampled_labels->clear();
  for (int j : clusters) {
    const auto& members = assign.members[static_cast<std::size_t>(j - 1)];
    for (int i = 0; i < instances_per_cluster; ++i) {
      const auto pick = static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(members.size()) - 1));
      indices.push_back(members[pick]);
      if (sampled_labels) sampled_labels->push_back(j);
    }
  }
  return indices;
}

inline double epoch_lr(const RunConfig& cfg, int epoch) {
  const double cutoff = cfg.lr_decay_at * static_cast<double>(cfg.epochs);
  return static_cast<double>(epoch) > cutoff ? cfg.learning_rate * cfg.lr_decay_factor
                                             : cfg.learning_rate;
}

}  // namespace detail

/// Run pre-training epochs state.epoch+1 .. cfg.epochs. Per epoch: a clean
/// evaluation-mode pass embeds the full set, DBSCAN on the re-ranked
/// Jaccard distances assigns pseudo-labels, centroids seed the memory bank,
/// then S iterations of PK-sampled contrastive steps update the encoder and
/// (afterwards) the bank. Epochs with no cluster are skipped with a warning.
/// run_until (when >= 0) stops after that epoch without altering the
/// schedule, so a checkpointed prefix resumes exactly.
inline void pretrain(TrainState& st, const LabeledImageSet& set, int run_until = -1) {
  check_contract(set.size() > 0, "pretrain: empty set");
  const RunConfig& cfg = st.cfg;
  MultiLayerEncoder<float>::check_image_size(set.image_size());
  const int last = run_until < 0 ? cfg.epochs : std::min(cfg.epochs, run_until);

  for (int t = st.epoch + 1; t <= last; ++t) {
    const auto tic = std::chrono::steady_clock::now();

    auto embeddings = encode_set(st.encoder, set);
    const auto feats = clustering_features(embeddings, cfg.cluster.cluster_on_concat);
    const auto dist = jaccard_distance_matrix(feats, cfg.cluster.k1, cfg.cluster.k2,
                                              cfg.cluster.lambda);
    const auto assign = dbscan(dist, cfg.cluster.eps, cfg.cluster.min_samples);

    EpochRow row;
    row.epoch = t;
    row.m = assign.num_clusters;
    row.n_clustered = assign.num_clustered;
    row.cacc = cacc(set.labels, assign.pseudo_labels);
    row.ari = ari(set.labels, assign.pseudo_labels);

    if (assign.num_clusters == 0) {
      std::cerr << "warning: epoch " << t << " produced no cluster; skipping optimization\n";
      row.wall_time_s =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - tic).count();
      st.history.push_back(row);
      st.epoch = t;
      continue;
    }

    st.bank = CentroidBank::init_from(centroids(embeddings, assign), cfg.memory_alpha, t);

    const double lr = detail::epoch_lr(cfg, t);
    double loss_sum = 0.0;
    std::vector<int> batch_labels;
    for (int s = 0; s < cfg.iters_per_epoch; ++s) {
      const auto indices = detail::pk_sample(assign, cfg.batch_size, cfg.instances_per_cluster,
                                             st.rng, &batch_labels);
      // augment with per-sample derived streams
      std::vector<Image> augmented;
      augmented.reserve(indices.size());
      for (std::size_t idx : indices) {
        Rng sample_rng(st.rng.next_u64());
        augmented.push_back(augment(set.images[idx], cfg.augment, sample_rng));
      }
      std::vector<std::size_t> all(augmented.size());
      for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
      auto z = st.encoder.forward(pack_batch<float>(augmented, all), /*train=*/true);

      const std::size_t b = indices.size();
      LayerEmbeddings<float> grads;
      for (int k = 0; k < 4; ++k)
        if (!z.layers[static_cast<std::size_t>(k)].empty())
          grads.layers[static_cast<std::size_t>(k)] =
              Tensor<float>(z.layers[static_cast<std::size_t>(k)].dims(), 0.0f);

      double batch_loss = 0.0;
      std::array<std::vector<double>, 4> g;
      for (std::size_t i = 0; i < b; ++i) {
        batch_loss += mlnce(z, i, batch_labels[i], st.bank, cfg.loss, &g);
        for (int k : cfg.loss.layer_set) {
          auto& gl = grads.layers[static_cast<std::size_t>(k - 1)];
          const auto& gv = g[static_cast<std::size_t>(k - 1)];
          for (std::size_t c = 0; c < gl.dim(1); ++c)
            gl.at(i, c) = static_cast<float>(gv[c] / static_cast<double>(b));
        }
      }
      batch_loss /= static_cast<double>(b);
      loss_sum += batch_loss;

      st.optimizer.zero_grad();
      st.encoder.backward(grads);
      st.optimizer.step(lr);

      apply_batch_update(st.bank, z, batch_labels, cfg.memory_update);
    }

    row.mean_loss = loss_sum / static_cast<double>(cfg.iters_per_epoch);
    row.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - tic).count();
    st.history.push_back(row);
    st.epoch = t;
  }
}

/// Convenience wrapper: fresh state, full pre-training run.
inline std::unique_ptr<TrainState> pretrain(const LabeledImageSet& set, const RunConfig& cfg) {
  auto st = std::make_unique<TrainState>(cfg);
  pretrain(*st, set);
  return st;
}

// ---------------------------------------------------------------------------
// Linear probe fine-tuning
// ---------------------------------------------------------------------------

/// Train a linear softmax classifier on fixed embedding rows {N, d}.
inline LinearHead train_linear_probe(const Tensor<float>& embeddings,
                                     const std::vector<int>& labels, int num_classes, int epochs,
                                     double lr, int batch_size, std::uint64_t seed,
                                     std::vector<FinetuneRow>* curve = nullptr) {
  check_contract(embeddings.dim(0) == labels.size(), "train_linear_probe: size mismatch");
  const std::size_t n = embeddings.dim(0), d = embeddings.dim(1);
  const auto k = static_cast<std::size_t>(num_classes);
  Rng rng(seed);
  nn::Linear<float> fc("head", d, k, rng);
  nn::Sgd<float> opt(fc.params(), 0.9, 0.0);

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  for (int e = 1; e <= epochs; ++e) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch_size)) {
      const std::size_t b = std::min<std::size_t>(static_cast<std::size_t>(batch_size), n - start);
      Tensor<float> x({b, d});
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t c = 0; c < d; ++c) x.at(i, c) = embeddings.at(order[start + i], c);
      Tensor<float> scores = fc.forward(x);
      Tensor<float> dscores({b, k});
      for (std::size_t i = 0; i < b; ++i) {
        std::vector<double> logits(k);
        for (std::size_t j = 0; j < k; ++j) logits[j] = static_cast<double>(scores.at(i, j));
        const auto pos = static_cast<std::size_t>(labels[order[start + i]] - 1);
        std::vector<double> probs;
        loss_sum += nll_from_logits(logits, pos, &probs);
        std::size_t best = 0;
        for (std::size_t j = 1; j < k; ++j)
          if (logits[j] > logits[best]) best = j;
        if (best == pos) ++correct;
        for (std::size_t j = 0; j < k; ++j)
          dscores.at(i, j) =
              static_cast<float>((probs[j] - (j == pos ? 1.0 : 0.0)) / static_cast<double>(b));
      }
      opt.zero_grad();
      fc.backward(dscores);
      opt.step(lr);
    }
    if (curve)
      curve->push_back({e, loss_sum / static_cast<double>(n),
                        static_cast<double>(correct) / static_cast<double>(n)});
  }

  LinearHead head(k, d);
  head.weight = fc.weight().value;
  head.bias = fc.bias().value;
  return head;
}

/// Fine-tune the linear classification head on the frozen encoder's final
/// embeddings. The encoder is never touched.
inline LinearHead finetune(TrainState& st, const LabeledImageSet& finetune_set, int epochs,
                           double lr, std::vector<FinetuneRow>* curve = nullptr) {
  check_contract(finetune_set.size() > 0, "finetune: empty set");
  const int k = finetune_set.num_classes();
  check_config(k >= 2, "finetune: need at least 2 classes");
  auto embeddings = encode_set(st.encoder, finetune_set);
  const auto& z4 = embeddings.layers[3].empty()
                       ? clustering_features(embeddings, false)
                       : embeddings.layers[3];
  return train_linear_probe(z4, finetune_set.labels, k, epochs, lr, st.cfg.finetune_batch,
                            st.cfg.seed ^ 0xfeedface12345678ull, curve);
}

/// Classify the test set with the frozen encoder plus head and report
/// metrics, carrying over the latest pre-training clustering scores.
inline MetricsReport evaluate(TrainState& st, const LinearHead& head,
                              const LabeledImageSet& test_set) {
  if (test_set.size() == 0) throw eval_error("evaluate: empty test set");
  check_config(static_cast<int>(head.num_classes()) == test_set.num_classes(),
               "evaluate: head has " + std::to_string(head.num_classes()) +
                   " classes but the test set has " + std::to_string(test_set.num_classes()));
  auto embeddings = encode_set(st.encoder, test_set);
  const auto& z4 = embeddings.layers[3].empty()
                       ? clustering_features(embeddings, false)
                       : embeddings.layers[3];
  const std::size_t d = z4.dim(1);
  std::vector<int> predicted(test_set.size());
  for (std::size_t i = 0; i < test_set.size(); ++i) {
    std::vector<float> emb(z4.data() + i * d, z4.data() + (i + 1) * d);
    predicted[i] = predict_class(classify(emb, head));
  }
  const auto cm = classification_metrics(test_set.labels, predicted, test_set.num_classes());
  MetricsReport report;
  report.acc = cm.acc;
  report.recall = cm.recall;
  report.precision = cm.precision;
  report.f1 = cm.f1;
  report.confusion = cm.confusion;
  if (!st.history.empty()) {
    report.cacc = st.history.back().cacc;
    report.ari = st.history.back().ari;
  }
  return report;
}

// ---------------------------------------------------------------------------
// State serialization
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

/// Pack the full training state into a checkpoint: config echo, epoch, rng
/// and metric snapshot in the manifest; parameters, norm statistics,
/// optimizer velocities and the memory bank as blobs.
inline Checkpoint state_to_checkpoint(TrainState& st) {
  Checkpoint ck;
  ck.set("format", "cmcrl-train-v1");
  ck.set("epoch", std::to_string(st.epoch));
  ck.set("rng_state", st.rng.state());
  if (!st.history.empty()) {
    const auto& r = st.history.back();
    ck.set("last.m", std::to_string(r.m));
    ck.set("last.n_clustered", std::to_string(r.n_clustered));
    ck.set("last.mean_loss", format_double(r.mean_loss));
    ck.set("last.cacc", format_double(r.cacc));
    ck.set("last.ari", format_double(r.ari));
  }
  {
    std::istringstream cfg_lines(echo_config(st.cfg));
    std::string line, section;
    while (std::getline(cfg_lines, line)) {
      if (line.empty()) continue;
      if (line.front() == '[') {
        section = line.substr(1, line.size() - 2);
        continue;
      }
      const auto eq = line.find(" = ");
      ck.set("cfg." + section + "." + line.substr(0, eq), line.substr(eq + 3));
    }
  }
  for (auto* p : st.encoder.params()) ck.add_blob("param." + p->name, p->value);
  for (auto* b : st.encoder.buffers()) ck.add_blob("buffer." + b->name, b->value);
  {
    const auto& params = st.optimizer.params();
    auto& vel = st.optimizer.velocity();
    for (std::size_t i = 0; i < params.size(); ++i)
      ck.add_blob("opt." + params[i]->name, vel[i]);
  }
  ck.set("bank.alpha", format_double(st.bank.alpha));
  ck.set("bank.epoch_id", std::to_string(st.bank.epoch_id));
  ck.set("bank.num_clusters", std::to_string(st.bank.num_clusters));
  for (int k = 0; k < 4; ++k)
    if (!st.bank.layers[static_cast<std::size_t>(k)].empty())
      ck.add_blob("bank.layer" + std::to_string(k + 1),
                  st.bank.layers[static_cast<std::size_t>(k)]);
  return ck;
}

/// Extract the RunConfig echoed into a checkpoint manifest.
inline RunConfig config_from_checkpoint(const Checkpoint& ck) {
  ConfigFile cf;
  for (const auto& [k, v] : ck.manifest) {
    if (k.rfind("cfg.", 0) != 0) continue;
    const auto dot = k.find('.', 4);
    if (dot == std::string::npos) continue;
    cf.set(k.substr(4, dot - 4), k.substr(dot + 1), v);
  }
  return run_config_from(cf);
}

/// Rebuild a TrainState from a checkpoint. Blob shapes must match the
/// architecture the manifest describes.
inline std::unique_ptr<TrainState> state_from_checkpoint(const Checkpoint& ck) {
  const auto fmt = ck.get("format");
  if (!fmt || *fmt != "cmcrl-train-v1") throw io_error("not a training checkpoint");
  const RunConfig cfg = config_from_checkpoint(ck);
  auto st = std::make_unique<TrainState>(cfg);

  auto restore = [&](const std::string& name, Tensor<float>& dst) {
    const Tensor<float>* src = ck.find_blob(name);
    if (!src) throw io_error("checkpoint missing blob: " + name);
    if (src->dims() != dst.dims()) throw io_error("checkpoint blob shape mismatch: " + name);
    dst = *src;
  };

  for (auto* p : st->encoder.params()) restore("param." + p->name, p->value);
  for (auto* b : st->encoder.buffers()) restore("buffer." + b->name, b->value);
  {
    const auto& params = st->optimizer.params();
    auto& vel = st->optimizer.velocity();
    for (std::size_t i = 0; i < params.size(); ++i) restore("opt." + params[i]->name, vel[i]);
  }
  st->epoch = std::stoi(ck.get("epoch").value_or("0"));
  if (auto rs = ck.get("rng_state")) st->rng.set_state(*rs);
  st->bank.alpha = std::stod(ck.get("bank.alpha").value_or("0.1"));
  st->bank.epoch_id = std::stoi(ck.get("bank.epoch_id").value_or("0"));
  st->bank.num_clusters = std::stoi(ck.get("bank.num_clusters").value_or("0"));
  for (int k = 0; k < 4; ++k) {
    const Tensor<float>* b = ck.find_blob("bank.layer" + std::to_string(k + 1));
    if (b) st->bank.layers[static_cast<std::size_t>(k)] = *b;
  }
  if (auto m = ck.get("last.m")) {
    EpochRow r;
    r.epoch = st->epoch;
    r.m = std::stoi(*m);
    r.n_clustered = static_cast<std::size_t>(std::stoul(ck.get("last.n_clustered").value_or("0")));
    r.mean_loss = std::stod(ck.get("last.mean_loss").value_or("nan"));
    r.cacc = std::stod(ck.get("last.cacc").value_or("-1"));
    r.ari = std::stod(ck.get("last.ari").value_or("-1"));
    st->history.push_back(r);
  }
  return st;
}

/// Head checkpoint (separate small file).
inline Checkpoint head_to_checkpoint(const LinearHead& head, const RunConfig& cfg) {
  Checkpoint ck;
  ck.set("format", "cmcrl-head-v1");
  ck.set("num_classes", std::to_string(head.num_classes()));
  ck.set("embedding_dim", std::to_string(cfg.encoder.embedding_dim));
  ck.add_blob("head.weight", head.weight);
  ck.add_blob("head.bias", head.bias);
  return ck;
}

inline LinearHead head_from_checkpoint(const Checkpoint& ck) {
  const auto fmt = ck.get("format");
  if (!fmt || *fmt != "cmcrl-head-v1") throw io_error("not a head checkpoint");
  const Tensor<float>* w = ck.find_blob("head.weight");
  const Tensor<float>* b = ck.find_blob("head.bias");
  if (!w || !b) throw io_error("head checkpoint missing blobs");
  LinearHead head;
  head.weight = *w;
  head.bias = *b;
  return head;
}

}  // namespace cmcrl
