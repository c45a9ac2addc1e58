#pragma once

#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cmcrl/augment.hpp"
#include "cmcrl/cluster.hpp"
#include "cmcrl/common.hpp"
#include "cmcrl/data.hpp"
#include "cmcrl/loss.hpp"
#include "cmcrl/memory.hpp"
#include "cmcrl/model.hpp"

namespace cmcrl {

/// Flat key-value config with section headers:
///
///   [train]
///   epochs = 50
///
/// Every key is optional. Keys that no module consumes are rejected by
/// name when the run config is assembled.
class ConfigFile {
public:
  struct Entry {
    std::string section, key, value;
    bool consumed = false;
  };

  static ConfigFile parse_string(const std::string& text, const std::string& origin = "<string>") {
    ConfigFile cf;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::string t = trim(line);
      if (t.empty() || t[0] == '#' || t[0] == ';') continue;
      if (t.front() == '[') {
        if (t.back() != ']')
          throw config_error(origin + ":" + std::to_string(lineno) + ": malformed section header");
        section = trim(t.substr(1, t.size() - 2));
        continue;
      }
      const auto eq = t.find('=');
      if (eq == std::string::npos)
        throw config_error(origin + ":" + std::to_string(lineno) + ": expected key = value");
      Entry e;
      e.section = section;
      e.key = trim(t.substr(0, eq));
      e.value = trim(t.substr(eq + 1));
      check_config(!e.key.empty(), origin + ":" + std::to_string(lineno) + ": empty key");
      cf.entries_.push_back(std::move(e));
    }
    return cf;
  }

  static ConfigFile parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file: " + path);
    std::ostringstream text;
    text << in.rdbuf();
    return parse_string(text.str(), path);
  }

  /// Set (or override) a key; overrides count as consumed-on-read like any
  /// other entry and are flagged as explicitly set.
  void set(const std::string& section, const std::string& key, const std::string& value) {
    for (auto& e : entries_) {
      if (e.section == section && e.key == key) {
        e.value = value;
        return;
      }
    }
    entries_.push_back({section, key, value, false});
  }

  std::optional<std::string> get(const std::string& section, const std::string& key) {
    for (auto& e : entries_) {
      if (e.section == section && e.key == key) {
        e.consumed = true;
        return e.value;
      }
    }
    return std::nullopt;
  }

  bool has(const std::string& section, const std::string& key) const {
    for (const auto& e : entries_)
      if (e.section == section && e.key == key) return true;
    return false;
  }

  void reject_unconsumed() const {
    for (const auto& e : entries_)
      if (!e.consumed)
        throw config_error("unknown config key: [" + e.section + "] " + e.key);
  }

  const std::vector<Entry>& entries() const { return entries_; }

  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

private:
  std::vector<Entry> entries_;
};

namespace detail {

inline double to_double(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw config_error("bad numeric value for " + key + ": '" + v + "'");
  }
}

inline long to_int(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const long d = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw config_error("bad integer value for " + key + ": '" + v + "'");
  }
}

inline bool to_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw config_error("bad boolean value for " + key + ": '" + v + "'");
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : v) {
    if (c == ',') {
      const std::string t = ConfigFile::trim(cur);
      if (!t.empty()) out.push_back(t);
      cur.clear();
    } else {
      cur += c;
    }
  }
  const std::string t = ConfigFile::trim(cur);
  if (!t.empty()) out.push_back(t);
  return out;
}

}  // namespace detail

/// Everything one run needs: training hyperparameters plus the embedded
/// per-module configs. Defaults target full-scale training runs.
struct RunConfig {
  int epochs = 50;
  int iters_per_epoch = 100;
  int batch_size = 16;
  int instances_per_cluster = 4;
  double learning_rate = 0.35;
  double weight_decay = 5e-4;
  double sgd_momentum = 0.9;
  double lr_decay_factor = 0.1;
  double lr_decay_at = 0.8;  // fraction of epochs after which lr decays
  std::string optimizer = "sgd";
  std::uint64_t seed = 0;
  int finetune_epochs = 50;
  int finetune_batch = 64;
  double finetune_lr = 0.01;
  int checkpoint_every = 0;  // 0 = final checkpoint only

  std::size_t image_size = 256;
  SplitSpec split;
  EncoderConfig encoder;
  ClusterConfig cluster;
  AugmentSpec augment;
  LossConfig loss;
  double memory_alpha = 0.1;
  MemoryUpdate memory_update = MemoryUpdate::sequential;

  void validate() const {
    check_config(epochs >= 1 && iters_per_epoch >= 1, "epochs and iterations must be >= 1");
    check_config(batch_size >= 1 && instances_per_cluster >= 1 &&
                     batch_size % instances_per_cluster == 0,
                 "batch size must be divisible by instances per cluster");
    check_config(learning_rate > 0 && finetune_lr > 0, "learning rates must be positive");
    check_config(optimizer == "sgd", "unsupported optimizer: " + optimizer);
    check_config(memory_alpha >= 0.0 && memory_alpha <= 1.0, "memory momentum must be in [0,1]");
    encoder.validate();
    cluster.validate();
    augment.validate();
    loss.validate();
    split.validate();
  }
};

/// Read a RunConfig out of a ConfigFile. Unconsumed keys are rejected by
/// name; the loss layer set always mirrors the model's.
inline RunConfig run_config_from(ConfigFile& cf) {
  using detail::split_list;
  using detail::to_bool;
  using detail::to_double;
  using detail::to_int;
  RunConfig rc;

  if (auto v = cf.get("data", "image_size")) rc.image_size = static_cast<std::size_t>(to_int(*v, "data.image_size"));
  if (auto v = cf.get("data", "pretrain_fraction")) rc.split.pretrain_fraction = to_double(*v, "data.pretrain_fraction");
  if (auto v = cf.get("data", "finetune_fraction")) rc.split.finetune_fraction = to_double(*v, "data.finetune_fraction");
  if (auto v = cf.get("data", "test_fraction")) rc.split.test_fraction = to_double(*v, "data.test_fraction");
  if (auto v = cf.get("data", "split_seed")) rc.split.seed = static_cast<std::uint64_t>(to_int(*v, "data.split_seed"));

  if (auto v = cf.get("augment", "enabled")) {
    rc.augment.rc = rc.augment.re = rc.augment.pad = rc.augment.rhf = false;
    if (*v != "none") {
      for (const auto& name : split_list(*v)) {
        if (name == "RC") rc.augment.rc = true;
        else if (name == "RE") rc.augment.re = true;
        else if (name == "Pad") rc.augment.pad = true;
        else if (name == "RHF") rc.augment.rhf = true;
        else throw config_error("unknown augmentation '" + name + "' (expected RC,RE,Pad,RHF)");
      }
    }
  }
  if (auto v = cf.get("augment", "rhf_probability")) rc.augment.rhf_probability = to_double(*v, "augment.rhf_probability");
  if (auto v = cf.get("augment", "pad_pixels")) rc.augment.pad_pixels = static_cast<std::size_t>(to_int(*v, "augment.pad_pixels"));
  if (auto v = cf.get("augment", "re_probability")) rc.augment.re_probability = to_double(*v, "augment.re_probability");
  if (auto v = cf.get("augment", "re_fill")) {
    const auto parts = split_list(*v);
    check_config(parts.size() == 3, "augment.re_fill needs 3 channel values");
    for (std::size_t i = 0; i < 3; ++i)
      rc.augment.re_fill[i] = static_cast<float>(to_double(parts[i], "augment.re_fill"));
  }
  if (auto v = cf.get("augment", "re_area_min")) rc.augment.re_area_min = to_double(*v, "augment.re_area_min");
  if (auto v = cf.get("augment", "re_area_max")) rc.augment.re_area_max = to_double(*v, "augment.re_area_max");
  if (auto v = cf.get("augment", "re_aspect_min")) rc.augment.re_aspect_min = to_double(*v, "augment.re_aspect_min");
  if (auto v = cf.get("augment", "re_aspect_max")) rc.augment.re_aspect_max = to_double(*v, "augment.re_aspect_max");
  if (auto v = cf.get("augment", "seed")) rc.augment.seed = static_cast<std::uint64_t>(to_int(*v, "augment.seed"));

  if (auto v = cf.get("model", "stage_widths")) {
    const auto parts = split_list(*v);
    check_config(parts.size() == 4, "model.stage_widths needs 4 values");
    for (std::size_t i = 0; i < 4; ++i)
      rc.encoder.stage_widths[i] = static_cast<std::size_t>(to_int(parts[i], "model.stage_widths"));
  }
  if (auto v = cf.get("model", "embedding_dim")) rc.encoder.embedding_dim = static_cast<std::size_t>(to_int(*v, "model.embedding_dim"));
  if (auto v = cf.get("model", "use_ibn")) rc.encoder.use_ibn = to_bool(*v, "model.use_ibn");
  if (auto v = cf.get("model", "projection")) {
    if (*v == "linear") rc.encoder.projection = Projection::linear;
    else if (*v == "nonlinear") rc.encoder.projection = Projection::nonlinear;
    else throw config_error("model.projection must be linear or nonlinear");
  }
  if (auto v = cf.get("model", "layer_set")) {
    rc.encoder.layer_set.clear();
    for (const auto& p : split_list(*v))
      rc.encoder.layer_set.push_back(static_cast<int>(to_int(p, "model.layer_set")));
    std::sort(rc.encoder.layer_set.begin(), rc.encoder.layer_set.end());
    rc.encoder.layer_set.erase(
        std::unique(rc.encoder.layer_set.begin(), rc.encoder.layer_set.end()),
        rc.encoder.layer_set.end());
  }

  if (auto v = cf.get("cluster", "eps")) rc.cluster.eps = to_double(*v, "cluster.eps");
  if (auto v = cf.get("cluster", "k1")) rc.cluster.k1 = static_cast<int>(to_int(*v, "cluster.k1"));
  if (auto v = cf.get("cluster", "k2")) rc.cluster.k2 = static_cast<int>(to_int(*v, "cluster.k2"));
  if (auto v = cf.get("cluster", "min_samples")) rc.cluster.min_samples = static_cast<int>(to_int(*v, "cluster.min_samples"));
  if (auto v = cf.get("cluster", "lambda")) rc.cluster.lambda = to_double(*v, "cluster.lambda");
  if (auto v = cf.get("cluster", "cluster_on")) {
    if (*v == "final") rc.cluster.cluster_on_concat = false;
    else if (*v == "concat") rc.cluster.cluster_on_concat = true;
    else throw config_error("cluster.cluster_on must be final or concat");
  }

  if (auto v = cf.get("memory", "momentum")) rc.memory_alpha = to_double(*v, "memory.momentum");
  if (auto v = cf.get("memory", "update")) {
    if (*v == "sequential") rc.memory_update = MemoryUpdate::sequential;
    else if (*v == "hardest") rc.memory_update = MemoryUpdate::hardest;
    else throw config_error("memory.update must be sequential or hardest");
  }

  if (auto v = cf.get("loss", "temperature")) rc.loss.temperature = to_double(*v, "loss.temperature");
  if (auto v = cf.get("loss", "layer_mode")) {
    if (*v == "sum") rc.loss.mode = LayerMode::sum;
    else if (*v == "mean") rc.loss.mode = LayerMode::mean;
    else throw config_error("loss.layer_mode must be sum or mean");
  }

  if (auto v = cf.get("train", "epochs")) rc.epochs = static_cast<int>(to_int(*v, "train.epochs"));
  if (auto v = cf.get("train", "iters_per_epoch")) rc.iters_per_epoch = static_cast<int>(to_int(*v, "train.iters_per_epoch"));
  if (auto v = cf.get("train", "batch_size")) rc.batch_size = static_cast<int>(to_int(*v, "train.batch_size"));
  if (auto v = cf.get("train", "instances_per_cluster")) rc.instances_per_cluster = static_cast<int>(to_int(*v, "train.instances_per_cluster"));
  if (auto v = cf.get("train", "learning_rate")) rc.learning_rate = to_double(*v, "train.learning_rate");
  if (auto v = cf.get("train", "weight_decay")) rc.weight_decay = to_double(*v, "train.weight_decay");
  if (auto v = cf.get("train", "sgd_momentum")) rc.sgd_momentum = to_double(*v, "train.sgd_momentum");
  if (auto v = cf.get("train", "lr_decay_factor")) rc.lr_decay_factor = to_double(*v, "train.lr_decay_factor");
  if (auto v = cf.get("train", "lr_decay_at")) rc.lr_decay_at = to_double(*v, "train.lr_decay_at");
  if (auto v = cf.get("train", "optimizer")) rc.optimizer = *v;
  if (auto v = cf.get("train", "seed")) rc.seed = static_cast<std::uint64_t>(to_int(*v, "train.seed"));
  if (auto v = cf.get("train", "finetune_epochs")) rc.finetune_epochs = static_cast<int>(to_int(*v, "train.finetune_epochs"));
  if (auto v = cf.get("train", "finetune_batch")) rc.finetune_batch = static_cast<int>(to_int(*v, "train.finetune_batch"));
  if (auto v = cf.get("train", "finetune_lr")) rc.finetune_lr = to_double(*v, "train.finetune_lr");
  if (auto v = cf.get("train", "checkpoint_every")) rc.checkpoint_every = static_cast<int>(to_int(*v, "train.checkpoint_every"));

  cf.get("output", "dir");  // owned by the CLI; consume so it is not rejected

  cf.reject_unconsumed();
  rc.loss.layer_set = rc.encoder.layer_set;
  rc.validate();
  return rc;
}

/// Serialize the effective (post-default) configuration as config-file text.
inline std::string echo_config(const RunConfig& rc) {
  std::ostringstream os;
  auto num = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  os << "[data]\n";
  os << "image_size = " << rc.image_size << "\n";
  os << "pretrain_fraction = " << num(rc.split.pretrain_fraction) << "\n";
  os << "finetune_fraction = " << num(rc.split.finetune_fraction) << "\n";
  os << "test_fraction = " << num(rc.split.test_fraction) << "\n";
  os << "split_seed = " << rc.split.seed << "\n";
  os << "\n[augment]\n";
  os << "enabled = " << rc.augment.enabled_string() << "\n";
  os << "rhf_probability = " << num(rc.augment.rhf_probability) << "\n";
  os << "pad_pixels = " << rc.augment.pad_pixels << "\n";
  os << "re_fill = " << num(rc.augment.re_fill[0]) << "," << num(rc.augment.re_fill[1]) << ","
     << num(rc.augment.re_fill[2]) << "\n";
  os << "re_probability = " << num(rc.augment.re_probability) << "\n";
  os << "re_area_min = " << num(rc.augment.re_area_min) << "\n";
  os << "re_area_max = " << num(rc.augment.re_area_max) << "\n";
  os << "re_aspect_min = " << num(rc.augment.re_aspect_min) << "\n";
  os << "re_aspect_max = " << num(rc.augment.re_aspect_max) << "\n";
  os << "seed = " << rc.augment.seed << "\n";
  os << "\n[model]\n";
  os << "stage_widths = " << rc.encoder.stage_widths[0] << "," << rc.encoder.stage_widths[1] << ","
     << rc.encoder.stage_widths[2] << "," << rc.encoder.stage_widths[3] << "\n";
  os << "embedding_dim = " << rc.encoder.embedding_dim << "\n";
  os << "use_ibn = " << (rc.encoder.use_ibn ? "true" : "false") << "\n";
  os << "projection = " << (rc.encoder.projection == Projection::linear ? "linear" : "nonlinear")
     << "\n";
  os << "layer_set = ";
  for (std::size_t i = 0; i < rc.encoder.layer_set.size(); ++i)
    os << (i ? "," : "") << rc.encoder.layer_set[i];
  os << "\n";
  os << "\n[cluster]\n";
  os << "eps = " << num(rc.cluster.eps) << "\n";
  os << "k1 = " << rc.cluster.k1 << "\n";
  os << "k2 = " << rc.cluster.k2 << "\n";
  os << "min_samples = " << rc.cluster.min_samples << "\n";
  os << "lambda = " << num(rc.cluster.lambda) << "\n";
  os << "cluster_on = " << (rc.cluster.cluster_on_concat ? "concat" : "final") << "\n";
  os << "\n[memory]\n";
  os << "momentum = " << num(rc.memory_alpha) << "\n";
  os << "update = " << (rc.memory_update == MemoryUpdate::sequential ? "sequential" : "hardest")
     << "\n";
  os << "\n[loss]\n";
  os << "temperature = " << num(rc.loss.temperature) << "\n";
  os << "layer_mode = " << (rc.loss.mode == LayerMode::sum ? "sum" : "mean") << "\n";
  os << "\n[train]\n";
  os << "epochs = " << rc.epochs << "\n";
  os << "iters_per_epoch = " << rc.iters_per_epoch << "\n";
  os << "batch_size = " << rc.batch_size << "\n";
  os << "instances_per_cluster = " << rc.instances_per_cluster << "\n";
  os << "learning_rate = " << num(rc.learning_rate) << "\n";
  os << "weight_decay = " << num(rc.weight_decay) << "\n";
  os << "sgd_momentum = " << num(rc.sgd_momentum) << "\n";
  os << "lr_decay_factor = " << num(rc.lr_decay_factor) << "\n";
  os << "lr_decay_at = " << num(rc.lr_decay_at) << "\n";
  os << "optimizer = " << rc.optimizer << "\n";
  os << "seed = " << rc.seed << "\n";
  os << "finetune_epochs = " << rc.finetune_epochs << "\n";
  os << "finetune_batch = " << rc.finetune_batch << "\n";
  os << "finetune_lr = " << num(rc.finetune_lr) << "\n";
  os << "checkpoint_every = " << rc.checkpoint_every << "\n";
  return os.str();
}

}  // namespace cmcrl
