// Batch CLI for the CMCRL pipeline: synthetic corpus generation,
// contrastive pre-training, linear-head fine-tuning, evaluation and
// cluster composition reports.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "cmcrl/cmcrl.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::vector<std::string> overrides;  // section.key=value
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "Config file (key = value with [sections])");
  cmd->add_option("--out", args.out_dir, "Output directory")->required();
  cmd->add_option("--set", args.overrides,
                  "Override a config key, e.g. --set train.epochs=5 (repeatable)");
}

/// Resolve --out against CMCRL_OUTPUT_ROOT when relative.
fs::path resolve_out(const std::string& out_dir) {
  fs::path p(out_dir);
  const char* root = std::getenv("CMCRL_OUTPUT_ROOT");
  if (root && *root && p.is_relative()) p = fs::path(root) / p;
  fs::create_directories(p);
  return p;
}

cmcrl::ConfigFile load_user_config(const CommonArgs& args) {
  cmcrl::ConfigFile cf = args.config_path.empty()
                             ? cmcrl::ConfigFile{}
                             : cmcrl::ConfigFile::parse_file(args.config_path);
  for (const auto& ov : args.overrides) {
    const auto eq = ov.find('=');
    const auto dot = ov.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq)
      throw cmcrl::config_error("bad --set override (want section.key=value): " + ov);
    cf.set(cmcrl::ConfigFile::trim(ov.substr(0, dot)),
           cmcrl::ConfigFile::trim(ov.substr(dot + 1, eq - dot - 1)),
           cmcrl::ConfigFile::trim(ov.substr(eq + 1)));
  }
  return cf;
}

void write_effective_config(const cmcrl::RunConfig& rc, const fs::path& out) {
  auto f = cmcrl::open_out((out / "effective_config.ini").string());
  f << cmcrl::echo_config(rc);
}

/// Architecture guard: any [model] key the user set explicitly must match
/// the checkpoint manifest.
void check_model_manifest(cmcrl::ConfigFile& user, const cmcrl::Checkpoint& ck) {
  static const char* keys[] = {"stage_widths", "embedding_dim", "use_ibn", "projection",
                               "layer_set"};
  std::string diffs;
  for (const char* key : keys) {
    if (!user.has("model", key)) continue;
    const auto user_val = user.get("model", key);
    const auto ck_val = ck.get(std::string("cfg.model.") + key);
    if (ck_val && *user_val != *ck_val)
      diffs += std::string(diffs.empty() ? "" : "; ") + "model." + key + ": config=" + *user_val +
               " checkpoint=" + *ck_val;
  }
  if (!diffs.empty()) throw cmcrl::config_error("manifest-diff: " + diffs);
}

/// Merge non-model user settings over the checkpoint's config. The model
/// section always comes from the checkpoint (guarded above).
cmcrl::RunConfig merged_config(cmcrl::ConfigFile& user, const cmcrl::Checkpoint& ck) {
  check_model_manifest(user, ck);
  cmcrl::ConfigFile merged;
  for (const auto& [k, v] : ck.manifest) {
    if (k.rfind("cfg.", 0) != 0) continue;
    const auto dot = k.find('.', 4);
    merged.set(k.substr(4, dot - 4), k.substr(dot + 1), v);
  }
  for (const auto& e : user.entries()) {
    if (e.section == "model") continue;  // architecture is pinned by the checkpoint
    merged.set(e.section, e.key, e.value);
  }
  return cmcrl::run_config_from(merged);
}

int cmd_make_synthetic(int classes, int per_class, int size, std::uint64_t seed,
                       const std::string& out_dir, bool force) {
  if (classes < 2) throw CLI::ValidationError("--classes must be at least 2");
  if (per_class < 8) throw CLI::ValidationError("--per-class must be at least 8");
  const fs::path out = resolve_out(out_dir);
  auto set = cmcrl::make_synthetic(classes, per_class, static_cast<std::size_t>(size), seed);
  cmcrl::export_corpus(set, out.string(), force);
  std::cout << "wrote " << set.size() << " images, K=" << set.num_classes() << " classes to "
            << out.string() << "\n";
  return 0;
}

int cmd_pretrain(const CommonArgs& common, const std::string& data_dir) {
  cmcrl::ConfigFile cf = load_user_config(common);
  cmcrl::RunConfig rc = cmcrl::run_config_from(cf);
  const fs::path out = resolve_out(common.out_dir);
  write_effective_config(rc, out);

  auto corpus = cmcrl::load_corpus(data_dir, rc.image_size);
  auto splits = cmcrl::split(corpus, rc.split);
  std::cout << "corpus: " << corpus.size() << " images, K=" << corpus.num_classes()
            << "; pretrain split: " << splits[0].size() << "\n";

  cmcrl::TrainState state(rc);
  if (rc.checkpoint_every > 0) {
    while (state.epoch < rc.epochs) {
      cmcrl::pretrain(state, splits[0], state.epoch + rc.checkpoint_every);
      cmcrl::state_to_checkpoint(state).save(
          (out / ("checkpoint_epoch" + std::to_string(state.epoch) + ".cmcrl")).string());
      cmcrl::write_epoch_csv(state.history, (out / "epochs.csv").string());
    }
  } else {
    cmcrl::pretrain(state, splits[0]);
  }
  cmcrl::write_epoch_csv(state.history, (out / "epochs.csv").string());
  cmcrl::state_to_checkpoint(state).save((out / "checkpoint.cmcrl").string());
  if (!state.history.empty())
    std::cout << "final epoch: m=" << state.history.back().m
              << " cacc=" << state.history.back().cacc << " ari=" << state.history.back().ari
              << "\n";
  return 0;
}

int cmd_finetune(const CommonArgs& common, const std::string& data_dir,
                 const std::string& ckpt_path) {
  if (!fs::exists(ckpt_path)) throw cmcrl::io_error("checkpoint not found: " + ckpt_path);
  cmcrl::ConfigFile cf = load_user_config(common);
  const auto ck = cmcrl::Checkpoint::load(ckpt_path);
  cmcrl::RunConfig rc = merged_config(cf, ck);
  const fs::path out = resolve_out(common.out_dir);
  write_effective_config(rc, out);

  auto state = cmcrl::state_from_checkpoint(ck);
  auto corpus = cmcrl::load_corpus(data_dir, rc.image_size);
  auto splits = cmcrl::split(corpus, rc.split);
  std::vector<cmcrl::FinetuneRow> curve;
  auto head = cmcrl::finetune(*state, splits[1], rc.finetune_epochs, rc.finetune_lr, &curve);
  cmcrl::write_finetune_csv(curve, (out / "curve.csv").string());
  cmcrl::head_to_checkpoint(head, rc).save((out / "head.cmcrl").string());
  std::cout << "fine-tuned head on " << splits[1].size() << " images; final train acc "
            << (curve.empty() ? 0.0 : curve.back().train_acc) << "\n";
  return 0;
}

int cmd_evaluate(const CommonArgs& common, const std::string& data_dir,
                 const std::string& ckpt_path, const std::string& head_path) {
  if (!fs::exists(ckpt_path)) throw cmcrl::io_error("checkpoint not found: " + ckpt_path);
  if (!fs::exists(head_path)) throw cmcrl::io_error("head checkpoint not found: " + head_path);
  cmcrl::ConfigFile cf = load_user_config(common);
  const auto ck = cmcrl::Checkpoint::load(ckpt_path);
  cmcrl::RunConfig rc = merged_config(cf, ck);
  const fs::path out = resolve_out(common.out_dir);
  write_effective_config(rc, out);

  auto state = cmcrl::state_from_checkpoint(ck);
  auto head = cmcrl::head_from_checkpoint(cmcrl::Checkpoint::load(head_path));
  auto corpus = cmcrl::load_corpus(data_dir, rc.image_size);
  auto splits = cmcrl::split(corpus, rc.split);
  auto report = cmcrl::evaluate(*state, head, splits[2]);
  cmcrl::write_metrics_files(report, corpus.class_names, out.string());
  std::cout << "test acc " << report.acc << " f1 " << report.f1 << " on " << splits[2].size()
            << " images\n";
  return 0;
}

int cmd_cluster_report(const CommonArgs& common, const std::string& data_dir,
                       const std::string& ckpt_path, const std::string& which_split) {
  if (!fs::exists(ckpt_path)) throw cmcrl::io_error("checkpoint not found: " + ckpt_path);
  cmcrl::ConfigFile cf = load_user_config(common);
  const auto ck = cmcrl::Checkpoint::load(ckpt_path);
  cmcrl::RunConfig rc = merged_config(cf, ck);
  const fs::path out = resolve_out(common.out_dir);
  write_effective_config(rc, out);

  auto state = cmcrl::state_from_checkpoint(ck);
  auto corpus = cmcrl::load_corpus(data_dir, rc.image_size);
  cmcrl::LabeledImageSet target;
  if (which_split == "all") {
    target = corpus;
  } else {
    auto splits = cmcrl::split(corpus, rc.split);
    if (which_split == "pretrain") target = splits[0];
    else if (which_split == "finetune") target = splits[1];
    else if (which_split == "test") target = splits[2];
    else throw cmcrl::config_error("unknown split: " + which_split);
  }

  auto embeddings = cmcrl::encode_set(state->encoder, target);
  const auto feats = cmcrl::clustering_features(embeddings, rc.cluster.cluster_on_concat);
  const auto dist =
      cmcrl::jaccard_distance_matrix(feats, rc.cluster.k1, rc.cluster.k2, rc.cluster.lambda);
  const auto assign = cmcrl::dbscan(dist, rc.cluster.eps, rc.cluster.min_samples);
  const auto rows = cmcrl::cluster_report_rows(assign, target.labels, target.class_names);
  cmcrl::write_cluster_report_csv(rows, (out / "clusters.csv").string());
  cmcrl::write_cluster_chart(assign, target.labels,
                             static_cast<std::size_t>(target.num_classes()),
                             (out / "clusters.png").string());
  std::cout << "clustered " << assign.num_clustered << "/" << target.size() << " images into "
            << assign.num_clusters << " clusters\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CMCRL: clustering-guided multi-layer contrastive pre-training"};
  app.require_subcommand(1);

  // make-synthetic
  int classes = 4, per_class = 64, size = 32;
  std::uint64_t synth_seed = 0;
  std::string synth_out;
  bool force = false;
  auto* synth = app.add_subcommand("make-synthetic", "Generate a synthetic folder-per-class corpus");
  synth->add_option("--classes", classes, "Number of classes (>= 2)");
  synth->add_option("--per-class", per_class, "Images per class (>= 8)");
  synth->add_option("--size", size, "Image side length in pixels");
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_flag("--force", force, "Write into a non-empty directory");

  CommonArgs pre_args, ft_args, ev_args, cr_args;
  std::string pre_data, ft_data, ev_data, cr_data;
  std::string ft_ckpt, ev_ckpt, ev_head, cr_ckpt;
  std::string cr_split = "pretrain";
  std::string layers, seed_flag, epochs_flag, iters_flag;

  auto* pre = app.add_subcommand("pretrain", "Contrastive pre-training on the pretrain split");
  pre->add_option("--data", pre_data, "Corpus root (folder per class)")->required();
  add_common(pre, pre_args);
  pre->add_option("--layers", layers, "Layer set, e.g. 4 or 1,2,3,4 (overrides model.layer_set)");
  pre->add_option("--seed", seed_flag, "Training seed (overrides train.seed)");
  pre->add_option("--epochs", epochs_flag, "Epochs (overrides train.epochs)");
  pre->add_option("--iters", iters_flag, "Iterations per epoch (overrides train.iters_per_epoch)");

  auto* ft = app.add_subcommand("finetune", "Fine-tune the linear head on the finetune split");
  ft->add_option("--data", ft_data, "Corpus root")->required();
  ft->add_option("--checkpoint", ft_ckpt, "Pre-training checkpoint")->required();
  add_common(ft, ft_args);

  auto* ev = app.add_subcommand("evaluate", "Evaluate encoder + head on the test split");
  ev->add_option("--data", ev_data, "Corpus root")->required();
  ev->add_option("--checkpoint", ev_ckpt, "Pre-training checkpoint")->required();
  ev->add_option("--head", ev_head, "Head checkpoint")->required();
  add_common(ev, ev_args);

  auto* cr = app.add_subcommand("cluster-report", "Per-cluster composition CSV and chart");
  cr->add_option("--data", cr_data, "Corpus root")->required();
  cr->add_option("--checkpoint", cr_ckpt, "Pre-training checkpoint")->required();
  cr->add_option("--split", cr_split, "Which split to cluster: pretrain|finetune|test|all");
  add_common(cr, cr_args);

  try {
    app.parse(argc, argv);
    if (*synth) return cmd_make_synthetic(classes, per_class, size, synth_seed, synth_out, force);
    if (*pre) {
      if (!layers.empty()) pre_args.overrides.push_back("model.layer_set=" + layers);
      if (!seed_flag.empty()) pre_args.overrides.push_back("train.seed=" + seed_flag);
      if (!epochs_flag.empty()) pre_args.overrides.push_back("train.epochs=" + epochs_flag);
      if (!iters_flag.empty()) pre_args.overrides.push_back("train.iters_per_epoch=" + iters_flag);
      return cmd_pretrain(pre_args, pre_data);
    }
    if (*ft) return cmd_finetune(ft_args, ft_data, ft_ckpt);
    if (*ev) return cmd_evaluate(ev_args, ev_data, ev_ckpt, ev_head);
    if (*cr) return cmd_cluster_report(cr_args, cr_data, cr_ckpt, cr_split);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << "error: usage: " << e.what() << "\n";
    return 2;
  } catch (const cmcrl::config_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
