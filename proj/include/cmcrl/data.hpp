#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "cmcrl/common.hpp"
#include "cmcrl/image_io.hpp"
#include "cmcrl/rng.hpp"

namespace cmcrl {

/// A set of same-sized images with ground-truth class labels (1..K).
/// `labels_hidden` marks the pre-training split: labels stay available for
/// clustering metrics but must never steer training.
struct LabeledImageSet {
  std::vector<Image> images;
  std::vector<int> labels;  // 1-based class ids
  std::vector<std::string> class_names;
  std::string split_tag = "all";  // all | pretrain | finetune | test
  bool labels_hidden = false;

  std::size_t size() const { return images.size(); }
  int num_classes() const { return static_cast<int>(class_names.size()); }
  std::size_t image_size() const { return images.empty() ? 0 : images.front().dim(1); }
};

struct SplitSpec {
  double pretrain_fraction = 0.8;
  double finetune_fraction = 0.15;
  double test_fraction = 0.05;
  std::uint64_t seed = 0;

  void validate() const {
    check_config(pretrain_fraction >= 0 && finetune_fraction >= 0 && test_fraction >= 0,
                 "split fractions must be nonnegative");
    const double sum = pretrain_fraction + finetune_fraction + test_fraction;
    check_config(std::abs(sum - 1.0) <= 1e-9, "split fractions must sum to 1");
  }
};

/// Load a folder-per-class corpus. Class ids follow the lexicographic order
/// of the subdirectory names; file order within a class is lexicographic as
/// well, so repeated loads are identical. Undecodable files are skipped with
/// a warning; a class with no decodable image is an error.
inline LabeledImageSet load_corpus(const std::string& root_path, std::size_t target_size) {
  namespace fs = std::filesystem;
  const fs::path root(root_path);
  if (!fs::exists(root) || !fs::is_directory(root))
    throw config_error("corpus root does not exist: " + root_path);

  std::vector<std::string> class_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) class_dirs.push_back(entry.path().filename().string());
  }
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.size() < 2)
    throw ingest_error("corpus needs at least 2 class directories, found " +
                       std::to_string(class_dirs.size()));

  LabeledImageSet set;
  set.class_names = class_dirs;
  for (std::size_t c = 0; c < class_dirs.size(); ++c) {
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(root / class_dirs[c])) {
      if (entry.is_regular_file()) files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw ingest_error("class directory is empty: " + class_dirs[c]);
    std::size_t loaded = 0;
    for (const auto& f : files) {
      Image img = decode_image(f, target_size);
      if (img.empty()) {
        std::cerr << "warning: skipping undecodable file " << f << "\n";
        continue;
      }
      set.images.push_back(std::move(img));
      set.labels.push_back(static_cast<int>(c) + 1);
      ++loaded;
    }
    if (loaded == 0)
      throw ingest_error("class has no decodable image: " + class_dirs[c]);
  }
  return set;
}

namespace detail {

/// Largest-remainder apportionment of n items over the given fractions.
inline std::vector<std::size_t> apportion(std::size_t n, const std::vector<double>& fractions) {
  const std::size_t s = fractions.size();
  std::vector<std::size_t> counts(s, 0);
  std::vector<std::pair<double, std::size_t>> rema(s);
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < s; ++i) {
    const double exact = fractions[i] * static_cast<double>(n);
    counts[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    rema[i] = {exact - static_cast<double>(counts[i]), i};
    assigned += counts[i];
  }
  std::stable_sort(rema.begin(), rema.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) counts[rema[k % s].second]++;
  return counts;
}

}  // namespace detail

/// Stratified three-way split. Per class the allocation follows the
/// fractions to within one image (largest remainder); classes with fewer
/// images than active splits go entirely to pretrain with a warning.
/// Deterministic for a fixed seed.
inline std::array<LabeledImageSet, 3> split(const LabeledImageSet& set, const SplitSpec& spec) {
  spec.validate();
  check_contract(!set.images.empty(), "split: empty input set");

  const std::vector<double> fractions = {spec.pretrain_fraction, spec.finetune_fraction,
                                         spec.test_fraction};
  std::size_t active_splits = 0;
  for (double f : fractions)
    if (f > 0) ++active_splits;

  const int K = set.num_classes();
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(K));
  for (std::size_t i = 0; i < set.size(); ++i)
    by_class[static_cast<std::size_t>(set.labels[i] - 1)].push_back(i);

  Rng rng(spec.seed);
  std::array<std::vector<std::size_t>, 3> split_indices;
  for (int c = 0; c < K; ++c) {
    auto& idx = by_class[static_cast<std::size_t>(c)];
    rng.shuffle(idx);
    if (idx.size() < active_splits) {
      std::cerr << "warning: class " << set.class_names[static_cast<std::size_t>(c)] << " has only "
                << idx.size() << " images; placing all in pretrain\n";
      split_indices[0].insert(split_indices[0].end(), idx.begin(), idx.end());
      continue;
    }
    const auto counts = detail::apportion(idx.size(), fractions);
    std::size_t pos = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      for (std::size_t k = 0; k < counts[s]; ++k) split_indices[s].push_back(idx[pos++]);
    }
  }

  const char* tags[3] = {"pretrain", "finetune", "test"};
  std::array<LabeledImageSet, 3> out;
  for (std::size_t s = 0; s < 3; ++s) {
    std::sort(split_indices[s].begin(), split_indices[s].end());
    out[s].class_names = set.class_names;
    out[s].split_tag = tags[s];
    out[s].labels_hidden = (s == 0);
    for (auto i : split_indices[s]) {
      out[s].images.push_back(set.images[i]);
      out[s].labels.push_back(set.labels[i]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic corpus
// ---------------------------------------------------------------------------

namespace detail {

inline float quantize8(float v) {
  v = std::min(1.0f, std::max(0.0f, v));
  return static_cast<float>(std::lround(v * 255.0f)) / 255.0f;
}

/// One synthetic image. Classes cycle through four texture families
/// (horizontal stripes, vertical stripes, blobs, dot grid); classes past the
/// fourth reuse a family at a different scale. All families share one
/// fg/bg palette with per-image brightness/contrast jitter, so raw-pixel and
/// pooled color statistics overlap across classes and the discriminative
/// signal is spatial structure.
inline Image synth_image(int class_id, std::size_t size, Rng& rng) {
  const int family = (class_id - 1) % 4;
  const int tier = (class_id - 1) / 4;
  const auto fsize = static_cast<float>(size);

  float fg[3] = {0.72f, 0.52f, 0.32f};
  float bg[3] = {0.28f, 0.40f, 0.52f};
  for (int c = 0; c < 3; ++c) {
    fg[c] += static_cast<float>(rng.uniform(-0.04, 0.04));
    bg[c] += static_cast<float>(rng.uniform(-0.04, 0.04));
  }

  Image img({3, size, size});
  // mask(y, x) in [0,1]: 1 = foreground
  std::vector<float> mask(size * size, 0.0f);

  if (family == 0 || family == 1) {
    const float period = fsize / (4.0f * static_cast<float>(tier + 1));
    const float phase = static_cast<float>(rng.uniform(0.0, 2.0 * M_PI));
    for (std::size_t y = 0; y < size; ++y) {
      for (std::size_t x = 0; x < size; ++x) {
        const float t = family == 0 ? static_cast<float>(y) : static_cast<float>(x);
        const float s = std::sin(2.0f * static_cast<float>(M_PI) * t / period + phase);
        mask[y * size + x] = 0.5f + 0.5f * s;
      }
    }
  } else if (family == 2) {
    const int blobs = (6 + 2 * tier);
    const float radius = fsize / (10.0f * std::sqrt(static_cast<float>(tier + 1)));
    for (int b = 0; b < blobs; ++b) {
      const float cx = static_cast<float>(rng.uniform(0.0, 1.0)) * fsize;
      const float cy = static_cast<float>(rng.uniform(0.0, 1.0)) * fsize;
      for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
          const float dx = static_cast<float>(x) - cx;
          const float dy = static_cast<float>(y) - cy;
          const float d = std::sqrt(dx * dx + dy * dy);
          const float v = 1.0f / (1.0f + std::exp((d - radius) * 1.5f));
          float& m = mask[y * size + x];
          m = std::max(m, v);
        }
      }
    }
  } else {
    const float spacing = fsize / (6.0f * static_cast<float>(tier + 1));
    const float radius = spacing * 0.3f;
    const float ox = static_cast<float>(rng.uniform(0.0, spacing));
    const float oy = static_cast<float>(rng.uniform(0.0, spacing));
    for (std::size_t y = 0; y < size; ++y) {
      for (std::size_t x = 0; x < size; ++x) {
        const float lx = std::fmod(static_cast<float>(x) + ox, spacing) - spacing / 2.0f;
        const float ly = std::fmod(static_cast<float>(y) + oy, spacing) - spacing / 2.0f;
        const float d = std::sqrt(lx * lx + ly * ly);
        mask[y * size + x] = 1.0f / (1.0f + std::exp((d - radius) * 2.5f));
      }
    }
  }

  const auto gain = static_cast<float>(rng.uniform(0.7, 1.3));
  const auto shift = static_cast<float>(rng.uniform(-0.12, 0.12));
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const float m = mask[y * size + x];
      for (int c = 0; c < 3; ++c) {
        float v = m * fg[c] + (1.0f - m) * bg[c];
        v = (v - 0.5f) * gain + 0.5f + shift;
        v += static_cast<float>(rng.uniform(-0.06, 0.06));
        img.at(static_cast<std::size_t>(c), y, x) = quantize8(v);
      }
    }
  }
  return img;
}

}  // namespace detail

/// Desk-scale synthetic corpus: n_classes texture families, per_class images
/// each, pixels snapped to the 8-bit grid so a PNG export round-trips
/// exactly. Deterministic for a fixed seed.
inline LabeledImageSet make_synthetic(int n_classes, int per_class, std::size_t size,
                                      std::uint64_t seed) {
  check_config(n_classes >= 2, "make_synthetic: need at least 2 classes");
  check_config(per_class >= 8, "make_synthetic: need at least 8 images per class");
  check_config(size >= 8, "make_synthetic: image size too small");

  LabeledImageSet set;
  Rng rng(seed);
  for (int c = 1; c <= n_classes; ++c) {
    char name[32];
    std::snprintf(name, sizeof(name), "class_%03d", c);
    set.class_names.emplace_back(name);
    for (int i = 0; i < per_class; ++i) {
      set.images.push_back(detail::synth_image(c, size, rng));
      set.labels.push_back(c);
    }
  }
  return set;
}

/// Write a set out in the folder-per-class layout load_corpus reads.
inline void export_corpus(const LabeledImageSet& set, const std::string& out_dir,
                          bool force = false) {
  namespace fs = std::filesystem;
  const fs::path root(out_dir);
  if (fs::exists(root) && !fs::is_empty(root) && !force)
    throw io_error("output directory exists and is not empty: " + out_dir +
                   " (use force to overwrite)");
  fs::create_directories(root);
  std::vector<int> counter(set.class_names.size(), 0);
  for (std::size_t c = 0; c < set.class_names.size(); ++c)
    fs::create_directories(root / set.class_names[c]);
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto c = static_cast<std::size_t>(set.labels[i] - 1);
    char name[32];
    std::snprintf(name, sizeof(name), "img_%05d.png", counter[c]++);
    encode_png(set.images[i], (root / set.class_names[c] / name).string());
  }
}

}  // namespace cmcrl
