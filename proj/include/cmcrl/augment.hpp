#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "cmcrl/common.hpp"
#include "cmcrl/image_io.hpp"
#include "cmcrl/rng.hpp"

namespace cmcrl {

enum class Aug { RC, RE, Pad, RHF };

/// The stochastic augmentation family applied to pre-training images.
/// Pipeline order: Pad -> RC -> RHF -> RE. Padding realizes translation
/// jitter through the following random crop; without RC a center crop
/// restores the input shape. RE runs last so the erased patch survives
/// cropping.
struct AugmentSpec {
  bool rc = true;
  bool re = true;
  bool pad = true;
  bool rhf = true;

  double rhf_probability = 0.5;
  std::size_t pad_pixels = 10;
  std::array<float, 3> re_fill = {0.485f, 0.456f, 0.406f};
  double re_probability = 0.5;
  double re_area_min = 0.02;
  double re_area_max = 0.2;
  double re_aspect_min = 0.3;
  double re_aspect_max = 3.3;
  std::uint64_t seed = 0;  // default stream seed for standalone use

  bool enabled(Aug a) const {
    switch (a) {
      case Aug::RC: return rc;
      case Aug::RE: return re;
      case Aug::Pad: return pad;
      case Aug::RHF: return rhf;
    }
    return false;
  }

  void set_enabled(Aug a, bool on) {
    switch (a) {
      case Aug::RC: rc = on; break;
      case Aug::RE: re = on; break;
      case Aug::Pad: pad = on; break;
      case Aug::RHF: rhf = on; break;
    }
  }

  static AugmentSpec none() {
    AugmentSpec s;
    s.rc = s.re = s.pad = s.rhf = false;
    return s;
  }

  std::string enabled_string() const {
    std::string out;
    auto add = [&](bool on, const char* name) {
      if (!on) return;
      if (!out.empty()) out += ",";
      out += name;
    };
    add(rc, "RC");
    add(re, "RE");
    add(pad, "Pad");
    add(rhf, "RHF");
    return out.empty() ? "none" : out;
  }

  void validate() const {
    check_config(rhf_probability >= 0.0 && rhf_probability <= 1.0, "rhf_probability not in [0,1]");
    check_config(re_probability >= 0.0 && re_probability <= 1.0, "re_probability not in [0,1]");
    check_config(re_area_min > 0.0 && re_area_min <= re_area_max && re_area_max < 1.0,
                 "re_area range must satisfy 0 < min <= max < 1");
    check_config(re_aspect_min > 0.0 && re_aspect_min <= re_aspect_max,
                 "re_aspect range must satisfy 0 < min <= max");
    for (float v : re_fill)
      check_config(v >= 0.0f && v <= 1.0f, "re_fill values must be in [0,1]");
  }
};

namespace detail {

inline Image pad_image(const Image& in, std::size_t p) {
  const std::size_t h = in.dim(1), w = in.dim(2);
  Image out({3, h + 2 * p, w + 2 * p}, 0.0f);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) out.at(c, y + p, x + p) = in.at(c, y, x);
  return out;
}

inline Image crop_image(const Image& in, std::size_t top, std::size_t left, std::size_t size) {
  if (top + size > in.dim(1) || left + size > in.dim(2))
    throw config_error("crop window exceeds image bounds");
  Image out({3, size, size});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) out.at(c, y, x) = in.at(c, top + y, left + x);
  return out;
}

inline void hflip_image(Image& img) {
  const std::size_t h = img.dim(1), w = img.dim(2);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w / 2; ++x) std::swap(img.at(c, y, x), img.at(c, y, w - 1 - x));
}

/// Random-erase one rectangle in place. Standard geometry: area fraction and
/// aspect ratio drawn uniformly, up to 10 placement attempts.
inline void random_erase(Image& img, const AugmentSpec& spec, Rng& rng) {
  const std::size_t h = img.dim(1), w = img.dim(2);
  const double area = static_cast<double>(h * w);
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double target = rng.uniform(spec.re_area_min, spec.re_area_max) * area;
    const double aspect = rng.uniform(spec.re_aspect_min, spec.re_aspect_max);
    const auto eh = static_cast<std::size_t>(std::lround(std::sqrt(target * aspect)));
    const auto ew = static_cast<std::size_t>(std::lround(std::sqrt(target / aspect)));
    if (eh == 0 || ew == 0 || eh > h || ew > w) continue;
    const auto top = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(h - eh)));
    const auto left = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(w - ew)));
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = top; y < top + eh; ++y)
        for (std::size_t x = left; x < left + ew; ++x) img.at(c, y, x) = spec.re_fill[c];
    return;
  }
}

}  // namespace detail

/// Apply the enabled transforms to one image. Output shape always equals
/// input shape; deterministic for a given rng state.
inline Image augment(const Image& image, const AugmentSpec& spec, Rng& rng) {
  spec.validate();
  check_contract(image.rank() == 3 && image.dim(0) == 3 && image.dim(1) == image.dim(2),
                 "augment: expected square 3xSxS image");
  const std::size_t size = image.dim(1);

  Image out = image;
  if (spec.pad && spec.pad_pixels > 0) out = detail::pad_image(out, spec.pad_pixels);

  if (spec.rc) {
    const std::size_t slack = out.dim(1) - size;
    const auto top = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(slack)));
    const auto left = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(slack)));
    out = detail::crop_image(out, top, left, size);
  } else if (out.dim(1) != size) {
    const std::size_t off = (out.dim(1) - size) / 2;  // Pad without RC: neutral center crop
    out = detail::crop_image(out, off, off, size);
  }

  if (spec.rhf && rng.bernoulli(spec.rhf_probability)) detail::hflip_image(out);

  if (spec.re && rng.bernoulli(spec.re_probability)) detail::random_erase(out, spec, rng);

  return out;
}

/// The full family plus the six leave-out subsets used by the augmentation
/// ablation: T, T/{RC}, T/{RE}, T/{Pad}, T/{RHF}, T/{RC,RE}, T/{Pad,RHF}.
inline std::vector<std::pair<std::string, AugmentSpec>> ablation_subsets(
    const AugmentSpec& base = AugmentSpec{}) {
  std::vector<std::pair<std::string, AugmentSpec>> out;
  auto leave_out = [&](const std::string& name, std::initializer_list<Aug> removed) {
    AugmentSpec s = base;
    s.rc = s.re = s.pad = s.rhf = true;
    for (Aug a : removed) s.set_enabled(a, false);
    out.emplace_back(name, s);
  };
  leave_out("T", {});
  leave_out("T/{RC}", {Aug::RC});
  leave_out("T/{RE}", {Aug::RE});
  leave_out("T/{Pad}", {Aug::Pad});
  leave_out("T/{RHF}", {Aug::RHF});
  leave_out("T/{RC,RE}", {Aug::RC, Aug::RE});
  leave_out("T/{Pad,RHF}", {Aug::Pad, Aug::RHF});
  return out;
}

}  // namespace cmcrl
