#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "cmcrl/augment.hpp"
#include "cmcrl/rng.hpp"

using namespace cmcrl;

namespace {

Image random_image(Rng& rng, std::size_t size) {
  Image img({3, size, size});
  for (std::size_t i = 0; i < img.size(); ++i)
    img[i] = static_cast<float>(rng.uniform_int(0, 200)) / 255.0f;  // keep away from re_fill
  return img;
}

}  // namespace

TEST_CASE("empty augmentation set is the identity") {
  Rng rng(1);
  const auto img = random_image(rng, 24);
  Rng aug_rng(2);
  const auto out = augment(img, AugmentSpec::none(), aug_rng);
  REQUIRE(out == img);
}

TEST_CASE("forced horizontal flip mirrors the image") {
  Rng rng(3);
  const auto img = random_image(rng, 16);
  AugmentSpec spec = AugmentSpec::none();
  spec.rhf = true;
  spec.rhf_probability = 1.0;
  Rng aug_rng(4);
  const auto out = augment(img, spec, aug_rng);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 16; ++y)
      for (std::size_t x = 0; x < 16; ++x) REQUIRE(out.at(c, y, x) == img.at(c, y, 15 - x));
}

TEST_CASE("forced random erase paints exactly one fill rectangle") {
  Rng rng(5);
  const auto img = random_image(rng, 32);
  AugmentSpec spec = AugmentSpec::none();
  spec.re = true;
  spec.re_probability = 1.0;
  Rng aug_rng(6);
  const auto out = augment(img, spec, aug_rng);

  // locate the changed region by pixel diff
  std::size_t top = 32, bottom = 0, left = 32, right = 0;
  bool changed = false;
  for (std::size_t y = 0; y < 32; ++y)
    for (std::size_t x = 0; x < 32; ++x) {
      bool diff = false;
      for (std::size_t c = 0; c < 3; ++c) diff |= out.at(c, y, x) != img.at(c, y, x);
      if (diff) {
        changed = true;
        top = std::min(top, y);
        bottom = std::max(bottom, y);
        left = std::min(left, x);
        right = std::max(right, x);
      }
    }
  REQUIRE(changed);
  for (std::size_t y = 0; y < 32; ++y)
    for (std::size_t x = 0; x < 32; ++x) {
      const bool inside = y >= top && y <= bottom && x >= left && x <= right;
      for (std::size_t c = 0; c < 3; ++c) {
        if (inside)
          REQUIRE(out.at(c, y, x) == spec.re_fill[c]);
        else
          REQUIRE(out.at(c, y, x) == img.at(c, y, x));
      }
    }
  // rectangle area within the configured fraction range
  const double area = static_cast<double>((bottom - top + 1) * (right - left + 1)) / (32.0 * 32.0);
  REQUIRE(area >= 0.01);
  REQUIRE(area <= 0.25);
}

TEST_CASE("every ablation subset preserves shape and value range") {
  Rng rng(7);
  const auto img = random_image(rng, 32);
  for (const auto& [name, spec] : ablation_subsets()) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      Rng aug_rng(seed);
      const auto out = augment(img, spec, aug_rng);
      INFO(name << " seed " << seed);
      REQUIRE(out.dims() == img.dims());
      for (std::size_t i = 0; i < out.size(); ++i) {
        REQUIRE(out[i] >= 0.0f);
        REQUIRE(out[i] <= 1.0f);
      }
    }
  }
}

TEST_CASE("fixed rng seed fixes the augmented output") {
  Rng rng(8);
  const auto img = random_image(rng, 32);
  AugmentSpec spec;  // full family
  Rng a(99), b(99);
  REQUIRE(augment(img, spec, a) == augment(img, spec, b));
}

TEST_CASE("pad without crop is neutralized by a center crop") {
  Rng rng(9);
  const auto img = random_image(rng, 16);
  AugmentSpec spec = AugmentSpec::none();
  spec.pad = true;
  spec.pad_pixels = 10;
  Rng aug_rng(10);
  const auto out = augment(img, spec, aug_rng);
  REQUIRE(out == img);
}

TEST_CASE("pad plus crop translates content") {
  Rng rng(11);
  const auto img = random_image(rng, 16);
  AugmentSpec spec = AugmentSpec::none();
  spec.pad = true;
  spec.rc = true;
  spec.pad_pixels = 4;
  // over several seeds at least one crop is off-center
  bool any_translation = false;
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    Rng aug_rng(seed);
    const auto out = augment(img, spec, aug_rng);
    REQUIRE(out.dims() == img.dims());
    if (!(out == img)) any_translation = true;
  }
  REQUIRE(any_translation);
}

TEST_CASE("ablation subsets cover the leave-out grid") {
  const auto subsets = ablation_subsets();
  REQUIRE(subsets.size() == 7);
  std::set<std::string> names;
  for (const auto& [name, spec] : subsets) {
    names.insert(name);
    // every subset stays within the four known transforms
    (void)spec;
  }
  REQUIRE(names == std::set<std::string>{"T", "T/{RC}", "T/{RE}", "T/{Pad}", "T/{RHF}",
                                         "T/{RC,RE}", "T/{Pad,RHF}"});
  for (const auto& [name, spec] : subsets) {
    if (name == "T/{RE}") {
      REQUIRE(spec.rc);
      REQUIRE(spec.pad);
      REQUIRE(spec.rhf);
      REQUIRE_FALSE(spec.re);
    }
    if (name == "T") {
      REQUIRE((spec.rc && spec.re && spec.pad && spec.rhf));
    }
  }
}

TEST_CASE("invalid augment parameters are rejected") {
  Rng rng(12);
  const auto img = random_image(rng, 16);
  AugmentSpec spec;
  spec.rhf_probability = 1.5;
  Rng aug_rng(13);
  REQUIRE_THROWS_AS(augment(img, spec, aug_rng), config_error);
  spec = AugmentSpec{};
  spec.re_area_min = 0.5;
  spec.re_area_max = 0.2;
  REQUIRE_THROWS_AS(augment(img, spec, aug_rng), config_error);
}

TEST_CASE("oversized crop windows are rejected") {
  Rng rng(14);
  const auto img = random_image(rng, 16);
  REQUIRE_THROWS_AS(detail::crop_image(img, 0, 0, 20), config_error);
  REQUIRE_THROWS_AS(detail::crop_image(img, 10, 10, 10), config_error);
}
