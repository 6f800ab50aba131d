// Geometric and contrast transform properties. Exactness oracles use only
// grid-aligned transforms (flips, 90-degree rotation, integer and half-pixel
// shifts) where the resampled value is known in closed form.

#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "imfseg/augmentation.hpp"
#include "imfseg/config.hpp"
#include "imfseg/rng.hpp"

using namespace imfseg;

namespace {

ImageSlice ramp_image(int n) {
  ImageSlice img = ImageSlice::zeros(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) img.at(r, c) = (r * n + c) / double(n * n - 1);
  return img;
}

BinaryMask random_mask(int n, std::uint64_t seed) {
  Rng rng(seed);
  BinaryMask m = BinaryMask::zeros(n, n);
  for (auto& p : m.pixels) p = rng.bernoulli(0.4) ? 1 : 0;
  return m;
}

}  // namespace

TEST_CASE("identity spec copies the image exactly") {
  ImageSlice img = ramp_image(9);
  ImageSlice out = apply_geometric(identity_spec(), img);
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(out.pixels[i] == img.pixels[i]);
}

TEST_CASE("flips are exact permutations and self-inverse") {
  ImageSlice img = ramp_image(8);
  BinaryMask mask = random_mask(8, 2);

  AugmentationSpec fh = identity_spec();
  fh.flip_h = true;
  ImageSlice once_img;
  BinaryMask once_mask;
  apply_geometric(fh, img, &mask, once_img, &once_mask);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c) {
      CHECK(once_img.at(r, c) == img.at(r, 7 - c));
      CHECK(once_mask.at(r, c) == mask.at(r, 7 - c));
    }

  ImageSlice twice_img;
  BinaryMask twice_mask;
  apply_geometric(fh, once_img, &once_mask, twice_img, &twice_mask);
  for (std::size_t i = 0; i < img.size(); ++i) {
    CHECK(twice_img.pixels[i] == img.pixels[i]);
    CHECK(twice_mask.pixels[i] == mask.pixels[i]);
  }

  AugmentationSpec fv = identity_spec();
  fv.flip_v = true;
  ImageSlice v = apply_geometric(fv, img);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c) CHECK(v.at(r, c) == img.at(7 - r, c));
}

TEST_CASE("90-degree rotation equals the index permutation") {
  const int n = 12;
  ImageSlice img = ramp_image(n);
  BinaryMask mask = random_mask(n, 3);
  AugmentationSpec rot = identity_spec();
  rot.rotation_deg = 90.0;
  ImageSlice out_img;
  BinaryMask out_mask;
  apply_geometric(rot, img, &mask, out_img, &out_mask);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      CHECK(out_img.at(r, c) == doctest::Approx(img.at(n - 1 - c, r)).epsilon(1e-12));
      CHECK(out_mask.at(r, c) == mask.at(n - 1 - c, r));
    }
}

TEST_CASE("four 90-degree rotations compose to the identity") {
  const int n = 10;
  ImageSlice img = ramp_image(n);
  AugmentationSpec rot = identity_spec();
  rot.rotation_deg = 90.0;
  ImageSlice cur = img;
  for (int k = 0; k < 4; ++k) cur = apply_geometric(rot, cur);
  for (std::size_t i = 0; i < img.size(); ++i)
    CHECK(cur.pixels[i] == doctest::Approx(img.pixels[i]).epsilon(1e-12));
}

TEST_CASE("integer translation shifts content and zero-fills") {
  const int n = 6;
  ImageSlice img = ramp_image(n);
  AugmentationSpec tr = identity_spec();
  tr.translate_x = 2.0;
  tr.translate_y = -1.0;
  ImageSlice out = apply_geometric(tr, img);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      int sr = r + 1, sc = c - 2;  // content moved right 2, up 1
      double expect = (sr >= 0 && sr < n && sc >= 0 && sc < n) ? img.at(sr, sc) : 0.0;
      CHECK(out.at(r, c) == expect);
    }
}

TEST_CASE("half-pixel shift bilinearly averages horizontal neighbors") {
  const int n = 5;
  ImageSlice img = ramp_image(n);
  AugmentationSpec tr = identity_spec();
  tr.translate_x = 0.5;
  ImageSlice out = apply_geometric(tr, img);
  for (int r = 0; r < n; ++r)
    for (int c = 1; c < n; ++c)
      CHECK(out.at(r, c) == doctest::Approx(0.5 * (img.at(r, c) + img.at(r, c - 1))));
}

TEST_CASE("outputs stay in range, masks stay binary, under random transforms") {
  TrainingConfig cfg;
  const int n = 32;
  ImageSlice img = ramp_image(n);
  BinaryMask mask = random_mask(n, 5);
  for (int trial = 0; trial < 200; ++trial) {
    AugmentationSpec spec = draw_spec(99, "prop" + std::to_string(trial), trial, cfg);
    ImageSlice out_img;
    BinaryMask out_mask;
    apply_geometric(spec, img, &mask, out_img, &out_mask);
    out_img = apply_contrast(spec, out_img, cfg.contrast_mode);
    for (double p : out_img.pixels) {
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
    }
    for (auto v : out_mask.pixels) CHECK((v == 0 || v == 1));
  }
}

TEST_CASE("draw_spec is deterministic and keyed on sample and epoch") {
  TrainingConfig cfg;
  AugmentationSpec a = draw_spec(7, "slice_a", 3, cfg);
  AugmentationSpec b = draw_spec(7, "slice_a", 3, cfg);
  CHECK(a.flip_h == b.flip_h);
  CHECK(a.flip_v == b.flip_v);
  CHECK(a.rotation_deg == b.rotation_deg);
  CHECK(a.scale == b.scale);
  CHECK(a.shear_deg == b.shear_deg);
  CHECK(a.translate_x == b.translate_x);
  CHECK(a.translate_y == b.translate_y);
  CHECK(a.gamma == b.gamma);

  AugmentationSpec c = draw_spec(7, "slice_a", 4, cfg);
  AugmentationSpec d = draw_spec(7, "slice_b", 3, cfg);
  CHECK((c.rotation_deg != a.rotation_deg || c.translate_x != a.translate_x));
  CHECK((d.rotation_deg != a.rotation_deg || d.translate_x != a.translate_x));
}

TEST_CASE("draws do not depend on unrelated config fields") {
  TrainingConfig power, linear;
  linear.contrast_mode = ContrastMode::Linear;
  linear.use_contrast_adjust = false;
  linear.use_noise_robust = false;
  AugmentationSpec a = draw_spec(11, "s", 0, power);
  AugmentationSpec b = draw_spec(11, "s", 0, linear);
  CHECK(a.rotation_deg == b.rotation_deg);
  CHECK(a.gamma == b.gamma);
  CHECK(a.translate_y == b.translate_y);
}

TEST_CASE("draw ranges are respected over many draws") {
  TrainingConfig cfg;
  for (int i = 0; i < 10000; ++i) {
    AugmentationSpec s = draw_spec(13, "range" + std::to_string(i % 40), i / 40, cfg);
    CHECK(s.gamma >= cfg.gamma_min);
    CHECK(s.gamma <= cfg.gamma_max);
    CHECK(std::abs(s.rotation_deg) <= cfg.rotation_max_deg);
    CHECK(s.scale >= cfg.scale_min);
    CHECK(s.scale <= cfg.scale_max);
    CHECK(std::abs(s.shear_deg) <= cfg.shear_max_deg);
    CHECK(std::abs(s.translate_x) <= cfg.translate_max_px);
    CHECK(std::abs(s.translate_y) <= cfg.translate_max_px);
  }
}

TEST_CASE("power contrast is an exact power law") {
  ImageSlice img = ramp_image(4);
  AugmentationSpec spec = identity_spec();
  spec.gamma = 0.6;
  ImageSlice out = apply_contrast(spec, img, ContrastMode::Power);
  for (std::size_t i = 0; i < img.size(); ++i)
    CHECK(out.pixels[i] == doctest::Approx(std::pow(img.pixels[i], 0.6)).epsilon(1e-15));
}

TEST_CASE("linear contrast rescales about mid-gray and clamps") {
  ImageSlice img = ImageSlice::zeros(1, 3);
  img.pixels = {0.0, 0.5, 1.0};
  AugmentationSpec spec = identity_spec();
  spec.gamma = 0.5;
  ImageSlice out = apply_contrast(spec, img, ContrastMode::Linear);
  CHECK(out.pixels[0] == doctest::Approx(0.25));
  CHECK(out.pixels[1] == doctest::Approx(0.5));
  CHECK(out.pixels[2] == doctest::Approx(0.75));

  spec.gamma = 3.0;  // out-of-config-range factor still clamps safely
  ImageSlice wide = apply_contrast(spec, img, ContrastMode::Linear);
  CHECK(wide.pixels[0] == 0.0);
  CHECK(wide.pixels[2] == 1.0);
}

TEST_CASE("contrast never touches masks, geometry resamples them nearest") {
  // A mask warped by a non-grid rotation must still be strictly binary.
  const int n = 16;
  BinaryMask mask = random_mask(n, 8);
  ImageSlice img = ramp_image(n);
  AugmentationSpec spec = identity_spec();
  spec.rotation_deg = 13.7;
  spec.scale = 1.07;
  ImageSlice out_img;
  BinaryMask out_mask;
  apply_geometric(spec, img, &mask, out_img, &out_mask);
  int ones = 0;
  for (auto v : out_mask.pixels) {
    CHECK((v == 0 || v == 1));
    ones += v;
  }
  CHECK(ones > 0);  // rotation of a dense mask does not wipe it
}
