#include "imfseg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>

#include "imfseg/rng.hpp"

namespace fs = std::filesystem;

namespace imfseg {

namespace {

constexpr double kTwoPi = 6.28318530717958647692;
constexpr double kBackground = 0.02;
// Branch intensities never drop below this so the default (0.2, 0.6) window
// excludes every branch when the field and noise are off, while low draws
// still dip into the window once the field attenuates them.
// Branch intensities never dip below the coarse window's upper edge (0.6) on
// unshaded slices: the multiplicative field dims at most ~18%, and
// 0.74 * (1 - 0.18) stays above 0.6. Only additive shading can pull a branch
// into the window, which ties branch-keeping label noise to shaded slices.
constexpr double kBranchFloor = 0.74;

double quantize16(double v) {
  return std::round(std::clamp(v, 0.0, 1.0) * 65535.0) / 65535.0;
}

struct Geometry {
  double cx, cy, ex;  // center and x-axis eccentricity
  double r_outer, r_muscle, r_bone;

  double rho(double x, double y) const {
    double dx = (x - cx) / ex, dy = y - cy;
    return std::sqrt(dx * dx + dy * dy);
  }
  bool in_muscle(double x, double y) const {
    double r = rho(x, y);
    return r >= r_bone && r < r_muscle;
  }
};

}  // namespace

PhantomSpec phantom_spec_from(const TrainingConfig& c, std::uint64_t seed) {
  PhantomSpec s;
  s.image_size = c.phantom_image_size;
  s.muscle_low = c.phantom_muscle_low;
  s.muscle_high = c.phantom_muscle_high;
  s.fat_low = c.phantom_fat_low;
  s.fat_high = c.phantom_fat_high;
  s.bone_low = c.phantom_bone_low;
  s.bone_high = c.phantom_bone_high;
  s.imf_branch_count = c.phantom_imf_branches;
  s.imf_branch_width_px = c.phantom_imf_branch_width;
  s.inhomogeneity_amplitude = c.phantom_inhomogeneity;
  s.noise_sigma = c.phantom_noise_sigma;
  s.seed = seed;
  return s;
}

PhantomSlice generate(const PhantomSpec& spec) {
  if (spec.image_size < 16) throw std::runtime_error("phantom: image_size too small");
  if (!(spec.muscle_low < spec.muscle_high && spec.muscle_high < spec.fat_low &&
        spec.fat_low < spec.fat_high))
    throw std::runtime_error("phantom: muscle/fat intensity ranges must be ordered");
  const int S = spec.image_size;
  Rng rng(spec.seed);

  Geometry geo;
  geo.cx = S * 0.5 + rng.uniform(-0.02 * S, 0.02 * S);
  geo.cy = S * 0.5 + rng.uniform(-0.02 * S, 0.02 * S);
  geo.ex = rng.uniform(0.92, 1.08);
  geo.r_outer = S * rng.uniform(0.40, 0.44);
  geo.r_muscle = S * rng.uniform(0.30, 0.34);
  geo.r_bone = S * rng.uniform(0.08, 0.11);

  double muscle_base = rng.uniform(spec.muscle_low, spec.muscle_high);
  double fat_base = rng.uniform(spec.fat_low, spec.fat_high);
  double bone_base = rng.uniform(spec.bone_low, spec.bone_high);

  // Smooth multiplicative field: three plane-wave cosines, normalized so the
  // extreme pixel sits exactly at +-amplitude.
  double freq[3], ang[3], phase[3];
  for (int k = 0; k < 3; ++k) {
    freq[k] = rng.uniform(0.5, 1.5);
    ang[k] = rng.uniform(0.0, kTwoPi);
    phase[k] = rng.uniform(0.0, kTwoPi);
  }
  double amplitude = spec.inhomogeneity_amplitude * rng.uniform(0.5, 1.2);

  Array2D field = Array2D::zeros(S, S);
  double gmax = 0.0;
  for (int r = 0; r < S; ++r) {
    for (int c = 0; c < S; ++c) {
      double g = 0.0;
      for (int k = 0; k < 3; ++k) {
        double u = (c * std::cos(ang[k]) + r * std::sin(ang[k])) / S;
        g += std::cos(kTwoPi * freq[k] * u + phase[k]);
      }
      field.at(r, c) = g;
      gmax = std::max(gmax, std::abs(g));
    }
  }
  double field_scale = gmax > 0.0 ? amplitude / gmax : 0.0;

  // Branch curves: random walks through the muscle annulus, stamped at
  // width_b and painted brighter than muscle.
  BinaryMask imf = BinaryMask::zeros(S, S);
  Array2D branch_intensity = Array2D::zeros(S, S);
  std::size_t muscle_area = 0;
  for (int r = 0; r < S; ++r)
    for (int c = 0; c < S; ++c)
      if (geo.in_muscle(c + 0.5, r + 0.5)) ++muscle_area;

  // Branches sit in a narrow band at the dim end of fat, so a shaded slice
  // can move most of a branch into the coarse window at once.
  double branch_lo = std::max(kBranchFloor, spec.fat_low - 0.04);
  double branch_hi = std::max(std::min(spec.fat_high, branch_lo + 0.10), branch_lo + 0.04);
  for (int b = 0; b < spec.imf_branch_count; ++b) {
    int width = 1 + static_cast<int>(rng.uniform_index(
                        static_cast<std::uint64_t>(spec.imf_branch_width_px)));
    double intensity = rng.uniform(branch_lo, branch_hi);
    double t = rng.uniform(0.0, kTwoPi);
    double rad = rng.uniform(geo.r_bone + 2.0, std::max(geo.r_bone + 3.0, geo.r_muscle - 2.0));
    double x = geo.cx + geo.ex * rad * std::cos(t);
    double y = geo.cy + rad * std::sin(t);
    double dir = rng.uniform(0.0, kTwoPi);
    int steps = 8 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(S / 3)));
    for (int s = 0; s < steps; ++s) {
      for (int dr = 0; dr < width; ++dr) {
        for (int dc = 0; dc < width; ++dc) {
          int pr = static_cast<int>(std::floor(y)) + dr;
          int pc = static_cast<int>(std::floor(x)) + dc;
          if (pr < 0 || pc < 0 || pr >= S || pc >= S) continue;
          if (!geo.in_muscle(pc + 0.5, pr + 0.5)) continue;
          imf.at(pr, pc) = 1;
          branch_intensity.at(pr, pc) = intensity;
        }
      }
      dir += rng.normal() * 0.35;
      x += std::cos(dir);
      y += std::sin(dir);
      if (geo.rho(x, y) > geo.r_muscle + 3.0) break;
    }
  }
  if (imf.count() * 2 > muscle_area)
    throw std::runtime_error("phantom: branches exceed half the muscle area");

  PhantomSlice out;
  out.image = ImageSlice::zeros(S, S);
  out.muscle_gt = BinaryMask::zeros(S, S);
  for (int r = 0; r < S; ++r) {
    for (int c = 0; c < S; ++c) {
      double x = c + 0.5, y = r + 0.5;
      double rho = geo.rho(x, y);
      double base;
      if (rho < geo.r_bone) {
        base = bone_base;
      } else if (rho < geo.r_muscle) {
        if (imf.at(r, c)) {
          base = branch_intensity.at(r, c);
        } else {
          base = muscle_base;
          out.muscle_gt.at(r, c) = 1;
        }
      } else if (rho < geo.r_outer) {
        base = fat_base;
      } else {
        base = kBackground;
      }
      double norm_g = gmax > 0.0 ? field.at(r, c) / gmax : 0.0;
      double v = base * (1.0 + field_scale * field.at(r, c)) +
                 spec.shading_amplitude * norm_g;
      if (spec.noise_sigma > 0.0) v += rng.normal() * spec.noise_sigma;
      if (spec.invert) v = 1.0 - v;
      out.image.at(r, c) = quantize16(v);
    }
  }
  out.imf = std::move(imf);
  return out;
}

BinaryMask degraded_label(const PhantomSlice& slice) {
  BinaryMask out = slice.muscle_gt;
  for (std::size_t i = 0; i < out.pixels.size(); ++i)
    out.pixels[i] = out.pixels[i] | slice.imf.pixels[i];
  return out;
}

DatasetManifest generate_phantom_dataset(const TrainingConfig& config,
                                         const std::string& root) {
  const int n_subjects = config.phantom_train_subjects + config.phantom_test_subjects;
  const int n_slices = config.phantom_slices_per_subject;
  fs::create_directories(fs::path(root) / "images");
  fs::create_directories(fs::path(root) / "labels");
  if (config.phantom_write_degraded) fs::create_directories(fs::path(root) / "degraded");

  DatasetManifest manifest;
  for (int si = 0; si < n_subjects; ++si) {
    // Subjects carry their own anatomy bias: slices jitter inside a
    // subject-anchored sub-range of each configured intensity range.
    Rng srng = derive_rng(config.seed, "phantom-subject", static_cast<std::uint64_t>(si));
    auto sub_range = [&](double lo, double hi) {
      double d = (hi - lo) * 0.25;
      double anchor = srng.uniform(lo + d, hi - d);
      return std::pair<double, double>{anchor - d, anchor + d};
    };
    auto [ml, mh] = sub_range(config.phantom_muscle_low, config.phantom_muscle_high);
    auto [fl, fh] = sub_range(config.phantom_fat_low, config.phantom_fat_high);
    auto [bl, bh] = sub_range(config.phantom_bone_low, config.phantom_bone_high);

    char subject[8];
    std::snprintf(subject, sizeof(subject), "s%02d", si);
    for (int zi = 0; zi < n_slices; ++zi) {
      PhantomSpec spec = phantom_spec_from(
          config, derive_key(config.seed, "phantom-slice", static_cast<std::uint64_t>(si),
                             static_cast<std::uint64_t>(zi)));
      spec.muscle_low = ml;
      spec.muscle_high = mh;
      spec.fat_low = fl;
      spec.fat_high = fh;
      spec.bone_low = bl;
      spec.bone_high = bh;
      spec.invert =
          derive_rng(config.seed, "phantom-invert", static_cast<std::uint64_t>(si),
                     static_cast<std::uint64_t>(zi))
              .uniform(0.0, 1.0) < config.phantom_invert_fraction;
      Rng shade_rng = derive_rng(config.seed, "phantom-shade", static_cast<std::uint64_t>(si),
                                 static_cast<std::uint64_t>(zi));
      if (shade_rng.uniform(0.0, 1.0) < config.phantom_shading_fraction)
        spec.shading_amplitude = shade_rng.uniform(0.8, 1.0) * config.phantom_shading;
      PhantomSlice slice = generate(spec);

      char id[16];
      std::snprintf(id, sizeof(id), "%s_z%02d", subject, zi);
      std::string image_rel = std::string("images/") + id + ".pgm";
      std::string label_rel = std::string("labels/") + id + ".pgm";
      slice.image.source_id = id;
      save_image((fs::path(root) / image_rel).string(), slice.image);
      SliceMeta meta;
      meta.source_id = id;
      meta.orig_min = 0.0;
      meta.orig_max = 1.0;
      save_slice_meta(sidecar_path((fs::path(root) / image_rel).string()), meta);
      save_mask((fs::path(root) / label_rel).string(), slice.muscle_gt);
      if (config.phantom_write_degraded)
        save_mask((fs::path(root) / "degraded" / (std::string(id) + ".pgm")).string(),
                  degraded_label(slice));

      ManifestEntry e;
      e.image_path = image_rel;
      e.label_path = label_rel;
      e.subject_id = subject;
      e.split = si < config.phantom_train_subjects ? "train" : "test";
      manifest.entries.push_back(std::move(e));
    }
  }

  manifest = select_labeled_subset(manifest, config.labeled_fraction, config.seed);
  ValidationResult check = validate_manifest(manifest);
  if (!check.ok())
    throw std::runtime_error("phantom: generated manifest invalid: " +
                             check.violations.front());
  save_manifest((fs::path(root) / "manifest.tsv").string(), manifest);
  return manifest;
}

}  // namespace imfseg
