#include "imfseg/augmentation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "imfseg/rng.hpp"

namespace imfseg {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Affine {
  // Forward map: q = M (p - c) + c + t, with p, q in (col, row) coordinates.
  double m00, m01, m10, m11;
  double tx, ty;
};

Affine forward_map(const AugmentationSpec& s) {
  double th = s.rotation_deg * kPi / 180.0;
  double ct = std::cos(th), st = std::sin(th);
  double sh = std::tan(s.shear_deg * kPi / 180.0);
  double fx = s.flip_h ? -1.0 : 1.0;
  double fy = s.flip_v ? -1.0 : 1.0;
  // M = R(theta) * Shear(sh) * Scale(s) * Flip
  double a00 = s.scale * fx, a01 = sh * s.scale * fy;
  double a10 = 0.0, a11 = s.scale * fy;
  return {ct * a00 - st * a10, ct * a01 - st * a11,
          st * a00 + ct * a10, st * a01 + ct * a11,
          s.translate_x,       s.translate_y};
}

Affine invert(const Affine& f) {
  double det = f.m00 * f.m11 - f.m01 * f.m10;
  if (std::abs(det) < 1e-12) throw std::runtime_error("augmentation: singular transform");
  double inv = 1.0 / det;
  return {f.m11 * inv, -f.m01 * inv, -f.m10 * inv, f.m00 * inv, f.tx, f.ty};
}

double sample_bilinear(const ImageSlice& img, double x, double y) {
  int x0 = static_cast<int>(std::floor(x));
  int y0 = static_cast<int>(std::floor(y));
  double wx = x - x0, wy = y - y0;
  auto pix = [&](int yy, int xx) -> double {
    if (xx < 0 || yy < 0 || xx >= img.width || yy >= img.height) return 0.0;
    return img.at(yy, xx);
  };
  double top = pix(y0, x0) * (1.0 - wx) + pix(y0, x0 + 1) * wx;
  double bot = pix(y0 + 1, x0) * (1.0 - wx) + pix(y0 + 1, x0 + 1) * wx;
  return top * (1.0 - wy) + bot * wy;
}

std::uint8_t sample_nearest(const BinaryMask& mask, double x, double y) {
  int xx = static_cast<int>(std::lround(x));
  int yy = static_cast<int>(std::lround(y));
  if (xx < 0 || yy < 0 || xx >= mask.width || yy >= mask.height) return 0;
  return mask.at(yy, xx);
}

}  // namespace

AugmentationSpec identity_spec() { return AugmentationSpec{}; }

AugmentationSpec draw_spec(std::uint64_t seed, const std::string& sample_id, int epoch,
                           const TrainingConfig& config) {
  Rng rng = derive_rng(seed, "augment", fnv1a64(sample_id),
                       static_cast<std::uint64_t>(epoch));
  AugmentationSpec s;
  s.flip_h = rng.bernoulli();
  s.flip_v = rng.bernoulli();
  s.rotation_deg = rng.uniform(-config.rotation_max_deg, config.rotation_max_deg);
  s.scale = rng.uniform(config.scale_min, config.scale_max);
  s.shear_deg = rng.uniform(-config.shear_max_deg, config.shear_max_deg);
  s.translate_x = rng.uniform(-config.translate_max_px, config.translate_max_px);
  s.translate_y = rng.uniform(-config.translate_max_px, config.translate_max_px);
  s.gamma = rng.uniform(config.gamma_min, config.gamma_max);
  s.seed = seed;
  s.sample_id = sample_id;
  s.epoch = epoch;
  return s;
}

void apply_geometric(const AugmentationSpec& spec, const ImageSlice& image,
                     const BinaryMask* mask, ImageSlice& out_image, BinaryMask* out_mask) {
  if (mask && (mask->height != image.height || mask->width != image.width))
    throw std::runtime_error("augmentation: image/mask shape mismatch");
  if (mask && !out_mask)
    throw std::runtime_error("augmentation: mask given but no mask output");

  Affine inv = invert(forward_map(spec));
  double cx = (image.width - 1) * 0.5;
  double cy = (image.height - 1) * 0.5;

  out_image = ImageSlice::zeros(image.height, image.width);
  out_image.source_id = image.source_id;
  if (mask) *out_mask = BinaryMask::zeros(image.height, image.width);

  for (int r = 0; r < image.height; ++r) {
    for (int c = 0; c < image.width; ++c) {
      double dx = (c - inv.tx) - cx;
      double dy = (r - inv.ty) - cy;
      double sx = inv.m00 * dx + inv.m01 * dy + cx;
      double sy = inv.m10 * dx + inv.m11 * dy + cy;
      out_image.at(r, c) = std::clamp(sample_bilinear(image, sx, sy), 0.0, 1.0);
      if (mask) out_mask->at(r, c) = sample_nearest(*mask, sx, sy);
    }
  }
}

ImageSlice apply_geometric(const AugmentationSpec& spec, const ImageSlice& image) {
  ImageSlice out;
  apply_geometric(spec, image, nullptr, out, nullptr);
  return out;
}

ImageSlice apply_contrast(const AugmentationSpec& spec, const ImageSlice& image,
                          ContrastMode mode) {
  ImageSlice out = image;
  if (mode == ContrastMode::Power) {
    for (double& v : out.pixels) v = std::pow(std::clamp(v, 0.0, 1.0), spec.gamma);
  } else {
    for (double& v : out.pixels)
      v = std::clamp(0.5 + spec.gamma * (v - 0.5), 0.0, 1.0);
  }
  return out;
}

}  // namespace imfseg
