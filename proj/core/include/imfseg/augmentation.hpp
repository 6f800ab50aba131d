#pragma once

#include <cstdint>
#include <string>

#include "imfseg/config.hpp"
#include "imfseg/types.hpp"

namespace imfseg {

// One sampled training transform. Fully determined by (seed, sample_id,
// epoch); the draw record is kept so any augmented sample can be replayed.
struct AugmentationSpec {
  bool flip_h = false;
  bool flip_v = false;
  double rotation_deg = 0.0;
  double scale = 1.0;
  double shear_deg = 0.0;
  double translate_x = 0.0;
  double translate_y = 0.0;
  double gamma = 1.0;

  std::uint64_t seed = 0;
  std::string sample_id;
  int epoch = 0;
};

AugmentationSpec identity_spec();

// Draws all parameters in a fixed order from a stream keyed on
// (seed, sample_id, epoch), so specs are replayable and independent of
// which transforms end up being applied.
AugmentationSpec draw_spec(std::uint64_t seed, const std::string& sample_id, int epoch,
                           const TrainingConfig& config);

// Applies flips, rotation, scale/shear and translation as one composed
// affine map about the image center. Images sample bilinearly (outside
// pixels read as 0, output clamped to [0,1]); masks sample nearest so they
// stay binary. Pass mask = nullptr when there is no mask.
void apply_geometric(const AugmentationSpec& spec, const ImageSlice& image,
                     const BinaryMask* mask, ImageSlice& out_image, BinaryMask* out_mask);

ImageSlice apply_geometric(const AugmentationSpec& spec, const ImageSlice& image);

// Power mode maps x to x^gamma; linear mode rescales contrast about
// mid-gray by the same factor. Masks are never contrast-adjusted.
ImageSlice apply_contrast(const AugmentationSpec& spec, const ImageSlice& image,
                          ContrastMode mode = ContrastMode::Power);

}  // namespace imfseg
