#pragma once

#include <cstdint>
#include <string>

#include "imfseg/config.hpp"
#include "imfseg/io.hpp"
#include "imfseg/types.hpp"

namespace imfseg {

// Recipe for one synthetic thigh-like slice. Every random draw inside
// generate() derives from `seed`, so equal specs give identical slices.
struct PhantomSpec {
  int image_size = 64;
  double muscle_low = 0.30;   // mid intensities, inside the (0.2, 0.6) window
  double muscle_high = 0.55;
  double fat_low = 0.66;  // bright ring and branch intensities, above 0.6
  double fat_high = 0.92;
  double bone_low = 0.05;  // dark center, below 0.2
  double bone_high = 0.16;
  int imf_branch_count = 5;
  int imf_branch_width_px = 3;       // widths drawn per branch in [1, this]
  double inhomogeneity_amplitude = 0.15;  // base; per-slice jitter applies
  double noise_sigma = 0.01;
  // Additive bias sharing the inhomogeneity field's shape. Zero on most
  // slices; shaded slices push background and bone into the coarse window
  // and locally dim branches into it.
  double shading_amplitude = 0.0;
  bool invert = false;  // fat-suppressed look: intensities flipped around 0.5
  std::uint64_t seed = 1;
};

PhantomSpec phantom_spec_from(const TrainingConfig& config, std::uint64_t seed);

struct PhantomSlice {
  ImageSlice image;     // already quantized to the 16-bit raster grid
  BinaryMask muscle_gt;  // muscle annulus minus branch pixels
  BinaryMask imf;        // branch pixels inside the muscle annulus
};

// Concentric anatomy (background, bright fat ring, mid muscle annulus cut by
// bright branch curves, dark bone disk), multiplied by a smooth
// inhomogeneity field and perturbed by Gaussian noise. Throws when branch
// pixels swallow more than half the muscle annulus.
PhantomSlice generate(const PhantomSpec& spec);

// Noisy annotation that mislabels branch fat as muscle: ground truth OR imf.
BinaryMask degraded_label(const PhantomSlice& slice);

// Writes images/, labels/ and manifest.tsv under root: subject-wise
// train/test split with the configured labeled fraction already selected.
// Slices of one subject share anatomy biases; every slice is reproducible
// from config.seed alone.
DatasetManifest generate_phantom_dataset(const TrainingConfig& config,
                                         const std::string& root);

}  // namespace imfseg
