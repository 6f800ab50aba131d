#pragma once

// Training configuration: flat key=value text file with a typed schema.
// Unknown keys are errors; every key has a default listed in the schema.

#include <cstdint>
#include <map>
#include <string>

namespace imfseg {

enum class NormMode { MinMax, Percentile };
enum class ContrastMode { Power, Linear };
enum class PseudoMode { LogitMean, ProbMean };
enum class NormKind { Mse, Euclidean };
enum class LrSchedule { Constant, LinearDecay };

struct TrainingConfig {
  // Data
  int slice_size = 256;
  double labeled_fraction = 0.01;
  NormMode norm_mode = NormMode::MinMax;
  double percentile_low = 1.0;
  double percentile_high = 99.0;
  std::string data_root;  // empty: manifest directory; env IMFSEG_DATA_ROOT overrides

  // Schedule / optimizer
  int plg_epochs = 20;
  int pld_epochs = 10;
  int batch_size = 8;
  std::uint64_t seed = 1;
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  LrSchedule lr_schedule = LrSchedule::Constant;
  bool oversample_labeled = true;
  bool pld_fresh_init = true;
  int worker_threads = 1;

  // Network
  int depth = 4;
  int base_channels = 16;

  // Losses and pseudo-label handling
  double consistency_weight = 0.5;
  double confidence_threshold = 0.8;
  double coarse_low = 0.2;
  double coarse_high = 0.6;
  double prob_threshold = 0.5;
  NormKind loss_norm = NormKind::Mse;
  PseudoMode pseudo_mode = PseudoMode::LogitMean;
  bool use_confidence_gate = true;
  bool use_noise_robust = true;

  // Augmentation
  bool use_augmentation = true;
  bool use_contrast_adjust = true;
  ContrastMode contrast_mode = ContrastMode::Power;
  double gamma_min = 0.5;
  double gamma_max = 0.7;
  double rotation_max_deg = 15.0;
  double scale_min = 0.9;
  double scale_max = 1.1;
  double shear_max_deg = 8.0;
  double translate_max_px = 10.0;

  // Evaluation
  int struct_radius = 0;  // 0: scaled from slice_size (5 px at 256)
  bool save_overlays = false;

  // Phantom dataset generation
  int phantom_image_size = 64;
  int phantom_train_subjects = 8;
  int phantom_test_subjects = 2;
  int phantom_slices_per_subject = 25;
  double phantom_muscle_low = 0.30;
  double phantom_muscle_high = 0.55;
  double phantom_fat_low = 0.66;
  double phantom_fat_high = 0.92;
  double phantom_bone_low = 0.05;
  double phantom_bone_high = 0.16;
  int phantom_imf_branches = 5;
  int phantom_imf_branch_width = 3;
  double phantom_inhomogeneity = 0.15;
  double phantom_noise_sigma = 0.01;
  // Fraction of slices written with inverted contrast, as in fat-suppressed
  // acquisitions. Off by default; an opt-in extra degradation.
  double phantom_invert_fraction = 0.0;
  // A minority of slices carry an additive shading field on top of the
  // multiplicative one, as from a failing coil. Shading moves background and
  // bone into the intensity window (collapsing the coarse-mask agreement)
  // and locally dims branches into it (so their corrected labels keep fat
  // that should have been excluded). These are the slices the confidence
  // gate exists to reject.
  double phantom_shading_fraction = 0.25;
  double phantom_shading = 0.3;  // peak additive amplitude on shaded slices
  bool phantom_write_degraded = false;
};

/// Parses a config file into defaults. Lines are `key = value`; '#' starts a
/// comment. Throws std::runtime_error on unknown keys, type errors, or
/// violated invariants.
TrainingConfig load_config(const std::string& path);

/// Applies `key = value` pairs on top of an existing config (same schema
/// and validation as load_config).
void apply_config_entries(TrainingConfig& cfg,
                          const std::map<std::string, std::string>& entries);

/// Throws std::runtime_error if any config invariant is violated.
void validate_config(const TrainingConfig& cfg);

/// Full schema-ordered serialization of a config.
std::map<std::string, std::string> config_to_entries(const TrainingConfig& cfg);
std::string config_to_text(const TrainingConfig& cfg);

/// Parses config text from memory (same format as load_config).
TrainingConfig parse_config_text(const std::string& text);

}  // namespace imfseg
