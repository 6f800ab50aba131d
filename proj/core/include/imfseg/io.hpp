#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "imfseg/config.hpp"
#include "imfseg/types.hpp"

namespace imfseg {

struct NormalizationInfo {
  double lo = 0.0;
  double hi = 1.0;
};

// Maps raw intensities into [0,1]. Min-max uses the full range; percentile
// clips to [p_low, p_high] percentiles first. Throws on a constant image
// ("degenerate intensity range").
ImageSlice normalize(const Array2D& raw, NormMode mode, double percentile_low = 1.0,
                     double percentile_high = 99.0, NormalizationInfo* info = nullptr);

// ---- dataset manifest ----

struct ManifestEntry {
  std::string image_path;
  std::string label_path;  // empty when no precise label exists
  std::string subject_id;
  std::string split;  // "train" or "test"
  bool precisely_labeled = false;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
};

DatasetManifest load_manifest(const std::string& path);
void save_manifest(const std::string& path, const DatasetManifest& manifest);

// Split must be subject-wise; labeled entries need label paths.
ValidationResult validate_manifest(const DatasetManifest& manifest);

// Marks round(fraction * train_count) train entries as precisely labeled,
// chosen by a seeded shuffle. Throws "empty labeled set" when the count
// rounds to zero. Entries must carry label paths to be eligible.
DatasetManifest select_labeled_subset(const DatasetManifest& manifest, double fraction,
                                      std::uint64_t seed);

std::vector<const ManifestEntry*> entries_for_split(const DatasetManifest& manifest,
                                                    const std::string& split);

// ---- raster persistence ----

// Images: 16-bit grayscale PGM (values quantized to k/65535); masks: 8-bit
// PGM with {0,255} on disk mapped to {0,1} in memory. Round trips are exact
// for values already on the 16-bit grid.
void save_image(const std::string& path, const ImageSlice& image);
ImageSlice load_image(const std::string& path, int expected_size = 0);

void save_mask(const std::string& path, const BinaryMask& mask);
BinaryMask load_mask(const std::string& path, int expected_size = 0);

// Sidecar record of the intensity range an image had before normalization.
struct SliceMeta {
  std::string source_id;
  double orig_min = 0.0;
  double orig_max = 1.0;
};

std::string sidecar_path(const std::string& image_path);
void save_slice_meta(const std::string& path, const SliceMeta& meta);
SliceMeta load_slice_meta(const std::string& path);

// Lossless float-array persistence (binary, double precision) for
// probability maps and other arrays where exact round trips matter.
void save_array(const std::string& path, const Array2D& array);
Array2D load_array(const std::string& path);

void save_probability_map(const std::string& path, const ProbabilityMap& map);
ProbabilityMap load_probability_map(const std::string& path, int expected_size = 0);

// ---- checkpoints ----

struct CheckpointHeader {
  std::string stage;  // "plg" or "pld"
  int depth = 0;
  int base_channels = 0;
  int epochs_completed = 0;
  std::int64_t adam_step = 0;
  bool has_optimizer = false;
  std::map<std::string, std::string> config_entries;
};

struct Checkpoint {
  CheckpointHeader header;
  std::vector<double> params;
  std::vector<double> adam_m;  // empty unless has_optimizer
  std::vector<double> adam_v;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);
// Reads only the header (params are skipped).
CheckpointHeader load_checkpoint_header(const std::string& path);

// ---- misc ----

// Writes via temp file + rename so readers never observe a torn file.
void atomic_write_file(const std::string& path, const std::string& bytes);
std::string read_file(const std::string& path);
std::uint64_t hash_file(const std::string& path);

// Joins a relative path onto the data root; absolute paths pass through.
// The IMFSEG_DATA_ROOT environment variable overrides the configured root.
std::string effective_data_root(const std::string& configured);
std::string resolve_data_path(const std::string& path, const std::string& data_root);

}  // namespace imfseg
