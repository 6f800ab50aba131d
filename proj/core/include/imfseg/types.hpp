#pragma once

// Shared domain types. All values are immutable after construction by
// convention; every consumer treats them as read-only.

#include <cstdint>
#include <string>
#include <vector>

namespace imfseg {

/// One 2D grayscale slice, intensities normalized to [0, 1]. Row-major.
struct ImageSlice {
  int height = 0;
  int width = 0;
  std::vector<double> pixels;
  std::string source_id;

  double at(int r, int c) const { return pixels[static_cast<std::size_t>(r) * width + c]; }
  double& at(int r, int c) { return pixels[static_cast<std::size_t>(r) * width + c]; }
  std::size_t size() const { return pixels.size(); }

  static ImageSlice zeros(int h, int w, std::string id = "");
};

/// Per-pixel {0,1} label map. Stored as integers so mask arithmetic
/// (intersections, confidence sums) is literal.
struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(int r, int c) const { return pixels[static_cast<std::size_t>(r) * width + c]; }
  std::uint8_t& at(int r, int c) { return pixels[static_cast<std::size_t>(r) * width + c]; }
  std::size_t size() const { return pixels.size(); }
  std::size_t count() const;

  static BinaryMask zeros(int h, int w);

  bool operator==(const BinaryMask& other) const = default;
};

/// Unnormalized 2D scalar field: raw intensities, logit maps, metric grids.
struct Array2D {
  int height = 0;
  int width = 0;
  std::vector<double> values;

  double at(int r, int c) const { return values[static_cast<std::size_t>(r) * width + c]; }
  double& at(int r, int c) { return values[static_cast<std::size_t>(r) * width + c]; }
  std::size_t size() const { return values.size(); }

  static Array2D zeros(int h, int w);
};

/// Per-pixel values in [0, 1].
struct ProbabilityMap {
  int height = 0;
  int width = 0;
  std::vector<double> pixels;

  double at(int r, int c) const { return pixels[static_cast<std::size_t>(r) * width + c]; }
  double& at(int r, int c) { return pixels[static_cast<std::size_t>(r) * width + c]; }
  std::size_t size() const { return pixels.size(); }

  static ProbabilityMap zeros(int h, int w);
};

/// Per-slice pseudo-label bundle produced after the first training stage.
struct PseudoLabelRecord {
  std::string source_id;
  BinaryMask y_pseudo;
  BinaryMask y_coarse;
  BinaryMask y_corrected;
  double confidence = 0.0;
  bool eligible = false;
};

struct ValidationResult {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

/// Invariant checks for untrusted values. Reports, never throws, never
/// mutates. expected_size == 0 skips the configured-size check.
ValidationResult validate(const ImageSlice& s, int expected_size = 0);
ValidationResult validate(const BinaryMask& m, int expected_size = 0);
ValidationResult validate(const ProbabilityMap& p, int expected_size = 0);
ValidationResult validate(const PseudoLabelRecord& r, double confidence_threshold);

bool same_shape(const BinaryMask& a, const BinaryMask& b);
bool same_shape(const ProbabilityMap& a, const BinaryMask& b);
bool same_shape(const ProbabilityMap& a, const ProbabilityMap& b);
bool same_shape(const ImageSlice& a, const BinaryMask& b);

}  // namespace imfseg
