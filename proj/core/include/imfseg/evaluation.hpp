#pragma once

#include <string>
#include <vector>

#include "imfseg/config.hpp"
#include "imfseg/io.hpp"
#include "imfseg/network.hpp"
#include "imfseg/types.hpp"

namespace imfseg {

// 2|a∩b| / (|a|+|b|); both masks empty -> 1.
double dice_similarity(const BinaryMask& a, const BinaryMask& b);

// Disk structuring element of the given radius: (2r+1)^2 grid, pixel set
// iff dr^2 + dc^2 <= r^2. Odd side, anchored at the center.
BinaryMask make_disk(int radius);

// Out-of-image pixels read as background for dilation and as foreground for
// erosion, so erosion never shrinks a region merely for touching the border
// and closing stays idempotent and extensive on the finite grid.
BinaryMask dilate(const BinaryMask& m, const BinaryMask& se);
BinaryMask erode(const BinaryMask& m, const BinaryMask& se);
BinaryMask binary_closing(const BinaryMask& m, const BinaryMask& se);

// Gaps the closing fills inside the muscle mask: close(y) AND NOT y.
// Radius must be >= 1.
BinaryMask extract_imf(const BinaryMask& y, int struct_radius);

// configured > 0 wins; otherwise a radius-5-at-256 proportional default.
int auto_struct_radius(int slice_size, int configured);

struct SliceScore {
  std::string source_id;
  double dice_tm = 0.0;
  double dice_imf = 0.0;
};

struct EvaluationReport {
  std::string method_label;
  std::vector<SliceScore> slices;
  double mean_dice_tm = 0.0;
  double mean_dice_imf = 0.0;
  int skipped = 0;
};

// Scores one prediction against ground truth: whole-mask overlap plus
// overlap of the extracted interior structures.
SliceScore score_slice(const std::string& source_id, const BinaryMask& prediction,
                       const BinaryMask& ground_truth, int struct_radius);

EvaluationReport fold_scores(const std::string& method_label,
                             std::vector<SliceScore> slices, int skipped);

// Runs ensemble inference over the manifest's test split and scores each
// slice. Slices without ground truth are skipped with a warning; throws if
// nothing could be evaluated.
EvaluationReport evaluate_model(const DualDecoderNet& net, const std::vector<double>& params,
                                const DatasetManifest& manifest, const TrainingConfig& config,
                                const std::string& method_label);

// report.tsv (one summary row) and report_slices.tsv (per-slice appendix).
void write_report(const std::string& dir, const EvaluationReport& report);
void append_report_row(const std::string& path, const EvaluationReport& report);

// Visual audit image: input grayscale, prediction boundary in red, ground
// truth boundary in green (binary PPM).
void save_overlay(const std::string& path, const ImageSlice& image, const BinaryMask& pred,
                  const BinaryMask& gt);

}  // namespace imfseg
