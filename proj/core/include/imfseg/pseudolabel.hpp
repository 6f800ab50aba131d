#pragma once

#include <string>
#include <vector>

#include "imfseg/config.hpp"
#include "imfseg/io.hpp"
#include "imfseg/network.hpp"
#include "imfseg/types.hpp"

namespace imfseg {

// Fuses the two decoder outputs into one probability map: either sigmoid of
// the averaged logits (default) or the average of the two probabilities.
ProbabilityMap ensemble_probability(const DecoderOutputs& outputs, PseudoMode mode);

// Ensemble prediction thresholded into a pseudo-label mask. Throws when
// params is empty (untrained network).
BinaryMask generate_pseudo(const DualDecoderNet& net, const std::vector<double>& params,
                           const ImageSlice& image, const TrainingConfig& config,
                           Workspace& ws);

// pixel = 1 iff low < intensity < high, both bounds strict.
BinaryMask coarse_mask(const ImageSlice& image, double low, double high);

// Elementwise AND.
BinaryMask correct(const BinaryMask& y_pseudo, const BinaryMask& y_coarse);

// Overlap score 2|a∩b|/(|a|+|b|). Both empty -> 1 (agreement); one empty -> 0.
double confidence(const BinaryMask& y_pseudo, const BinaryMask& y_coarse);

// Assembles the corrected label and its confidence gate decision.
PseudoLabelRecord make_record(const std::string& source_id, BinaryMask y_pseudo,
                              BinaryMask y_coarse, double confidence_threshold);

// One record per train slice, keyed by the manifest image path. Precisely
// labeled slices keep their true mask (recorded with S = 1); the rest get
// network pseudo-labels corrected by the coarse intensity mask. Per-slice
// I/O failures are skipped with a warning; throws only when every slice
// fails.
std::vector<PseudoLabelRecord> build_records(const DualDecoderNet& net,
                                             const std::vector<double>& params,
                                             const DatasetManifest& manifest,
                                             const TrainingConfig& config);

// Record store layout: <dir>/index.tsv with columns (source_id, S,
// eligible) plus a mask-file triple per slice.
void save_records(const std::string& dir, const std::vector<PseudoLabelRecord>& records);
std::vector<PseudoLabelRecord> load_records(const std::string& dir,
                                            double confidence_threshold,
                                            int expected_size = 0);

}  // namespace imfseg
