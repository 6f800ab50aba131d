#pragma once

// Orchestration of the two training stages plus inference, evaluation and
// the ablation grid. Every run directory is self-describing: it carries a
// config snapshot, the manifest hash, the library version, step metrics and
// epoch-boundary checkpoints that allow exact resumption.

#include <cstdint>
#include <string>
#include <vector>

#include "imfseg/config.hpp"
#include "imfseg/evaluation.hpp"
#include "imfseg/io.hpp"
#include "imfseg/network.hpp"
#include "imfseg/types.hpp"

namespace imfseg {

// Batch means of the objective terms at one optimizer step. seg_active and
// s are averaged over the batch (seg_active: fraction of samples whose
// supervised term was on).
struct StepMetrics {
  std::uint64_t step = 0;
  int epoch = 0;
  double l_seg = 0.0;
  double l_c = 0.0;
  double l_r = 0.0;
  double total = 0.0;
  double s = 1.0;
  double seg_active = 1.0;
};

struct TrainResult {
  std::vector<double> params;
  std::vector<double> epoch_mean_total;  // one entry per completed epoch this run
  std::vector<StepMetrics> steps;
  std::string final_checkpoint;
  int epochs_completed = 0;
};

// Writes config.txt and provenance.json (library version, manifest path and
// content hash) into run_dir.
void write_run_provenance(const TrainingConfig& config, const std::string& manifest_path,
                          const std::string& run_dir);

// Stage 1: trains the dual-decoder network on the manifest's train split
// with the supervised term on precisely labeled slices and the mutual
// consistency term on every slice. Throws "PLG requires precise labels"
// when the train split has no precisely labeled entry. resume_from names a
// checkpoint with optimizer state written by an earlier identical run.
TrainResult plg_train(const TrainingConfig& config, const std::string& manifest_path,
                      const std::string& run_dir, const std::string& resume_from = "");

// Between stages: runs the trained stage-1 network over the train split,
// corrects each pseudo-label with the coarse intensity mask and stores the
// records (with confidences) under records_dir.
std::vector<PseudoLabelRecord> pseudo_generate(const TrainingConfig& config,
                                               const std::string& manifest_path,
                                               const std::string& plg_checkpoint,
                                               const std::string& records_dir);

// Stage 2: retrains on the corrected pseudo-labels with the
// confidence-gated objective. Starts from a fresh initialization unless
// init_checkpoint is given (or pld_fresh_init is off, which then requires
// one). Throws when the record store is empty or a train slice lacks a
// record.
TrainResult pld_train(const TrainingConfig& config, const std::string& manifest_path,
                      const std::string& records_dir, const std::string& run_dir,
                      const std::string& init_checkpoint = "",
                      const std::string& resume_from = "");

// Ensemble prediction for one slice with an already-loaded network.
BinaryMask predict_mask(const DualDecoderNet& net, const std::vector<double>& params,
                        const ImageSlice& image, const TrainingConfig& config,
                        Workspace& ws);

// Writes one mask per input image into out_dir, named <stem>_mask.pgm.
// Rerunning with the same inputs rewrites identical files.
void predict(const TrainingConfig& config, const std::string& checkpoint_path,
             const std::vector<std::string>& image_paths, const std::string& out_dir);

// Scores a checkpoint on the manifest's test split and writes report.tsv /
// report_slices.tsv (and overlays when configured) into out_dir.
EvaluationReport evaluate_checkpoint(const TrainingConfig& config,
                                     const std::string& manifest_path,
                                     const std::string& checkpoint_path,
                                     const std::string& out_dir,
                                     const std::string& method_label);

struct AblationRow {
  std::string label;
  std::string seed;  // the seed as digits, or "mean" for the per-label average
  double dice_tm = 0.0;
  double dice_imf = 0.0;
};

// Trains and scores every on/off combination of the requested axes, plus a
// stage-1-only baseline row. Axis tokens: "ce" (confidence gating), "lr"
// (noise-robust term), "aug" (geometric augmentation), "ca" (contrast
// adjustment); anything else throws. Stage-1 training depends only on the
// aug/ca flags, so variants sharing those flags share one stage-1 run and
// one record store per seed. Results land in out_dir/ablation.tsv; the
// returned rows are per-seed rows followed by per-label means.
std::vector<AblationRow> run_ablation(const TrainingConfig& base_config,
                                      const std::string& manifest_path,
                                      const std::vector<std::string>& axes,
                                      const std::vector<std::uint64_t>& seeds,
                                      const std::string& out_dir);

}  // namespace imfseg
