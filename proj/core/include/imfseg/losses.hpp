#pragma once

#include <vector>

#include "imfseg/config.hpp"
#include "imfseg/types.hpp"

namespace imfseg {

// Per-sample objective values as logged to the metrics file. seg_active
// records whether the supervised term entered the total.
struct LossBreakdown {
  double l_seg = 0.0;
  double l_c = 0.0;
  double l_r = 0.0;
  double total = 0.0;
  bool seg_active = false;
};

// Soft Dice loss: 1 - (2*sum(p*y) + eps) / (sum(p) + sum(y) + eps),
// eps = 1e-5. Lives in [0, 1).
double dice_loss(const ProbabilityMap& p, const BinaryMask& y);

// d(dice_loss)/dp, accumulated into dp (dp must be sized |p| and may hold
// gradients of other terms already).
void dice_loss_grad(const ProbabilityMap& p, const BinaryMask& y, double weight,
                    std::vector<double>& dp);

// Mutual-consistency penalty between the two decoders: each probability map
// is pulled toward the *other* decoder's thresholded prediction. pl_a/pl_b
// are constants here (stop-gradient targets); gradients flow only through
// p_a/p_b. Mse averages per pixel; Euclidean is the unsquared norm.
double consistency_loss(const ProbabilityMap& p_a, const ProbabilityMap& p_b,
                        const BinaryMask& pl_a, const BinaryMask& pl_b,
                        NormKind norm = NormKind::Mse);

void consistency_loss_grads(const ProbabilityMap& p_a, const ProbabilityMap& p_b,
                            const BinaryMask& pl_a, const BinaryMask& pl_b, double weight,
                            std::vector<double>& dp_a, std::vector<double>& dp_b,
                            NormKind norm = NormKind::Mse);

// Penalizes predictions that miss the (possibly noisy) target's support:
// mean((p*y - y)^2) per decoder. Pixels outside y contribute nothing.
double noise_robust_loss(const ProbabilityMap& p_a, const ProbabilityMap& p_b,
                         const BinaryMask& y_corrected, NormKind norm = NormKind::Mse);

void noise_robust_loss_grads(const ProbabilityMap& p_a, const ProbabilityMap& p_b,
                             const BinaryMask& y_corrected, double weight,
                             std::vector<double>& dp_a, std::vector<double>& dp_b,
                             NormKind norm = NormKind::Mse);

// Stage-2 combination: when the sample's confidence s clears the threshold,
// total = s*l_seg + l_r + w_c*l_c; otherwise the supervised term is dropped.
// With use_confidence_gate off, l_seg is always active at weight 1; with
// use_noise_robust off, l_r is dropped from the total.
LossBreakdown combined_pld_loss(double l_seg, double l_c, double l_r, double s,
                                const TrainingConfig& config);

}  // namespace imfseg
