#include "imfseg/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace imfseg {

namespace {

constexpr double kDiceEps = 1e-5;

void require_same_shape(const ProbabilityMap& p, const BinaryMask& y, const char* who) {
  if (p.height != y.height || p.width != y.width)
    throw std::runtime_error(std::string(who) + ": shape mismatch");
}

void require_same_shape(const ProbabilityMap& a, const ProbabilityMap& b, const char* who) {
  if (a.height != b.height || a.width != b.width)
    throw std::runtime_error(std::string(who) + ": shape mismatch");
}

}  // namespace

double dice_loss(const ProbabilityMap& p, const BinaryMask& y) {
  require_same_shape(p, y, "dice_loss");
  double inter = 0.0, sum_p = 0.0;
  std::size_t sum_y = 0;
  for (std::size_t i = 0; i < p.pixels.size(); ++i) {
    sum_p += p.pixels[i];
    if (y.pixels[i]) {
      inter += p.pixels[i];
      ++sum_y;
    }
  }
  double num = 2.0 * inter + kDiceEps;
  double den = sum_p + static_cast<double>(sum_y) + kDiceEps;
  return 1.0 - num / den;
}

void dice_loss_grad(const ProbabilityMap& p, const BinaryMask& y, double weight,
                    std::vector<double>& dp) {
  require_same_shape(p, y, "dice_loss");
  if (dp.size() != p.pixels.size()) throw std::runtime_error("dice_loss: gradient size");
  double inter = 0.0, sum_p = 0.0;
  std::size_t sum_y = 0;
  for (std::size_t i = 0; i < p.pixels.size(); ++i) {
    sum_p += p.pixels[i];
    if (y.pixels[i]) {
      inter += p.pixels[i];
      ++sum_y;
    }
  }
  double num = 2.0 * inter + kDiceEps;
  double den = sum_p + static_cast<double>(sum_y) + kDiceEps;
  double inv_den2 = 1.0 / (den * den);
  // d/dp_i [1 - num/den] = (num - 2*y_i*den) / den^2
  for (std::size_t i = 0; i < p.pixels.size(); ++i) {
    double dyi = y.pixels[i] ? 2.0 * den : 0.0;
    dp[i] += weight * (num - dyi) * inv_den2;
  }
}

double consistency_loss(const ProbabilityMap& p_a, const ProbabilityMap& p_b,
                        const BinaryMask& pl_a, const BinaryMask& pl_b, NormKind norm) {
  require_same_shape(p_a, p_b, "consistency_loss");
  require_same_shape(p_a, pl_a, "consistency_loss");
  require_same_shape(p_a, pl_b, "consistency_loss");
  double sa = 0.0, sb = 0.0;
  for (std::size_t i = 0; i < p_a.pixels.size(); ++i) {
    double da = p_a.pixels[i] - static_cast<double>(pl_b.pixels[i]);
    double db = p_b.pixels[i] - static_cast<double>(pl_a.pixels[i]);
    sa += da * da;
    sb += db * db;
  }
  if (norm == NormKind::Euclidean) return std::sqrt(sa) + std::sqrt(sb);
  double n = static_cast<double>(p_a.pixels.size());
  return sa / n + sb / n;
}

void consistency_loss_grads(const ProbabilityMap& p_a, const ProbabilityMap& p_b,
                            const BinaryMask& pl_a, const BinaryMask& pl_b, double weight,
                            std::vector<double>& dp_a, std::vector<double>& dp_b,
                            NormKind norm) {
  require_same_shape(p_a, p_b, "consistency_loss");
  require_same_shape(p_a, pl_a, "consistency_loss");
  require_same_shape(p_a, pl_b, "consistency_loss");
  const std::size_t n = p_a.pixels.size();
  if (dp_a.size() != n || dp_b.size() != n)
    throw std::runtime_error("consistency_loss: gradient size");

  if (norm == NormKind::Euclidean) {
    double sa = 0.0, sb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double da = p_a.pixels[i] - static_cast<double>(pl_b.pixels[i]);
      double db = p_b.pixels[i] - static_cast<double>(pl_a.pixels[i]);
      sa += da * da;
      sb += db * db;
    }
    double ia = sa > 0.0 ? 1.0 / std::sqrt(sa) : 0.0;
    double ib = sb > 0.0 ? 1.0 / std::sqrt(sb) : 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      dp_a[i] += weight * ia * (p_a.pixels[i] - static_cast<double>(pl_b.pixels[i]));
      dp_b[i] += weight * ib * (p_b.pixels[i] - static_cast<double>(pl_a.pixels[i]));
    }
    return;
  }
  double scale = weight * 2.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    dp_a[i] += scale * (p_a.pixels[i] - static_cast<double>(pl_b.pixels[i]));
    dp_b[i] += scale * (p_b.pixels[i] - static_cast<double>(pl_a.pixels[i]));
  }
}

double noise_robust_loss(const ProbabilityMap& p_a, const ProbabilityMap& p_b,
                         const BinaryMask& y_corrected, NormKind norm) {
  require_same_shape(p_a, p_b, "noise_robust_loss");
  require_same_shape(p_a, y_corrected, "noise_robust_loss");
  double sa = 0.0, sb = 0.0;
  for (std::size_t i = 0; i < p_a.pixels.size(); ++i) {
    if (!y_corrected.pixels[i]) continue;
    double da = p_a.pixels[i] - 1.0;
    double db = p_b.pixels[i] - 1.0;
    sa += da * da;
    sb += db * db;
  }
  if (norm == NormKind::Euclidean) return std::sqrt(sa) + std::sqrt(sb);
  double n = static_cast<double>(p_a.pixels.size());
  return sa / n + sb / n;
}

void noise_robust_loss_grads(const ProbabilityMap& p_a, const ProbabilityMap& p_b,
                             const BinaryMask& y_corrected, double weight,
                             std::vector<double>& dp_a, std::vector<double>& dp_b,
                             NormKind norm) {
  require_same_shape(p_a, p_b, "noise_robust_loss");
  require_same_shape(p_a, y_corrected, "noise_robust_loss");
  const std::size_t n = p_a.pixels.size();
  if (dp_a.size() != n || dp_b.size() != n)
    throw std::runtime_error("noise_robust_loss: gradient size");

  if (norm == NormKind::Euclidean) {
    double sa = 0.0, sb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!y_corrected.pixels[i]) continue;
      sa += (p_a.pixels[i] - 1.0) * (p_a.pixels[i] - 1.0);
      sb += (p_b.pixels[i] - 1.0) * (p_b.pixels[i] - 1.0);
    }
    double ia = sa > 0.0 ? 1.0 / std::sqrt(sa) : 0.0;
    double ib = sb > 0.0 ? 1.0 / std::sqrt(sb) : 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!y_corrected.pixels[i]) continue;
      dp_a[i] += weight * ia * (p_a.pixels[i] - 1.0);
      dp_b[i] += weight * ib * (p_b.pixels[i] - 1.0);
    }
    return;
  }
  double scale = weight * 2.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!y_corrected.pixels[i]) continue;
    dp_a[i] += scale * (p_a.pixels[i] - 1.0);
    dp_b[i] += scale * (p_b.pixels[i] - 1.0);
  }
}

LossBreakdown combined_pld_loss(double l_seg, double l_c, double l_r, double s,
                                const TrainingConfig& config) {
  if (!(s >= 0.0 && s <= 1.0))
    throw std::runtime_error("combined_pld_loss: confidence outside [0,1]");
  LossBreakdown out;
  out.l_seg = l_seg;
  out.l_c = l_c;
  out.l_r = config.use_noise_robust ? l_r : 0.0;
  if (config.use_confidence_gate) {
    out.seg_active = s >= config.confidence_threshold;
    out.total = (out.seg_active ? s * l_seg : 0.0) + out.l_r +
                config.consistency_weight * l_c;
  } else {
    out.seg_active = true;
    out.total = l_seg + out.l_r + config.consistency_weight * l_c;
  }
  return out;
}

}  // namespace imfseg
