#pragma once

// Adam with bias correction. Moment vectors live in the optimizer so a
// checkpoint can remove them (inference) or carry them (resume).

#include <cstdint>
#include <vector>

#include "imfseg/config.hpp"

namespace imfseg {

class Adam {
 public:
  Adam(std::size_t n_params, double lr, double beta1, double beta2, double eps = 1e-8);

  // Applies one update in place. grad.size() must equal n_params.
  // lr_scale multiplies the base rate (schedule hook), 1 = nominal.
  void step(std::vector<double>& params, const std::vector<double>& grad,
            double lr_scale = 1.0);

  std::uint64_t steps_taken() const { return t_; }
  const std::vector<double>& m() const { return m_; }
  const std::vector<double>& v() const { return v_; }

  // Restores moments and step count from a checkpoint. Sizes must match.
  void restore(std::vector<double> m, std::vector<double> v, std::uint64_t t);

 private:
  double lr_, beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
  std::vector<double> m_, v_;
};

// Per-epoch learning-rate multiplier. Constant returns 1; LinearDecay ramps
// from 1 at epoch 0 to 1/total at the final epoch (never reaches 0).
double lr_schedule_scale(LrSchedule schedule, int epoch, int total_epochs);

}  // namespace imfseg
