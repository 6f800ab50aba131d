#include "imfseg/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace imfseg {

Adam::Adam(std::size_t n_params, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps),
      m_(n_params, 0.0), v_(n_params, 0.0) {
  if (!(lr > 0.0)) throw std::runtime_error("adam: learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
    throw std::runtime_error("adam: betas must lie in [0, 1)");
}

void Adam::step(std::vector<double>& params, const std::vector<double>& grad,
                double lr_scale) {
  if (params.size() != m_.size() || grad.size() != m_.size())
    throw std::runtime_error("adam: parameter/gradient size mismatch");
  ++t_;
  double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  double rate = lr_ * lr_scale;
  for (std::size_t i = 0; i < params.size(); ++i) {
    double g = grad[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g * g;
    double mhat = m_[i] / c1;
    double vhat = v_[i] / c2;
    params[i] -= rate * mhat / (std::sqrt(vhat) + eps_);
  }
}

void Adam::restore(std::vector<double> m, std::vector<double> v, std::uint64_t t) {
  if (m.size() != m_.size() || v.size() != v_.size())
    throw std::runtime_error("adam: restored moment size mismatch");
  m_ = std::move(m);
  v_ = std::move(v);
  t_ = t;
}

double lr_schedule_scale(LrSchedule schedule, int epoch, int total_epochs) {
  if (schedule == LrSchedule::Constant) return 1.0;
  if (total_epochs <= 1) return 1.0;
  double frac = static_cast<double>(epoch) / static_cast<double>(total_epochs);
  return std::max(1.0 - frac, 1.0 / static_cast<double>(total_epochs));
}

}  // namespace imfseg
