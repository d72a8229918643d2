#include "scgan/optim.hpp"

#include <cmath>

#include "scgan/common.hpp"

namespace scgan {

void Adam::step(std::vector<double>& params, const std::vector<double>& grads) {
  if (params.size() != grads.size()) throw ValidationError("Adam: parameter and gradient sizes differ");
  if (m_.empty()) {
    m_.assign(params.size(), 0.0);
    v_.assign(params.size(), 0.0);
  }
  if (m_.size() != params.size()) throw ValidationError("Adam: optimizer state does not match the model");
  ++t_;
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const double step_size = cfg_.learning_rate / c1;
  const double sqrt_c2 = std::sqrt(c2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    m_[i] = b1 * m_[i] + (1.0 - b1) * g;
    v_[i] = b2 * v_[i] + (1.0 - b2) * g * g;
    params[i] -= step_size * m_[i] / (std::sqrt(v_[i]) / sqrt_c2 + cfg_.epsilon);
  }
}

void Adam::restore(AdamConfig cfg, std::int64_t steps, std::vector<double> m, std::vector<double> v) {
  if (m.size() != v.size()) throw ValidationError("Adam: moment buffers differ in size");
  cfg_ = cfg;
  t_ = steps;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace scgan
