#pragma once

#include <cstdint>
#include <vector>

namespace scgan {

struct AdamConfig {
  double learning_rate = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. Moment buffers are sized lazily on the first step.
class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  void step(std::vector<double>& params, const std::vector<double>& grads);

  [[nodiscard]] const AdamConfig& config() const { return cfg_; }
  [[nodiscard]] std::int64_t steps() const { return t_; }
  [[nodiscard]] const std::vector<double>& first_moment() const { return m_; }
  [[nodiscard]] const std::vector<double>& second_moment() const { return v_; }

  void restore(AdamConfig cfg, std::int64_t steps, std::vector<double> m, std::vector<double> v);

 private:
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

}  // namespace scgan
