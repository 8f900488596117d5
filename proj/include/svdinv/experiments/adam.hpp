#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

namespace svdinv::experiments {

struct AdamConfig {
  double lr = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam over named real scalars.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {
    if (!(cfg_.lr >= 0)) throw std::invalid_argument("learning rate must be >= 0");
  }

  void step(std::map<std::string, double>& params, const std::map<std::string, double>& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double c2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (auto& [name, value] : params) {
      auto it = grads.find(name);
      const double g = it == grads.end() ? 0.0 : it->second;
      double& m = m_[name];
      double& v = v_[name];
      m = cfg_.beta1 * m + (1 - cfg_.beta1) * g;
      v = cfg_.beta2 * v + (1 - cfg_.beta2) * g * g;
      if (cfg_.lr == 0) continue;
      value -= cfg_.lr * (m / c1) / (std::sqrt(v / c2) + cfg_.eps);
    }
  }

  int steps() const { return t_; }

 private:
  AdamConfig cfg_;
  int t_ = 0;
  std::map<std::string, double> m_, v_;
};

}  // namespace svdinv::experiments
