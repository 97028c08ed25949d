#pragma once

#include <vector>

#include "s2pec/tensor.hpp"

namespace s2pec {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig cfg);

  // Applies one update from the grads currently stored on the parameters.
  void step();
  void zero_grad();
  void set_lr(double lr) { cfg_.lr = lr; }
  double lr() const { return cfg_.lr; }
  int64_t steps() const { return t_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  AdamConfig cfg_;
  int64_t t_ = 0;
};

// Per-epoch cosine annealing without restarts:
// lr(e) = floor + (base - floor) * (1 + cos(pi * e / (epochs - 1))) / 2,
// so lr(0) == base and lr(epochs - 1) == floor.
double cosine_annealing_lr(double base_lr, double floor_lr, int epoch, int epochs);

}  // namespace s2pec
