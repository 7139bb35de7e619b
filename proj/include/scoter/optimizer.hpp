#pragma once

// SPDX-License-Identifier: Apache-2.0

// Adam with decoupled weight decay (AdamW). Moment buffers are keyed by
// parameter identity, so one optimizer instance can own a whole model.

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "scoter/tensor.hpp"

namespace scoter::numerics {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 5e-5;
  // false = decoupled (AdamW); true = decay folded into the gradient.
  bool coupled_decay = false;
};

class Adam {
 public:
  explicit Adam(AdamConfig config) : config_(config) {}

  const AdamConfig& config() const { return config_; }
  std::int64_t step_count() const { return step_; }

  /// One update over all params. Gradients must be populated (missing grad
  /// means the parameter did not participate; it still receives decay).
  /// NaN/Inf in any gradient throws NumericError. Grads are zeroed after use.
  void step(std::vector<Tensor>& params);

 private:
  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
  };
  AdamConfig config_;
  std::int64_t step_ = 0;
  std::unordered_map<const void*, Moments> moments_;
};

}  // namespace scoter::numerics
