// SPDX-License-Identifier: Apache-2.0

#include "scoter/optimizer.hpp"

#include <cmath>

#include "scoter/common.hpp"

namespace scoter::numerics {

void Adam::step(std::vector<Tensor>& params) {
  ++step_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));

  for (Tensor& p : params) {
    auto& theta = p.mutable_data();
    auto& mom = moments_[static_cast<const void*>(p.handle().get())];
    if (mom.m.size() != theta.size()) {
      mom.m.assign(theta.size(), 0.0);
      mom.v.assign(theta.size(), 0.0);
    }
    const bool has_grad = p.has_grad();
    const std::vector<double>* g = has_grad ? &p.grad() : nullptr;
    if (g) {
      for (double x : *g) {
        if (!std::isfinite(x)) {
          throw NumericError("adam: poisoned gradient (NaN/Inf)");
        }
      }
    }
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double theta_old = theta[i];
      double gi = g ? (*g)[i] : 0.0;
      if (config_.coupled_decay) gi += config_.weight_decay * theta_old;
      mom.m[i] = config_.beta1 * mom.m[i] + (1.0 - config_.beta1) * gi;
      mom.v[i] = config_.beta2 * mom.v[i] + (1.0 - config_.beta2) * gi * gi;
      const double mhat = mom.m[i] / bc1;
      const double vhat = mom.v[i] / bc2;
      theta[i] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
      if (!config_.coupled_decay) {
        theta[i] -= config_.lr * config_.weight_decay * theta_old;
      }
    }
    p.zero_grad();
  }
}

}  // namespace scoter::numerics
