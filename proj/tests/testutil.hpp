#pragma once

// SPDX-License-Identifier: Apache-2.0

// Shared oracles for the unit and acceptance suites. Everything here is
// deliberately independent of the library's forward/backward code paths:
// finite differences, brute-force loops, closed forms.

#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "scoter/tensor.hpp"

namespace testutil {

inline double rel_err(double a, double b, double floor = 1e-2) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Central finite differences through an arbitrary scalar loss. `loss_fn`
/// must rebuild the forward pass from scratch on every call so that the
/// perturbed parameter value is actually consumed.
inline std::vector<double> fd_grad(scoter::numerics::Tensor& param,
                                   const std::function<double()>& loss_fn,
                                   double h = 1e-5) {
  auto& data = param.mutable_data();
  std::vector<double> g(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double keep = data[i];
    data[i] = keep + h;
    const double up = loss_fn();
    data[i] = keep - h;
    const double down = loss_fn();
    data[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::string worst;  // "param[i]" of the worst entry
};

/// Compares analytic gradients (already accumulated in the params) against
/// finite differences of `loss_fn`. Caller runs backward() beforehand.
inline GradCheckResult compare_grads(
    std::vector<std::pair<std::string, scoter::numerics::Tensor>>& params,
    const std::function<double()>& loss_fn, double h = 1e-5) {
  GradCheckResult res;
  for (auto& [name, p] : params) {
    std::vector<double> analytic =
        p.has_grad() ? p.grad() : std::vector<double>(p.size(), 0.0);
    std::vector<double> numeric = fd_grad(p, loss_fn, h);
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      const double e = rel_err(analytic[i], numeric[i]);
      ++res.checked;
      if (e > res.max_rel_err) {
        res.max_rel_err = e;
        res.worst = name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return res;
}

}  // namespace testutil
