// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "fieldsr/core/errors.hpp"

namespace fieldsr {

// Adam with bias correction. Dense apply: every entry is updated each step,
// so results are independent of gradient sparsity patterns.
struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct Adam {
  AdamConfig cfg;
  std::vector<double> m;
  std::vector<double> v;
  int64_t step = 0;

  Adam() = default;
  explicit Adam(AdamConfig c) : cfg(c) {}

  void reset(size_t n) {
    m.assign(n, 0.0);
    v.assign(n, 0.0);
    step = 0;
  }

  void apply(std::vector<double>& params, const std::vector<double>& grad) {
    if (m.size() != params.size()) reset(params.size());
    if (grad.size() != params.size())
      throw ShapeError("Adam::apply: gradient size does not match parameters");
    ++step;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    for (size_t i = 0; i < params.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      params[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
};

}  // namespace fieldsr
