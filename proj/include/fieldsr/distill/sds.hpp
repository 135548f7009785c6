// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>

#include "fieldsr/core/rng.hpp"
#include "fieldsr/denoiser/model.hpp"
#include "fieldsr/diffusion/ops.hpp"
#include "fieldsr/distill/config.hpp"

namespace fieldsr {

// Score-distillation gradient for an identity image parametrization:
//   grad = gamma[t] * (eps_pred(z_t, y, t) - eps),  z_t = forward_noise(z0, t, eps).
// The denoiser branch carries no gradient.
inline Image sds_grad(const Image& z0, const DenoiserModel& denoiser, const Conditioning& cond,
                      int t, const Image& eps, const NoiseSchedule& s) {
  s.check_t(t, "sds_grad");
  if (t < 1) throw ParameterError("sds_grad: t must be >= 1");
  require_same_shape(z0, eps, "sds_grad");
  Image z_t = forward_noise(s, z0, eps, t);
  Image pred = denoiser.predict_eps(z_t, cond, t);
  Image out = Image::zeros_like(z0);
  const double w = s.gamma[t];
  for (size_t i = 0; i < out.size(); ++i) out[i] = w * (pred[i] - eps[i]);
  return out;
}

// The same gradient written as a difference of clean-latent residuals:
//   grad = gamma[t] * sqrt(abar_t) / sqrt(1 - abar_t) * (z0 - z0_hat),
// with z0_hat reconstructed from the same (z_t, eps_pred).
inline Image sds_residual_form(const Image& z0, const Image& z0_hat, int t,
                               const NoiseSchedule& s) {
  s.check_t(t, "sds_residual_form");
  require_same_shape(z0, z0_hat, "sds_residual_form");
  const double c = s.gamma[t] * s.sqrt_alpha_bar(t) / s.sqrt_one_minus_alpha_bar(t);
  Image out = Image::zeros_like(z0);
  for (size_t i = 0; i < out.size(); ++i) out[i] = c * (z0[i] - z0_hat[i]);
  return out;
}

// Plain gradient descent on z0 under sds_grad with uniformly drawn
// timesteps, the standard use of the objective. learning_rate_final < 0
// keeps the rate constant; otherwise it decays linearly to that value.
inline Image sds_optimize(Image z0, const DenoiserModel& denoiser, const Conditioning& cond,
                          const NoiseSchedule& s, const DistillConfig& cfg, Rng& rng,
                          double learning_rate_final = -1.0) {
  cfg.validate(s);
  const int lo = cfg.resolved_t_min(s), hi = cfg.resolved_t_max(s);
  for (int step = 0; step < cfg.steps; ++step) {
    const int t = static_cast<int>(rng.uniform_int(lo, hi));
    Image eps = rng.normal_image(z0.channels(), z0.height(), z0.width());
    Image g = sds_grad(z0, denoiser, cond, t, eps, s);
    double lr = cfg.learning_rate;
    if (learning_rate_final >= 0.0 && cfg.steps > 1)
      lr += (learning_rate_final - cfg.learning_rate) * step / (cfg.steps - 1.0);
    for (size_t i = 0; i < z0.size(); ++i) z0[i] -= lr * g[i];
  }
  return z0;
}

}  // namespace fieldsr
