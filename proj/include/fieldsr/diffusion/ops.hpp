// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>

#include "fieldsr/core/image.hpp"
#include "fieldsr/diffusion/schedule.hpp"

namespace fieldsr {

// z_t = sqrt(alpha_bar_t) z0 + sqrt(1 - alpha_bar_t) eps
inline Image forward_noise(const NoiseSchedule& s, const Image& z0, const Image& eps, int t) {
  s.check_t(t, "forward_noise");
  require_same_shape(z0, eps, "forward_noise");
  const double a = s.sqrt_alpha_bar(t);
  const double b = s.sqrt_one_minus_alpha_bar(t);
  Image out = Image::zeros_like(z0);
  for (size_t i = 0; i < z0.size(); ++i) out[i] = a * z0[i] + b * eps[i];
  return out;
}

// z0_hat = (z_t - sqrt(1 - alpha_bar_t) eps_pred) / sqrt(alpha_bar_t)
inline Image reconstruct_z0(const NoiseSchedule& s, const Image& z_t, const Image& eps_pred,
                            int t) {
  s.check_t(t, "reconstruct_z0");
  require_same_shape(z_t, eps_pred, "reconstruct_z0");
  const double inv_a = 1.0 / s.sqrt_alpha_bar(t);
  const double b = s.sqrt_one_minus_alpha_bar(t);
  Image out = Image::zeros_like(z_t);
  for (size_t i = 0; i < z_t.size(); ++i) out[i] = inv_a * (z_t[i] - b * eps_pred[i]);
  return out;
}

// One reverse transition from state t to state t-1:
//   z_{t-1} = (z_t - (1 - alpha_t)/sqrt(1 - alpha_bar_t) eps_pred) / sqrt(alpha_t)
//             + sigma_t * noise
// noise must be standard normal (or zero for the deterministic mean).
inline Image reverse_step(const NoiseSchedule& s, const Image& z_t, const Image& eps_pred, int t,
                          const Image& noise) {
  s.check_t(t, "reverse_step");
  if (t < 1) throw ParameterError("reverse_step: t must be >= 1 (result is state t-1)");
  require_same_shape(z_t, eps_pred, "reverse_step");
  require_same_shape(z_t, noise, "reverse_step");
  const double inv_sqrt_alpha = 1.0 / std::sqrt(s.alpha[t]);
  const double coef = (1.0 - s.alpha[t]) / s.sqrt_one_minus_alpha_bar(t);
  const double sig = s.sigma[t];
  Image out = Image::zeros_like(z_t);
  for (size_t i = 0; i < z_t.size(); ++i)
    out[i] = inv_sqrt_alpha * (z_t[i] - coef * eps_pred[i]) + sig * noise[i];
  return out;
}

inline Image reverse_step_mean(const NoiseSchedule& s, const Image& z_t, const Image& eps_pred,
                               int t) {
  Image zero = Image::zeros_like(z_t);
  return reverse_step(s, z_t, eps_pred, t, zero);
}

}  // namespace fieldsr
