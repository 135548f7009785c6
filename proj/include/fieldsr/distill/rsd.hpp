// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <utility>

#include "fieldsr/core/adam.hpp"
#include "fieldsr/core/rng.hpp"
#include "fieldsr/denoiser/model.hpp"
#include "fieldsr/diffusion/ops.hpp"
#include "fieldsr/distill/config.hpp"

namespace fieldsr {

// encode/decode boundary between image space and latent space. Identity at
// this scale; the interface keeps the boundary explicit for richer codecs.
class Codec {
 public:
  virtual ~Codec() = default;
  virtual Image encode(const Image& x) const = 0;
  virtual Image decode(const Image& z) const = 0;
};

class IdentityCodec : public Codec {
 public:
  Image encode(const Image& x) const override { return x; }
  Image decode(const Image& z) const override { return z; }
};

// Learnable latent residuals h on top of a frozen base latent, plus the
// annealing window and step budget they are optimized under.
struct ResidualState {
  Image h_theta;
  int step = 0;
  int t_min = 1;
  int t_max = 2;
  int max_steps = 0;
  Adam adam;  // engaged only when the config asks for the adaptive update

  static ResidualState init(const Image& target, const NoiseSchedule& s,
                            const DistillConfig& cfg) {
    cfg.validate(s);
    ResidualState st;
    st.h_theta = Image::zeros_like(target);
    st.t_min = cfg.resolved_t_min(s);
    st.t_max = cfg.resolved_t_max(s);
    st.max_steps = cfg.steps;
    st.adam = Adam(cfg.adam);
    return st;
  }
};

// One optimization step on the residuals:
//   refined latent   z'_0   = z0 + h
//   renoised pair    z'_t, z'_{t-1} from one shared eps
//   prediction       zhat_{t-1} = reverse_step(z'_t, eps_pred, t, eps)
//   loss             || z'_{t-1} - zhat_{t-1} || under the configured norm
// With the prediction branch detached, the loss gradient w.r.t. h is
// sqrt(abar_{t-1}) * u with u the loss derivative at the difference; with
// it attached, the direct terms of the two branches cancel exactly and the
// denoiser Jacobian term remains.
inline std::pair<double, int> rsd_step(ResidualState& state, const Image& z0,
                                       const DenoiserModel& denoiser, const Conditioning& cond,
                                       const NoiseSchedule& s, Rng& rng,
                                       const DistillConfig& cfg) {
  if (state.step >= state.max_steps)
    throw StateError("rsd_step: step budget exhausted (" + std::to_string(state.max_steps) + ")");
  require_same_shape(state.h_theta, z0, "rsd_step");

  const int t = linear_time_schedule(state.step, state.max_steps, state.t_min, state.t_max);
  Image eps = rng.normal_image(z0.channels(), z0.height(), z0.width());

  Image z0p = z0 + state.h_theta;
  Image z_t = forward_noise(s, z0p, eps, t);
  Image z_tm1 =
      cfg.shared_eps
          ? forward_noise(s, z0p, eps, t - 1)
          : forward_noise(s, z0p, rng.normal_image(z0.channels(), z0.height(), z0.width()), t - 1);
  Image eps_pred = denoiser.predict_eps(z_t, cond, t);
  Image zhat_tm1 =
      cfg.shared_eps
          ? reverse_step(s, z_t, eps_pred, t, eps)
          : reverse_step(s, z_t, eps_pred, t,
                         rng.normal_image(z0.channels(), z0.height(), z0.width()));

  double loss = 0.0;
  Image u = Image::zeros_like(z0);  // d loss / d difference
  for (size_t i = 0; i < u.size(); ++i) {
    const double d = z_tm1[i] - zhat_tm1[i];
    if (cfg.loss_norm == LossNorm::L1) {
      loss += std::abs(d);
      u[i] = (d > 0.0) - (d < 0.0);  // subgradient 0 at ties
    } else {
      loss += d * d;
      u[i] = 2.0 * d;
    }
  }

  const double root_abar_prev = s.sqrt_alpha_bar(t - 1);
  Image grad = Image::zeros_like(z0);
  if (cfg.detach_prediction) {
    for (size_t i = 0; i < grad.size(); ++i) grad[i] = root_abar_prev * u[i];
  } else {
    // surviving term after the direct-branch cancellation
    const double c_t = (1.0 - s.alpha[t]) / s.sqrt_one_minus_alpha_bar(t);
    Image jvp = denoiser.input_vjp(z_t, cond, t, u);
    for (size_t i = 0; i < grad.size(); ++i) grad[i] = root_abar_prev * c_t * jvp[i];
  }

  if (cfg.use_adam) {
    std::vector<double> p(state.h_theta.data(), state.h_theta.data() + state.h_theta.size());
    std::vector<double> g(grad.data(), grad.data() + grad.size());
    state.adam.cfg.lr = cfg.learning_rate;
    state.adam.apply(p, g);
    for (size_t i = 0; i < p.size(); ++i) state.h_theta[i] = p[i];
  } else {
    for (size_t i = 0; i < grad.size(); ++i) state.h_theta[i] -= cfg.learning_rate * grad[i];
  }
  ++state.step;
  return {loss, t};
}

// Residual optimization against a caller-built conditioning. Callers that
// refine the same view repeatedly (the cycle pipeline) construct one
// Conditioning per view up front and thread it through every pass; step
// noise comes from step_seed alone.
inline Image rsd_upscale_with(const Image& x0_lr_render, const Conditioning& cond,
                              const DenoiserModel& denoiser, const Codec& codec,
                              const NoiseSchedule& s, const DistillConfig& cfg,
                              uint64_t step_seed) {
  cfg.validate(s);
  Image z0 = codec.encode(x0_lr_render);
  require_cond_matches(cond, z0, "rsd_upscale");
  ResidualState state = ResidualState::init(z0, s, cfg);
  Rng rng(step_seed);
  for (int i = 0; i < cfg.steps; ++i) rsd_step(state, z0, denoiser, cond, s, rng, cfg);
  return codec.decode(z0 + state.h_theta);
}

// Full residual-optimization upscaler: encode the 4x-interpolated render,
// run the step budget, decode base + residuals. Deterministic under
// cfg.seed; conditioning is built once from the original LR image.
inline Image rsd_upscale(const Image& x0_lr_render, const Image& lr_cond,
                         const DenoiserModel& denoiser, const Codec& codec,
                         const NoiseSchedule& s, const DistillConfig& cfg) {
  cfg.validate(s);
  if (lr_cond.height() * 4 != x0_lr_render.height() || lr_cond.width() * 4 != x0_lr_render.width())
    throw ShapeError("rsd_upscale: conditioning " + lr_cond.shape_str() +
                     " is not 1/4 the resolution of the render " + x0_lr_render.shape_str());
  Rng crng(derive_seed(cfg.seed, {kStreamConditioning}));
  const int level = cfg.lr_noise_level < 0 ? default_lr_noise_level(s) : cfg.lr_noise_level;
  Conditioning cond = make_conditioning(s, lr_cond, level, cfg.token, crng);
  return rsd_upscale_with(x0_lr_render, cond, denoiser, codec, s, cfg,
                          derive_seed(cfg.seed, {kStreamRsd}));
}

}  // namespace fieldsr
