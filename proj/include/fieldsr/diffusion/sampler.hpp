// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "fieldsr/core/parallel.hpp"
#include "fieldsr/core/rng.hpp"
#include "fieldsr/denoiser/model.hpp"
#include "fieldsr/diffusion/ops.hpp"

namespace fieldsr {

// Ancestral sampling: start from pure Gaussian noise as the most-noised
// state (index T-1), walk reverse_step down to state 0. The final
// transition to data is taken at the posterior mean (no injected noise).
inline Image ancestral_sample(const DenoiserModel& denoiser, const Conditioning& cond,
                              int channels, int height, int width, const NoiseSchedule& s,
                              uint64_t seed) {
  Rng rng(derive_seed(seed, {kStreamSampler}));
  Image z = rng.normal_image(channels, height, width);
  for (int t = s.T - 1; t >= 1; --t) {
    Image eps_pred = denoiser.predict_eps(z, cond, t);
    if (t > 1) {
      Image noise = rng.normal_image(channels, height, width);
      z = reverse_step(s, z, eps_pred, t, noise);
    } else {
      z = reverse_step_mean(s, z, eps_pred, t);
    }
  }
  return z;
}

// Independent trajectories under per-trajectory derived seeds; results do
// not depend on the thread cap.
inline std::vector<Image> ancestral_sample_many(const DenoiserModel& denoiser,
                                                const Conditioning& cond, int n, int channels,
                                                int height, int width, const NoiseSchedule& s,
                                                uint64_t seed) {
  std::vector<Image> out(static_cast<size_t>(n), Image(1, 1, 1));
  parallel_for(static_cast<size_t>(n), [&](size_t i) {
    out[i] = ancestral_sample(denoiser, cond, channels, height, width, s,
                              derive_seed(seed, {kStreamSampler, static_cast<uint64_t>(i)}));
  });
  return out;
}

}  // namespace fieldsr
