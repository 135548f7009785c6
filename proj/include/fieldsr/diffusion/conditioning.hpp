// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>

#include "fieldsr/core/hash.hpp"
#include "fieldsr/core/image.hpp"
#include "fieldsr/core/rng.hpp"
#include "fieldsr/diffusion/ops.hpp"
#include "fieldsr/diffusion/schedule.hpp"

namespace fieldsr {

// Side information for the denoiser: an LR image at 1/4 the spatial
// resolution of the target latent, lightly noised, plus a class token
// (0 = unconditional).
struct Conditioning {
  Image lr_image;
  int lr_noise_level = 0;  // timestep index the stored lr_image was noised to
  int token = 0;

  uint64_t content_hash() const {
    uint64_t h = hash_image(lr_image);
    h = hash_u64(static_cast<uint64_t>(lr_noise_level), h);
    h = hash_u64(static_cast<uint64_t>(token), h);
    return h;
  }
};

inline int default_lr_noise_level(const NoiseSchedule& s) {
  return static_cast<int>(std::lround(0.05 * s.T));
}

// Noising happens here, once, with the caller's rng; denoiser forward passes
// stay deterministic functions of the finished Conditioning.
inline Conditioning make_conditioning(const NoiseSchedule& s, const Image& lr_clean,
                                      int lr_noise_level, int token, Rng& rng) {
  s.check_t(lr_noise_level, "make_conditioning");
  Conditioning c;
  c.lr_noise_level = lr_noise_level;
  c.token = token;
  Image eps = rng.normal_image(lr_clean.channels(), lr_clean.height(), lr_clean.width());
  c.lr_image = forward_noise(s, lr_clean, eps, lr_noise_level);
  return c;
}

inline void require_cond_matches(const Conditioning& cond, const Image& z_t, const char* where) {
  if (cond.lr_image.empty()) return;  // unconditional backends ignore the image
  if (cond.lr_image.channels() != z_t.channels() || cond.lr_image.height() * 4 != z_t.height() ||
      cond.lr_image.width() * 4 != z_t.width())
    throw ShapeError(std::string(where) + ": conditioning " + cond.lr_image.shape_str() +
                     " is not 1/4 the spatial resolution of target " + z_t.shape_str());
}

}  // namespace fieldsr
