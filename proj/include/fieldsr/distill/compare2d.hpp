// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "fieldsr/diffusion/sampler.hpp"
#include "fieldsr/distill/rsd.hpp"
#include "fieldsr/distill/sds.hpp"
#include "fieldsr/metrics/quality.hpp"

namespace fieldsr {

struct CompareRow {
  std::string method;
  uint64_t seed = 0;
  double sharpness = 0.0;
  double lr_consistency = 0.0;
};

struct CompareResult {
  std::map<std::string, Image> images;  // per requested method
  std::vector<CompareRow> rows;

  static std::string csv_header() { return "method,seed,sharpness,lr_consistency"; }
};

inline const std::vector<std::string>& compare_method_names() {
  static const std::vector<std::string> names = {"ancestral", "sds", "rsd"};
  return names;
}

// Side-by-side 4x upscaling of one LR image by ancestral sampling, score
// distillation, and residual optimization, all sharing one denoiser and
// schedule. Emits the raw decoded images plus the two proxy metrics.
inline CompareResult upscale2d_compare(const Image& image_lr,
                                       const std::vector<std::string>& methods,
                                       const DenoiserModel& denoiser, const Codec& codec,
                                       const NoiseSchedule& s, const DistillConfig& cfg) {
  cfg.validate(s);
  for (const auto& m : methods) {
    bool known = false;
    for (const auto& k : compare_method_names()) known = known || (m == k);
    if (!known) throw ParameterError("upscale2d_compare: unknown method '" + m + "'");
  }

  const int level = cfg.lr_noise_level < 0 ? default_lr_noise_level(s) : cfg.lr_noise_level;
  CompareResult res;
  for (const auto& m : methods) {
    Image out(1, 1, 1);
    if (m == "ancestral") {
      // all three methods draw the identical conditioning realization
      Rng crng(derive_seed(cfg.seed, {kStreamConditioning}));
      Conditioning cond = make_conditioning(s, image_lr, level, cfg.token, crng);
      Image z = ancestral_sample(denoiser, cond, image_lr.channels(), image_lr.height() * 4,
                                 image_lr.width() * 4, s, cfg.seed);
      out = codec.decode(z);
    } else if (m == "sds") {
      Rng crng(derive_seed(cfg.seed, {kStreamConditioning}));
      Conditioning cond = make_conditioning(s, image_lr, level, cfg.token, crng);
      Image z0 = codec.encode(upsample4_bicubic(image_lr));
      Rng rng(derive_seed(cfg.seed, {kStreamSds}));
      Image z = sds_optimize(z0, denoiser, cond, s, cfg, rng);
      out = codec.decode(z);
    } else {  // rsd
      out = rsd_upscale(upsample4_bicubic(image_lr), image_lr, denoiser, codec, s, cfg);
    }
    CompareRow row;
    row.method = m;
    row.seed = cfg.seed;
    row.sharpness = sharpness(out);
    row.lr_consistency = lr_consistency(out, image_lr);
    res.rows.push_back(row);
    res.images.emplace(m, std::move(out));
  }
  return res;
}

}  // namespace fieldsr
