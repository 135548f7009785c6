// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>

#include "fieldsr/core/adam.hpp"
#include "fieldsr/core/errors.hpp"
#include "fieldsr/diffusion/conditioning.hpp"
#include "fieldsr/diffusion/schedule.hpp"

namespace fieldsr {

enum class LossNorm { L1, L2 };

inline std::string loss_norm_name(LossNorm n) { return n == LossNorm::L1 ? "l1" : "l2"; }

inline LossNorm loss_norm_from_name(const std::string& s) {
  if (s == "l1") return LossNorm::L1;
  if (s == "l2") return LossNorm::L2;
  throw ParameterError("unknown loss norm: " + s);
}

// Knobs for residual-based upscaling and the plain score-distillation
// baseline. Timestep bounds of -1 resolve against the schedule.
struct DistillConfig {
  double learning_rate = 1e-2;  // constant-rate gradient descent on the residuals
  LossNorm loss_norm = LossNorm::L1;
  bool detach_prediction = true;  // gradient through the renoised branch only
  bool shared_eps = true;         // one eps per iteration, reused for all three roles
  int steps = 512;
  int t_min = -1;  // -1 -> max(1, round(0.02 T))
  int t_max = -1;  // -1 -> min(T-1, round(0.98 T))
  bool use_adam = false;  // optional adaptive update instead of plain GD
  AdamConfig adam;
  int token = 1;
  int lr_noise_level = -1;  // conditioning noise level, -1 -> schedule default
  uint64_t seed = 0;

  int resolved_t_min(const NoiseSchedule& s) const {
    const int v = t_min < 0 ? static_cast<int>(std::lround(0.02 * s.T)) : t_min;
    return std::max(1, v);
  }
  int resolved_t_max(const NoiseSchedule& s) const {
    const int v = t_max < 0 ? static_cast<int>(std::lround(0.98 * s.T)) : t_max;
    return std::min(s.T - 1, v);
  }

  void validate(const NoiseSchedule& s) const {
    if (!(learning_rate > 0.0)) throw ParameterError("DistillConfig: learning_rate must be > 0");
    if (steps < 0) throw ParameterError("DistillConfig: negative step budget");
    const int lo = resolved_t_min(s), hi = resolved_t_max(s);
    if (!(1 <= lo && lo < hi && hi < s.T))
      throw ParameterError("DistillConfig: need 1 <= t_min < t_max < T");
  }
};

// t = round(t_max - (t_max - t_min) * iter / max_iter), the linearly
// decreasing annealing of the optimization timestep.
inline int linear_time_schedule(int iter, int max_iter, int t_min, int t_max) {
  if (t_min >= t_max) throw ParameterError("linear_time_schedule: t_min must be < t_max");
  if (iter < 0 || iter > max_iter) throw ParameterError("linear_time_schedule: iter outside range");
  if (max_iter == 0) return t_max;
  const double frac = static_cast<double>(iter) / static_cast<double>(max_iter);
  return static_cast<int>(std::lround(t_max - (t_max - t_min) * frac));
}

}  // namespace fieldsr
