// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "fieldsr/core/errors.hpp"

namespace fieldsr {

enum class ScheduleKind { Linear };

inline std::string schedule_kind_name(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::Linear:
      return "linear";
  }
  return "unknown";
}

inline ScheduleKind schedule_kind_from_name(const std::string& name) {
  if (name == "linear") return ScheduleKind::Linear;
  throw ParameterError("unknown schedule kind: " + name);
}

// Per-timestep diffusion coefficients, indexed t in [0, T).
// alpha_bar[t] is the cumulative product of alpha up to and including t, so
// index t corresponds to the t+1'th noising step away from clean data.
struct NoiseSchedule {
  int T = 0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;
  std::vector<double> sigma;  // reverse-step noise std, sqrt(beta[t])
  std::vector<double> gamma;  // loss weighting, all ones

  // Construction parameters, kept for serialization and hashing.
  double beta_start = 0.0;
  double beta_end = 0.0;
  ScheduleKind kind = ScheduleKind::Linear;

  double sqrt_alpha_bar(int t) const { return std::sqrt(alpha_bar[t]); }
  double sqrt_one_minus_alpha_bar(int t) const { return std::sqrt(1.0 - alpha_bar[t]); }

  void check_t(int t, const char* where) const {
    if (t < 0 || t >= T)
      throw ParameterError(std::string(where) + ": t=" + std::to_string(t) +
                           " outside [0, " + std::to_string(T) + ")");
  }

  // Human-readable config block; parse(to_config()) reproduces the schedule.
  std::string to_config() const {
    std::ostringstream os;
    os.precision(17);
    os << "schedule.T = " << T << "\n"
       << "schedule.beta_start = " << beta_start << "\n"
       << "schedule.beta_end = " << beta_end << "\n"
       << "schedule.kind = " << schedule_kind_name(kind) << "\n";
    return os.str();
  }

  // FNV-1a over the canonical config block. Used by checkpoints to refuse
  // mixing models trained under a different schedule.
  uint64_t hash() const {
    const std::string repr = to_config();
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : repr) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    return h;
  }
};

inline NoiseSchedule make_schedule(int T, double beta_start, double beta_end,
                                   ScheduleKind kind = ScheduleKind::Linear) {
  if (T < 2) throw ParameterError("make_schedule: T must be >= 2");
  if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
    throw ParameterError("make_schedule: need 0 < beta_start <= beta_end < 1");

  NoiseSchedule s;
  s.T = T;
  s.beta_start = beta_start;
  s.beta_end = beta_end;
  s.kind = kind;
  s.beta.resize(T);
  s.alpha.resize(T);
  s.alpha_bar.resize(T);
  s.sigma.resize(T);
  s.gamma.assign(T, 1.0);

  for (int t = 0; t < T; ++t)
    s.beta[t] = beta_start + (beta_end - beta_start) * t / static_cast<double>(T - 1);

  double prod = 1.0;
  for (int t = 0; t < T; ++t) {
    s.alpha[t] = 1.0 - s.beta[t];
    prod *= s.alpha[t];
    s.alpha_bar[t] = prod;
    s.sigma[t] = std::sqrt(s.beta[t]);
  }
  return s;
}

// Parses the block emitted by NoiseSchedule::to_config (and the same keys
// inside a larger config file).
inline NoiseSchedule parse_schedule_config(const std::string& text) {
  int T = -1;
  double bs = -1.0, be = -1.0;
  std::string kind_name;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string key, eq;
    if (!(ls >> key >> eq) || eq != "=") continue;
    if (key == "schedule.T") ls >> T;
    else if (key == "schedule.beta_start") ls >> bs;
    else if (key == "schedule.beta_end") ls >> be;
    else if (key == "schedule.kind") ls >> kind_name;
  }
  if (T < 0 || bs < 0.0 || be < 0.0 || kind_name.empty())
    throw ParameterError("parse_schedule_config: missing schedule keys");
  return make_schedule(T, bs, be, schedule_kind_from_name(kind_name));
}

}  // namespace fieldsr
