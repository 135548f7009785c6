// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "fieldsr/core/binio.hpp"
#include "fieldsr/denoiser/train.hpp"

namespace fieldsr {

// Denoiser checkpoint: versioned header (layer spec text, parameter count,
// schedule hash) followed by f32 parameters. Optimizer moments and the
// epoch counter ride along so a resumed run continues the exact trajectory.
inline constexpr char kDenoiserCkptMagic[9] = "FSRDCK01";

inline void save_denoiser_checkpoint(const std::string& path, const DenoiserTrainState& state,
                                     uint64_t schedule_hash) {
  BinWriter w(path);
  w.bytes(kDenoiserCkptMagic, 8);
  w.u64(schedule_hash);
  w.str(state.model.spec().to_config());
  w.u64(state.model.param_count());
  w.u32(static_cast<uint32_t>(state.next_epoch));
  w.i64(state.adam.step);
  w.f64(state.adam.cfg.lr);
  w.f64(state.adam.cfg.beta1);
  w.f64(state.adam.cfg.beta2);
  w.f64(state.adam.cfg.eps);
  w.f32_array(state.model.params());
  w.f32_array(state.adam.m);
  w.f32_array(state.adam.v);
  w.close();
}

// init_seed only matters for a state loaded before any training; trained
// parameters overwrite the fresh initialization entirely.
inline DenoiserTrainState load_denoiser_checkpoint(const std::string& path,
                                                   uint64_t expected_schedule_hash) {
  BinReader r(path);
  r.expect_magic(kDenoiserCkptMagic);
  const uint64_t hash = r.u64();
  if (hash != expected_schedule_hash)
    throw StateError("denoiser checkpoint was trained under a different noise schedule");
  const ConvSpec spec = ConvSpec::from_config(r.str());
  const uint64_t n_params = r.u64();
  const int next_epoch = static_cast<int>(r.u32());
  const int64_t adam_step = r.i64();
  AdamConfig acfg;
  acfg.lr = r.f64();
  acfg.beta1 = r.f64();
  acfg.beta2 = r.f64();
  acfg.eps = r.f64();

  DenoiserTrainState state(spec, 0, acfg);
  if (state.model.param_count() != n_params)
    throw IoError("denoiser checkpoint parameter count does not match its layer spec");
  state.model.params() = r.f32_array();
  state.adam.m = r.f32_array();
  state.adam.v = r.f32_array();
  if (state.model.params().size() != n_params || state.adam.m.size() != n_params ||
      state.adam.v.size() != n_params)
    throw IoError("denoiser checkpoint arrays truncated");
  state.adam.step = adam_step;
  state.next_epoch = next_epoch;
  return state;
}

}  // namespace fieldsr
