// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <utility>
#include <vector>

#include "fieldsr/core/adam.hpp"
#include "fieldsr/core/quantize.hpp"
#include "fieldsr/core/resample.hpp"
#include "fieldsr/denoiser/conv.hpp"
#include "fieldsr/diffusion/elbo.hpp"

namespace fieldsr {

// (HR patch, LR patch) pair; lr is the canonical 4x box downsample of hr.
struct PatchPair {
  Image hr;
  Image lr;
};

struct PatchCorpus {
  std::vector<PatchPair> pairs;

  size_t size() const { return pairs.size(); }

  void add_hr(const Image& hr) {
    pairs.push_back({hr, box_downsample4(hr)});
  }
};

// Random aligned crops; patch must be divisible by 4 so the LR pairing is
// exact.
inline PatchCorpus extract_patch_corpus(const std::vector<Image>& hr_images, int patch,
                                        int n_patches, uint64_t seed) {
  if (patch < 4 || patch % 4 != 0)
    throw ParameterError("extract_patch_corpus: patch must be a positive multiple of 4");
  if (hr_images.empty()) throw ParameterError("extract_patch_corpus: no source images");
  Rng rng(derive_seed(seed, {kStreamDenoiserEpoch, 0xC0}));
  PatchCorpus corpus;
  for (int i = 0; i < n_patches; ++i) {
    const Image& src = hr_images[static_cast<size_t>(
        rng.uniform_int(0, static_cast<int64_t>(hr_images.size()) - 1))];
    if (src.height() < patch || src.width() < patch)
      throw ParameterError("extract_patch_corpus: image smaller than patch");
    const int y0 = static_cast<int>(rng.uniform_int(0, src.height() - patch));
    const int x0 = static_cast<int>(rng.uniform_int(0, src.width() - patch));
    Image hr(src.channels(), patch, patch);
    for (int c = 0; c < src.channels(); ++c)
      for (int y = 0; y < patch; ++y)
        for (int x = 0; x < patch; ++x) hr.at(c, y, x) = src.at(c, y0 + y, x0 + x);
    corpus.add_hr(hr);
  }
  return corpus;
}

struct DenoiserTrainConfig {
  ConvSpec conv;
  int epochs = 30;
  int steps_per_epoch = 100;
  int batch_size = 4;
  int lr_noise_level = -1;  // -1 resolves to the schedule default
  int token = 1;            // class token for corpus patches; 0 = unconditional
  double val_fraction = 0.1;
  int max_val_patches = 32;
  int val_draws_per_patch = 4;
  AdamConfig adam;  // default step 1e-3
  uint64_t seed = 0;

  void validate() const {
    conv.validate();
    if (epochs < 1 || steps_per_epoch < 1 || batch_size < 1)
      throw ParameterError("DenoiserTrainConfig: non-positive budget");
    if (val_fraction < 0.0 || val_fraction >= 1.0)
      throw ParameterError("DenoiserTrainConfig: val_fraction outside [0,1)");
  }

  int resolved_lr_noise_level(const NoiseSchedule& s) const {
    const int level = lr_noise_level < 0 ? default_lr_noise_level(s) : lr_noise_level;
    s.check_t(level, "DenoiserTrainConfig");
    return level;
  }
};

struct EpochStat {
  int epoch = 0;
  double train_loss = 0.0;     // mean per-sample objective over the epoch
  double val_loss = 0.0;       // mean over the fixed validation draws
  double zero_val_loss = 0.0;  // zero-predictor baseline on the same draws
};

// Everything needed to continue training from an epoch boundary.
struct DenoiserTrainState {
  ConvDenoiser model;
  Adam adam;
  int next_epoch = 0;

  DenoiserTrainState(ConvSpec spec, uint64_t seed, AdamConfig acfg)
      : model(spec, seed), adam(acfg) {
    adam.reset(model.param_count());
  }
};

namespace detail {

// Deterministic train/val split: a seeded shuffle of indices, validation
// taken from the front.
struct CorpusSplit {
  std::vector<size_t> train;
  std::vector<size_t> val;
};

inline CorpusSplit split_corpus(size_t n, double val_fraction, uint64_t seed) {
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  Rng rng(derive_seed(seed, {kStreamValidation}));
  for (size_t i = n; i > 1; --i)
    std::swap(idx[i - 1], idx[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1))]);
  size_t n_val = static_cast<size_t>(std::lround(val_fraction * static_cast<double>(n)));
  if (n >= 2) n_val = std::clamp<size_t>(n_val, 1, n - 1);
  CorpusSplit sp;
  sp.val.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
  sp.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  if (sp.train.empty()) sp.train = sp.val;  // single-patch corpus trains and validates on it
  return sp;
}

inline double sample_objective(const ConvDenoiser& model, const PatchPair& pair,
                               const NoiseSchedule& s, int level, int token, Rng& rng,
                               std::vector<double>* grad_accum) {
  const int t = static_cast<int>(rng.uniform_int(0, s.T - 1));
  Image eps = rng.normal_image(pair.hr.channels(), pair.hr.height(), pair.hr.width());
  Conditioning cond = make_conditioning(s, pair.lr, level, token, rng);
  if (grad_accum) {
    auto [loss, grad] = elbo_loss(model, pair.hr, cond, t, eps, s);
    for (size_t i = 0; i < grad.size(); ++i) (*grad_accum)[i] += grad[i];
    return loss;
  }
  Image z_t = forward_noise(s, pair.hr, eps, t);
  Image pred = model.predict_eps(z_t, cond, t);
  double loss = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - eps[i];
    loss += d * d;
  }
  return s.gamma[t] * loss;
}

}  // namespace detail

// Runs epochs [state.next_epoch, until_epoch). Each epoch draws from its own
// derived stream and parameters are f32-rounded at the epoch boundary, so
// training is a pure function of (checkpointable state, epoch index, seed)
// and resumed runs retrace the uninterrupted trajectory exactly.
inline void train_denoiser_epochs(DenoiserTrainState& state, const PatchCorpus& corpus,
                                  const NoiseSchedule& s, const DenoiserTrainConfig& cfg,
                                  int until_epoch, std::vector<EpochStat>& curve) {
  cfg.validate();
  if (corpus.size() == 0) throw ParameterError("train_denoiser: empty corpus");
  const int level = cfg.resolved_lr_noise_level(s);
  const detail::CorpusSplit split =
      detail::split_corpus(corpus.size(), cfg.val_fraction, cfg.seed);

  std::vector<double> grad(state.model.param_count());
  for (int epoch = state.next_epoch; epoch < until_epoch; ++epoch) {
    Rng erng(derive_seed(cfg.seed, {kStreamDenoiserEpoch, static_cast<uint64_t>(epoch)}));
    double train_sum = 0.0;
    for (int step = 0; step < cfg.steps_per_epoch; ++step) {
      std::fill(grad.begin(), grad.end(), 0.0);
      double batch_sum = 0.0;
      for (int b = 0; b < cfg.batch_size; ++b) {
        const size_t pi = split.train[static_cast<size_t>(
            erng.uniform_int(0, static_cast<int64_t>(split.train.size()) - 1))];
        batch_sum += detail::sample_objective(state.model, corpus.pairs[pi], s, level, cfg.token,
                                              erng, &grad);
      }
      const double inv_b = 1.0 / cfg.batch_size;
      for (double& g : grad) g *= inv_b;
      state.adam.apply(state.model.params(), grad);
      train_sum += batch_sum * inv_b;
    }

    // Validation pass with its own per-epoch stream so its draw count never
    // perturbs training randomness.
    Rng vrng(derive_seed(cfg.seed, {kStreamValidation, static_cast<uint64_t>(epoch) + 1}));
    double val_sum = 0.0, zero_sum = 0.0;
    int n_val_draws = 0;
    const size_t n_val =
        std::min<size_t>(split.val.size(), static_cast<size_t>(cfg.max_val_patches));
    for (size_t vi = 0; vi < n_val; ++vi) {
      const PatchPair& pair = corpus.pairs[split.val[vi]];
      for (int d = 0; d < cfg.val_draws_per_patch; ++d) {
        const int t = static_cast<int>(vrng.uniform_int(0, s.T - 1));
        Image eps = vrng.normal_image(pair.hr.channels(), pair.hr.height(), pair.hr.width());
        Conditioning cond = make_conditioning(s, pair.lr, level, cfg.token, vrng);
        Image z_t = forward_noise(s, pair.hr, eps, t);
        Image pred = state.model.predict_eps(z_t, cond, t);
        double loss = 0.0, zero_loss = 0.0;
        for (size_t i = 0; i < pred.size(); ++i) {
          const double d2 = pred[i] - eps[i];
          loss += d2 * d2;
          zero_loss += eps[i] * eps[i];
        }
        val_sum += s.gamma[t] * loss;
        zero_sum += s.gamma[t] * zero_loss;
        ++n_val_draws;
      }
    }

    EpochStat st;
    st.epoch = epoch;
    st.train_loss = train_sum / cfg.steps_per_epoch;
    st.val_loss = n_val_draws ? val_sum / n_val_draws : 0.0;
    st.zero_val_loss = n_val_draws ? zero_sum / n_val_draws : 0.0;
    curve.push_back(st);

    quantize_f32(state.model.params());
    quantize_f32(state.adam.m);
    quantize_f32(state.adam.v);
    state.next_epoch = epoch + 1;
  }
}

inline std::pair<DenoiserTrainState, std::vector<EpochStat>> train_denoiser(
    const PatchCorpus& corpus, const NoiseSchedule& s, const DenoiserTrainConfig& cfg) {
  cfg.validate();
  DenoiserTrainState state(cfg.conv, cfg.seed, cfg.adam);
  quantize_f32(state.model.params());  // initialization is state 0 of the trajectory
  std::vector<EpochStat> curve;
  train_denoiser_epochs(state, corpus, s, cfg, cfg.epochs, curve);
  return {std::move(state), std::move(curve)};
}

}  // namespace fieldsr
