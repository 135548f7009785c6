// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <vector>

#include "fieldsr/core/errors.hpp"
#include "fieldsr/core/image.hpp"
#include "fieldsr/diffusion/conditioning.hpp"
#include "fieldsr/diffusion/schedule.hpp"

namespace fieldsr {

// Noise-prediction backend. Implementations must be shape-preserving and
// produce finite output for finite input; predict_eps is const and safe to
// call concurrently.
class DenoiserModel {
 public:
  virtual ~DenoiserModel() = default;

  virtual Image predict_eps(const Image& z_t, const Conditioning& cond, int t) const = 0;

  virtual bool trainable() const { return false; }

  // dL/dz_t for upstream cotangent dL/d(eps_pred). Optional; backends
  // without one reject rather than approximate.
  virtual Image input_vjp(const Image& z_t, const Conditioning& cond, int t,
                          const Image& dL_dout) const {
    (void)z_t;
    (void)cond;
    (void)t;
    (void)dL_dout;
    throw UnsupportedError("denoiser backend does not provide input gradients");
  }
};

// Opaque forward-pass cache owned by the backend that created it.
struct DenoiserCache {
  virtual ~DenoiserCache() = default;
};

// Backend with a parameter vector and exact reverse-mode gradients.
class TrainableDenoiser : public DenoiserModel {
 public:
  bool trainable() const final { return true; }

  virtual size_t param_count() const = 0;
  virtual std::vector<double>& params() = 0;
  virtual const std::vector<double>& params() const = 0;

  // Forward pass that retains intermediates for backward().
  virtual Image forward_cached(const Image& z_t, const Conditioning& cond, int t,
                               std::unique_ptr<DenoiserCache>& cache) const = 0;

  // Accumulates d(sum(dL_dout . out))/dparams into param_grad (size
  // param_count, zero-initialize before the first call); optionally also
  // yields dL/dz_t.
  virtual void backward(const DenoiserCache& cache, const Image& dL_dout,
                        std::vector<double>& param_grad, Image* dL_dz_t) const = 0;
};

}  // namespace fieldsr
