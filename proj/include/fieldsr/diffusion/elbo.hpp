// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <utility>
#include <vector>

#include "fieldsr/denoiser/model.hpp"
#include "fieldsr/diffusion/ops.hpp"

namespace fieldsr {

// Denoising-objective term for one (z0, t, eps) draw:
//   loss = gamma[t] * || eps_pred(z_t, y, t) - eps ||^2,  z_t = forward_noise(z0, t, eps)
// Returns the loss and its exact gradient w.r.t. the denoiser parameters.
inline std::pair<double, std::vector<double>> elbo_loss(const DenoiserModel& denoiser,
                                                        const Image& z0, const Conditioning& cond,
                                                        int t, const Image& eps,
                                                        const NoiseSchedule& s) {
  const auto* tr = dynamic_cast<const TrainableDenoiser*>(&denoiser);
  if (!tr) throw UnsupportedError("elbo_loss: denoiser has no trainable parameters");
  s.check_t(t, "elbo_loss");
  require_same_shape(z0, eps, "elbo_loss");

  const double w = s.gamma[t];
  Image z_t = forward_noise(s, z0, eps, t);
  std::unique_ptr<DenoiserCache> cache;
  Image pred = tr->forward_cached(z_t, cond, t, cache);

  double loss = 0.0;
  Image dL_dout = Image::zeros_like(pred);
  for (size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - eps[i];
    loss += d * d;
    dL_dout[i] = 2.0 * w * d;
  }
  loss *= w;

  std::vector<double> grad(tr->param_count(), 0.0);
  tr->backward(*cache, dL_dout, grad, nullptr);
  return {loss, std::move(grad)};
}

}  // namespace fieldsr
