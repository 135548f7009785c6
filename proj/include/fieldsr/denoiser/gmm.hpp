// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "fieldsr/core/errors.hpp"
#include "fieldsr/denoiser/model.hpp"

namespace fieldsr {

// Isotropic Gaussian mixture over D-dimensional data. A LatentImage is read
// as a flat D-vector (D = channels*height*width).
struct GaussianMixture {
  std::vector<double> weights;             // K, positive, sum to 1
  std::vector<std::vector<double>> means;  // K x D
  std::vector<double> variances;           // K, isotropic per component

  int K() const { return static_cast<int>(weights.size()); }
  int D() const { return means.empty() ? 0 : static_cast<int>(means[0].size()); }

  void validate() const {
    if (weights.empty() || means.size() != weights.size() || variances.size() != weights.size())
      throw ParameterError("GaussianMixture: inconsistent component counts");
    double sum = 0.0;
    for (double w : weights) {
      if (!(w > 0.0)) throw ParameterError("GaussianMixture: weights must be positive");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-12)
      throw ParameterError("GaussianMixture: weights sum to " + std::to_string(sum));
    for (double v : variances)
      if (!(v > 0.0)) throw ParameterError("GaussianMixture: variances must be positive");
    for (const auto& m : means)
      if (static_cast<int>(m.size()) != D())
        throw ParameterError("GaussianMixture: mean dimensionality mismatch");
  }
};

namespace detail {

// Marginal of forward-noised mixture data at noise level abar: component k
// becomes N(sqrt(abar) mu_k, (abar v_k + 1 - abar) I). Fills log p and the
// responsibilities; log-sum-exp over components keeps it stable far from
// all modes.
struct GmmEval {
  double log_p = 0.0;
  double mean_scale = 1.0;    // sqrt(abar)
  std::vector<double> resp;   // K responsibilities
  std::vector<double> var_t;  // K marginal variances
};

inline GmmEval gmm_eval(const GaussianMixture& g, const double* z, int dim, double abar) {
  if (dim != g.D()) throw ShapeError("gmm: input dimension does not match mixture");
  const int K = g.K();
  const double ms = std::sqrt(abar);
  GmmEval ev;
  ev.mean_scale = ms;
  ev.resp.resize(K);
  ev.var_t.resize(K);
  std::vector<double>& lg = ev.resp;  // reuse as scratch for log terms
  double max_lg = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < K; ++k) {
    const double s2 = abar * g.variances[k] + (1.0 - abar);
    ev.var_t[k] = s2;
    double q = 0.0;
    for (int i = 0; i < dim; ++i) {
      const double d = z[i] - ms * g.means[k][i];
      q += d * d;
    }
    lg[k] = std::log(g.weights[k]) - 0.5 * dim * std::log(2.0 * M_PI * s2) - 0.5 * q / s2;
    if (lg[k] > max_lg) max_lg = lg[k];
  }
  if (!std::isfinite(max_lg))
    throw NumericError("gmm: all component responsibilities underflowed (log terms non-finite)");
  double sum = 0.0;
  for (int k = 0; k < K; ++k) sum += std::exp(lg[k] - max_lg);
  ev.log_p = max_lg + std::log(sum);
  for (int k = 0; k < K; ++k) lg[k] = std::exp(lg[k] - max_lg) / sum;  // now responsibilities
  return ev;
}

}  // namespace detail

// log of the exact noised-data marginal p_t at noise level abar = alpha_bar[t]
// (abar = 1 gives the data distribution itself).
inline double gmm_log_marginal(const GaussianMixture& g, const Image& z, double abar) {
  return detail::gmm_eval(g, z.data(), static_cast<int>(z.size()), abar).log_p;
}

// grad_z log p_t(z); exposed for score-based tests.
inline Image gmm_score(const GaussianMixture& g, const Image& z, double abar) {
  const int dim = static_cast<int>(z.size());
  detail::GmmEval ev = detail::gmm_eval(g, z.data(), dim, abar);
  const double ms = ev.mean_scale;
  Image out = Image::zeros_like(z);
  for (int k = 0; k < g.K(); ++k) {
    const double c = ev.resp[k] / ev.var_t[k];
    for (int i = 0; i < dim; ++i) out[i] += c * (ms * g.means[k][i] - z[i]);
  }
  return out;
}

// Optimal noise prediction for mixture data: -sqrt(1 - abar) * grad log p_t.
inline Image gmm_predict_eps(const GaussianMixture& g, const Image& z_t, int t,
                             const NoiseSchedule& s) {
  s.check_t(t, "gmm_predict_eps");
  const double abar = s.alpha_bar[t];
  Image score = gmm_score(g, z_t, abar);
  const double c = -std::sqrt(1.0 - abar);
  for (size_t i = 0; i < score.size(); ++i) score[i] *= c;
  return score;
}

class GmmDenoiser : public DenoiserModel {
 public:
  GmmDenoiser(GaussianMixture gmm, NoiseSchedule schedule)
      : gmm_(std::move(gmm)), schedule_(std::move(schedule)) {
    gmm_.validate();
  }

  const GaussianMixture& mixture() const { return gmm_; }
  const NoiseSchedule& schedule() const { return schedule_; }

  Image predict_eps(const Image& z_t, const Conditioning& /*cond*/, int t) const override {
    return gmm_predict_eps(gmm_, z_t, t, schedule_);
  }

  // J = d eps_pred / d z = -sqrt(1-abar) H with H the log-density Hessian:
  //   H u = sum_k r_k ((g_k.u) g_k - u / s_k^2) - (G.u) G,
  // g_k the per-component score, G the mixture score. H is symmetric, so
  // the VJP is J u directly.
  Image input_vjp(const Image& z_t, const Conditioning& /*cond*/, int t,
                  const Image& dL_dout) const override {
    schedule_.check_t(t, "gmm input_vjp");
    require_same_shape(z_t, dL_dout, "gmm input_vjp");
    const double abar = schedule_.alpha_bar[t];
    const int dim = static_cast<int>(z_t.size());
    detail::GmmEval ev = detail::gmm_eval(gmm_, z_t.data(), dim, abar);
    const double ms = std::sqrt(abar);

    Image G = Image::zeros_like(z_t);
    Image Hu = Image::zeros_like(z_t);
    // First pass accumulates G; per-component terms of H u need g_k, so G's
    // rank-one part is applied after the loop.
    std::vector<std::vector<double>> gks(static_cast<size_t>(gmm_.K()));
    for (int k = 0; k < gmm_.K(); ++k) {
      gks[k].resize(static_cast<size_t>(dim));
      const double inv_s2 = 1.0 / ev.var_t[k];
      for (int i = 0; i < dim; ++i) {
        gks[k][i] = (ms * gmm_.means[k][i] - z_t[i]) * inv_s2;
        G[i] += ev.resp[k] * gks[k][i];
      }
    }
    for (int k = 0; k < gmm_.K(); ++k) {
      double gu = 0.0;
      for (int i = 0; i < dim; ++i) gu += gks[k][i] * dL_dout[i];
      const double inv_s2 = 1.0 / ev.var_t[k];
      for (int i = 0; i < dim; ++i)
        Hu[i] += ev.resp[k] * (gu * gks[k][i] - dL_dout[i] * inv_s2);
    }
    double Gu = 0.0;
    for (int i = 0; i < dim; ++i) Gu += G[i] * dL_dout[i];
    const double c = -std::sqrt(1.0 - abar);
    for (int i = 0; i < dim; ++i) Hu[i] = c * (Hu[i] - Gu * G[i]);
    return Hu;
  }

 private:
  GaussianMixture gmm_;
  NoiseSchedule schedule_;
};

}  // namespace fieldsr
