// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "fieldsr/denoiser/gmm.hpp"
#include "fieldsr/diffusion/conditioning.hpp"
#include "fieldsr/diffusion/elbo.hpp"
#include "fieldsr/diffusion/ops.hpp"
#include "fieldsr/diffusion/sampler.hpp"
#include "fieldsr/diffusion/schedule.hpp"

using namespace fieldsr;
using Catch::Approx;

namespace {

NoiseSchedule desk_schedule() { return make_schedule(256, 1e-4, 2e-2); }

// Trainable stub predicting a constant learned image, independent of input.
class BiasDenoiser : public TrainableDenoiser {
 public:
  BiasDenoiser(int c, int h, int w) : shape_{c, h, w}, params_(static_cast<size_t>(c) * h * w) {}

  size_t param_count() const override { return params_.size(); }
  std::vector<double>& params() override { return params_; }
  const std::vector<double>& params() const override { return params_; }

  Image predict_eps(const Image& z_t, const Conditioning&, int) const override {
    Image out(shape_[0], shape_[1], shape_[2]);
    require_same_shape(out, z_t, "BiasDenoiser");
    for (size_t i = 0; i < out.size(); ++i) out[i] = params_[i];
    return out;
  }

  Image forward_cached(const Image& z_t, const Conditioning& cond, int t,
                       std::unique_ptr<DenoiserCache>& cache) const override {
    cache = std::make_unique<DenoiserCache>();
    return predict_eps(z_t, cond, t);
  }

  void backward(const DenoiserCache&, const Image& dL_dout, std::vector<double>& param_grad,
                Image* dL_dz_t) const override {
    for (size_t i = 0; i < param_grad.size(); ++i) param_grad[i] += dL_dout[i];
    if (dL_dz_t)
      for (size_t i = 0; i < dL_dz_t->size(); ++i) (*dL_dz_t)[i] = 0.0;
  }

 private:
  int shape_[3];
  std::vector<double> params_;
};

}  // namespace

TEST_CASE("make_schedule validates its parameter ranges") {
  REQUIRE_THROWS_AS(make_schedule(1, 1e-4, 2e-2), ParameterError);
  REQUIRE_THROWS_AS(make_schedule(10, 0.0, 2e-2), ParameterError);
  REQUIRE_THROWS_AS(make_schedule(10, 2e-2, 1e-4), ParameterError);
  REQUIRE_THROWS_AS(make_schedule(10, 1e-4, 1.0), ParameterError);
}

TEST_CASE("schedule coefficients satisfy their invariants") {
  const NoiseSchedule s = desk_schedule();
  REQUIRE(s.alpha_bar[0] == Approx(1.0 - s.beta[0]).epsilon(1e-15));
  for (int t = 0; t < s.T; ++t) {
    REQUIRE(s.beta[t] > 0.0);
    REQUIRE(s.beta[t] < 1.0);
    REQUIRE(s.sigma[t] == Approx(std::sqrt(s.beta[t])).epsilon(1e-15));
    REQUIRE(s.gamma[t] == 1.0);
    if (t > 0) {
      REQUIRE(s.alpha_bar[t] < s.alpha_bar[t - 1]);
      // cumulative-product consistency: alpha_bar[t]/alpha_bar[t-1] = alpha[t]
      REQUIRE(s.alpha_bar[t] / s.alpha_bar[t - 1] == Approx(s.alpha[t]).epsilon(1e-12));
    }
  }
}

TEST_CASE("large-T terminal alpha_bar matches a long-double product oracle") {
  const NoiseSchedule s = make_schedule(1000, 1e-4, 2e-2);
  // independent route: accumulate log1p(-beta) in extended precision
  long double log_ab = 0.0L;
  for (int t = 0; t < 1000; ++t) {
    const long double beta =
        1e-4L + (2e-2L - 1e-4L) * static_cast<long double>(t) / 999.0L;
    log_ab += std::log1p(-beta);
  }
  const double oracle = static_cast<double>(std::exp(log_ab));
  REQUIRE(s.alpha_bar[999] == Approx(oracle).epsilon(1e-10));
}

TEST_CASE("schedule serialization round-trips and hashes config identity") {
  const NoiseSchedule s = desk_schedule();
  const NoiseSchedule back = parse_schedule_config(s.to_config());
  REQUIRE(back.T == s.T);
  REQUIRE(back.beta == s.beta);
  REQUIRE(back.alpha_bar == s.alpha_bar);
  REQUIRE(back.hash() == s.hash());
  REQUIRE(make_schedule(128, 1e-4, 2e-2).hash() != s.hash());
}

TEST_CASE("forward_noise matches the closed form") {
  const NoiseSchedule s = desk_schedule();
  const int t = 100;
  Image z0(3, 4, 4, 1.0);
  Image zero = Image::zeros_like(z0);
  Image noised = forward_noise(s, z0, zero, t);
  for (size_t i = 0; i < noised.size(); ++i)
    REQUIRE(noised[i] == Approx(std::sqrt(s.alpha_bar[t])).epsilon(1e-14));

  Rng rng(4);
  Image eps = rng.normal_image(3, 4, 4);
  Image from_zero = forward_noise(s, zero, eps, t);
  for (size_t i = 0; i < eps.size(); ++i)
    REQUIRE(from_zero[i] == Approx(std::sqrt(1.0 - s.alpha_bar[t]) * eps[i]).epsilon(1e-14));

  REQUIRE_THROWS_AS(forward_noise(s, z0, Image(3, 4, 5), t), ShapeError);
  REQUIRE_THROWS_AS(forward_noise(s, z0, zero, s.T), ParameterError);
}

TEST_CASE("forward_noise has the stated first two moments") {
  const NoiseSchedule s = desk_schedule();
  const int t = 180;
  Image z0(1, 1, 4);
  z0[0] = -1.0;
  z0[1] = 0.3;
  z0[2] = 2.0;
  z0[3] = 0.0;
  Rng rng(17);
  const int n = 100000;
  std::vector<double> sum(4, 0.0), sum2(4, 0.0);
  for (int i = 0; i < n; ++i) {
    Image eps = rng.normal_image(1, 1, 4);
    Image zt = forward_noise(s, z0, eps, t);
    for (int j = 0; j < 4; ++j) {
      sum[j] += zt[j];
      sum2[j] += zt[j] * zt[j];
    }
  }
  const double ab = s.alpha_bar[t];
  for (int j = 0; j < 4; ++j) {
    const double mean = sum[j] / n;
    const double var = sum2[j] / n - mean * mean;
    REQUIRE(mean == Approx(std::sqrt(ab) * z0[j]).margin(0.02 * std::max(1.0, std::abs(z0[j]))));
    REQUIRE(var == Approx(1.0 - ab).epsilon(0.02));
  }
}

TEST_CASE("reverse_step edge cases and independent transcription") {
  const NoiseSchedule s = desk_schedule();
  const int t = 77;
  Rng rng(9);
  Image zero(2, 3, 3, 0.0);
  Image nu = rng.normal_image(2, 3, 3);

  Image only_noise = reverse_step(s, zero, zero, t, nu);
  for (size_t i = 0; i < nu.size(); ++i)
    REQUIRE(only_noise[i] == Approx(s.sigma[t] * nu[i]).margin(1e-14));

  Image z = rng.normal_image(2, 3, 3);
  Image rescale = reverse_step(s, z, zero, t, zero);
  for (size_t i = 0; i < z.size(); ++i)
    REQUIRE(rescale[i] == Approx(z[i] / std::sqrt(s.alpha[t])).epsilon(1e-13));

  // duplicate transcription of the same update, grouped differently
  for (int rep = 0; rep < 50; ++rep) {
    const int tt = static_cast<int>(rng.uniform_int(1, s.T - 1));
    Image zt = rng.normal_image(2, 3, 3);
    Image ep = rng.normal_image(2, 3, 3);
    Image nn = rng.normal_image(2, 3, 3);
    Image got = reverse_step(s, zt, ep, tt, nn);
    const double alpha = 1.0 - s.beta[tt];
    for (size_t i = 0; i < zt.size(); ++i) {
      const double mean_part =
          std::pow(alpha, -0.5) * zt[i] -
          (s.beta[tt] / (std::sqrt(1.0 - s.alpha_bar[tt]) * std::sqrt(alpha))) * ep[i];
      REQUIRE(got[i] == Approx(mean_part + std::sqrt(s.beta[tt]) * nn[i]).margin(1e-12));
    }
  }

  REQUIRE_THROWS_AS(reverse_step(s, zero, zero, 0, zero), ParameterError);
}

TEST_CASE("reconstruct_z0 inverts forward_noise") {
  const NoiseSchedule s = desk_schedule();
  Rng rng(21);
  for (int rep = 0; rep < 100; ++rep) {
    const int t = static_cast<int>(rng.uniform_int(0, s.T - 1));
    Image z0 = rng.normal_image(1, 2, 3);
    Image eps = rng.normal_image(1, 2, 3);
    Image zt = forward_noise(s, z0, eps, t);
    Image rec = reconstruct_z0(s, zt, eps, t);
    REQUIRE(max_abs_diff(rec, z0) < 1e-10);
  }
  Image z(1, 2, 3, 0.5);
  Image rec = reconstruct_z0(s, z, Image::zeros_like(z), 50);
  for (size_t i = 0; i < z.size(); ++i)
    REQUIRE(rec[i] == Approx(z[i] / std::sqrt(s.alpha_bar[50])).epsilon(1e-13));
}

TEST_CASE("ancestral sampling reproduces standard-normal moments") {
  // data = N(0, I) in 2-D; the exact denoiser makes the chain's target the
  // data distribution itself
  const NoiseSchedule s = make_schedule(500, 1e-4, 4e-2);
  GaussianMixture g;
  g.weights = {1.0};
  g.means = {{0.0, 0.0}};
  g.variances = {1.0};
  GmmDenoiser den(g, s);
  Conditioning cond;

  const int n = 10000;
  std::vector<Image> samples = ancestral_sample_many(den, cond, n, 2, 1, 1, s, 777);
  double sum[2] = {0, 0}, sum2[2] = {0, 0};
  for (const Image& z : samples) {
    for (int j = 0; j < 2; ++j) {
      sum[j] += z[j];
      sum2[j] += z[j] * z[j];
    }
  }
  for (int j = 0; j < 2; ++j) {
    const double mean = sum[j] / n;
    const double var = sum2[j] / n - mean * mean;
    REQUIRE(std::abs(mean) < 0.05);
    REQUIRE(var == Approx(1.0).epsilon(0.05));
  }
}

TEST_CASE("ancestral sampling splits mass evenly across symmetric modes") {
  const NoiseSchedule s = make_schedule(500, 1e-4, 4e-2);
  GaussianMixture g;
  g.weights = {0.5, 0.5};
  g.means = {{1.5, 0.0}, {-1.5, 0.0}};
  g.variances = {0.05, 0.05};
  GmmDenoiser den(g, s);
  Conditioning cond;

  const int n = 10000;
  std::vector<Image> samples = ancestral_sample_many(den, cond, n, 2, 1, 1, s, 31);
  int right = 0;
  for (const Image& z : samples)
    if (z[0] > 0.0) ++right;
  const double frac = static_cast<double>(right) / n;
  REQUIRE(frac == Approx(0.5).margin(0.03));
}

TEST_CASE("ancestral sampling is deterministic under a fixed seed") {
  const NoiseSchedule s = make_schedule(64, 1e-4, 2e-2);
  GaussianMixture g;
  g.weights = {1.0};
  g.means = {{0.0, 0.0, 0.0, 0.0}};
  g.variances = {1.0};
  GmmDenoiser den(g, s);
  Conditioning cond;
  Image a = ancestral_sample(den, cond, 1, 2, 2, s, 12345);
  Image b = ancestral_sample(den, cond, 1, 2, 2, s, 12345);
  Image c = ancestral_sample(den, cond, 1, 2, 2, s, 12346);
  REQUIRE(max_abs_diff(a, b) == 0.0);
  REQUIRE(max_abs_diff(a, c) > 0.0);
}

TEST_CASE("elbo_loss edge cases on a trainable stub") {
  const NoiseSchedule s = desk_schedule();
  Rng rng(6);
  Image z0 = rng.normal_image(2, 2, 2);
  Image eps = rng.normal_image(2, 2, 2);
  Conditioning cond;
  const int t = 60;

  BiasDenoiser den(2, 2, 2);
  // perfect prediction: loss and gradient vanish
  for (size_t i = 0; i < eps.size(); ++i) den.params()[i] = eps[i];
  auto [loss0, grad0] = elbo_loss(den, z0, cond, t, eps, s);
  REQUIRE(loss0 == Approx(0.0).margin(1e-18));
  for (double gv : grad0) REQUIRE(gv == Approx(0.0).margin(1e-12));

  // zero prediction: loss equals gamma * ||eps||^2
  for (double& p : den.params()) p = 0.0;
  auto [lossz, gradz] = elbo_loss(den, z0, cond, t, eps, s);
  double e2 = 0.0;
  for (size_t i = 0; i < eps.size(); ++i) e2 += eps[i] * eps[i];
  REQUIRE(lossz == Approx(s.gamma[t] * e2).epsilon(1e-12));
  REQUIRE(gradz.size() == den.param_count());
}

TEST_CASE("elbo_loss rejects non-trainable backends") {
  const NoiseSchedule s = desk_schedule();
  GaussianMixture g;
  g.weights = {1.0};
  g.means = {{0.0}};
  g.variances = {1.0};
  GmmDenoiser den(g, s);
  Image z0(1, 1, 1, 0.2);
  Image eps(1, 1, 1, 0.1);
  Conditioning cond;
  REQUIRE_THROWS_AS(elbo_loss(den, z0, cond, 10, eps, s), UnsupportedError);
}

TEST_CASE("conditioning is noised once by its maker") {
  const NoiseSchedule s = desk_schedule();
  Image lr(3, 4, 4, 0.5);
  Rng r1(5), r2(5), r3(6);
  Conditioning a = make_conditioning(s, lr, default_lr_noise_level(s), 1, r1);
  Conditioning b = make_conditioning(s, lr, default_lr_noise_level(s), 1, r2);
  Conditioning c = make_conditioning(s, lr, default_lr_noise_level(s), 1, r3);
  REQUIRE(a.content_hash() == b.content_hash());
  REQUIRE(a.content_hash() != c.content_hash());
  REQUIRE(a.lr_noise_level == default_lr_noise_level(s));
  // the stored image really is noised
  REQUIRE(max_abs_diff(a.lr_image, lr) > 0.0);
  REQUIRE_THROWS_AS(make_conditioning(s, lr, s.T, 0, r1), ParameterError);
}

TEST_CASE("conditioning shape gate accepts 1/4 resolution only") {
  Image z(3, 16, 16, 0.0);
  Conditioning good;
  good.lr_image = Image(3, 4, 4, 0.1);
  REQUIRE_NOTHROW(require_cond_matches(good, z, "test"));
  Conditioning bad;
  bad.lr_image = Image(3, 5, 4, 0.1);
  REQUIRE_THROWS_AS(require_cond_matches(bad, z, "test"), ShapeError);
  Conditioning empty;  // unconditional passes through
  REQUIRE_NOTHROW(require_cond_matches(empty, z, "test"));
}
