// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <vector>

#include "fieldsr/core/image.hpp"
#include "fieldsr/core/resample.hpp"

namespace fieldsr {

inline constexpr double kPsnrCap = 99.0;  // reported for exact matches

inline double psnr(const Image& a, const Image& b) {
  require_same_shape(a, b, "psnr");
  double mse = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.size());
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

namespace detail {

inline std::vector<double> gaussian_window11() {
  std::vector<double> w(11);
  const double sigma = 1.5;
  double sum = 0.0;
  for (int i = 0; i < 11; ++i) {
    const double d = i - 5.0;
    w[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += w[i];
  }
  for (double& v : w) v /= sum;
  return w;
}

// separable valid-region filter: output (H-10) x (W-10)
inline void filter11(const double* src, int H, int W, const std::vector<double>& k,
                     std::vector<double>& tmp, std::vector<double>& dst) {
  const int Ho = H - 10, Wo = W - 10;
  tmp.assign(static_cast<size_t>(H) * Wo, 0.0);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < Wo; ++x) {
      double acc = 0.0;
      for (int i = 0; i < 11; ++i) acc += k[i] * src[y * W + x + i];
      tmp[static_cast<size_t>(y) * Wo + x] = acc;
    }
  dst.assign(static_cast<size_t>(Ho) * Wo, 0.0);
  for (int y = 0; y < Ho; ++y)
    for (int x = 0; x < Wo; ++x) {
      double acc = 0.0;
      for (int i = 0; i < 11; ++i) acc += k[i] * tmp[static_cast<size_t>(y + i) * Wo + x];
      dst[static_cast<size_t>(y) * Wo + x] = acc;
    }
}

}  // namespace detail

// Windowed structural similarity, 11-pixel Gaussian window (sigma 1.5),
// stabilizers for unit-range data, valid windows only, averaged over
// channels.
inline double ssim(const Image& a, const Image& b) {
  require_same_shape(a, b, "ssim");
  if (a.height() < 11 || a.width() < 11)
    throw ParameterError("ssim: image smaller than the 11-pixel window");
  const double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
  const std::vector<double> k = detail::gaussian_window11();
  const int H = a.height(), W = a.width();
  const int Ho = H - 10, Wo = W - 10;
  std::vector<double> tmp, mu_a, mu_b, m_aa, m_bb, m_ab;
  std::vector<double> aa(static_cast<size_t>(H) * W), bb(aa.size()), ab(aa.size());
  double total = 0.0;
  for (int c = 0; c < a.channels(); ++c) {
    const double* pa = a.data() + static_cast<size_t>(c) * H * W;
    const double* pb = b.data() + static_cast<size_t>(c) * H * W;
    for (size_t i = 0; i < aa.size(); ++i) {
      aa[i] = pa[i] * pa[i];
      bb[i] = pb[i] * pb[i];
      ab[i] = pa[i] * pb[i];
    }
    detail::filter11(pa, H, W, k, tmp, mu_a);
    detail::filter11(pb, H, W, k, tmp, mu_b);
    detail::filter11(aa.data(), H, W, k, tmp, m_aa);
    detail::filter11(bb.data(), H, W, k, tmp, m_bb);
    detail::filter11(ab.data(), H, W, k, tmp, m_ab);
    double acc = 0.0;
    for (size_t i = 0; i < mu_a.size(); ++i) {
      const double va = m_aa[i] - mu_a[i] * mu_a[i];
      const double vb = m_bb[i] - mu_b[i] * mu_b[i];
      const double cov = m_ab[i] - mu_a[i] * mu_b[i];
      const double num = (2.0 * mu_a[i] * mu_b[i] + C1) * (2.0 * cov + C2);
      const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + C1) * (va + vb + C2);
      acc += num / den;
    }
    total += acc / static_cast<double>(Ho * Wo);
  }
  return total / a.channels();
}

// Variance of the 3x3 Laplacian response on luma; the no-reference
// sharpness proxy reported as "sharpness (NIQE proxy)".
inline double sharpness(const Image& img) {
  Image y = luma(img);
  const int H = y.height(), W = y.width();
  if (H < 3 || W < 3) return 0.0;
  std::vector<double> resp;
  resp.reserve(static_cast<size_t>(H - 2) * (W - 2));
  for (int r = 1; r + 1 < H; ++r)
    for (int c = 1; c + 1 < W; ++c)
      resp.push_back(y.at(0, r - 1, c) + y.at(0, r + 1, c) + y.at(0, r, c - 1) +
                     y.at(0, r, c + 1) - 4.0 * y.at(0, r, c));
  double mean = 0.0;
  for (double v : resp) mean += v;
  mean /= static_cast<double>(resp.size());
  double var = 0.0;
  for (double v : resp) var += (v - mean) * (v - mean);
  return var / static_cast<double>(resp.size());
}

// Mean absolute difference between the canonical 4x downsample of the SR
// image and the LR image it should explain.
inline double lr_consistency(const Image& sr, const Image& lr) {
  if (sr.channels() != lr.channels() || sr.height() != 4 * lr.height() ||
      sr.width() != 4 * lr.width())
    throw ShapeError("lr_consistency: sr " + sr.shape_str() + " is not 4x of lr " +
                     lr.shape_str());
  return mean_abs_diff(box_downsample4(sr), lr);
}

}  // namespace fieldsr
