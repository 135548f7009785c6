// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>

#include "fieldsr/core/image.hpp"

namespace fieldsr {

// The canonical LR operator for the whole repo: plain 4x4 box average.
// Every LR-consistency statement is defined against this one function.
inline Image box_downsample4(const Image& img) {
  if (img.height() % 4 != 0 || img.width() % 4 != 0)
    throw ShapeError("box_downsample4: dims must be divisible by 4, got " +
                     img.shape_str());
  const int oh = img.height() / 4, ow = img.width() / 4;
  Image out(img.channels(), oh, ow);
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (int dy = 0; dy < 4; ++dy)
          for (int dx = 0; dx < 4; ++dx) acc += img.at(c, 4 * y + dy, 4 * x + dx);
        out.at(c, y, x) = acc * (1.0 / 16.0);
      }
  return out;
}

inline Image upsample4_nearest(const Image& img) {
  Image out(img.channels(), img.height() * 4, img.width() * 4);
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < out.height(); ++y)
      for (int x = 0; x < out.width(); ++x)
        out.at(c, y, x) = img.at(c, y / 4, x / 4);
  return out;
}

namespace detail {
// Keys cubic kernel, a = -0.5 (Catmull-Rom).
inline double cubic_weight(double x) {
  x = std::abs(x);
  if (x < 1.0) return 1.5 * x * x * x - 2.5 * x * x + 1.0;
  if (x < 2.0) return -0.5 * x * x * x + 2.5 * x * x - 4.0 * x + 2.0;
  return 0.0;
}
}  // namespace detail

// Separable bicubic 4x upscale with center-aligned sample mapping
// (src = (dst + 0.5) / 4 - 0.5) and edge clamping.
inline Image upsample4_bicubic(const Image& img) {
  const int sh = img.height(), sw = img.width();
  const int oh = sh * 4, ow = sw * 4;
  Image out(img.channels(), oh, ow);

  // Horizontal pass into a temp at (sh x ow), then vertical pass.
  Image tmp(img.channels(), sh, ow);
  for (int x = 0; x < ow; ++x) {
    const double sx = (x + 0.5) / 4.0 - 0.5;
    const int x0 = static_cast<int>(std::floor(sx)) - 1;
    double w[4];
    for (int k = 0; k < 4; ++k) w[k] = detail::cubic_weight(sx - (x0 + k));
    for (int c = 0; c < img.channels(); ++c)
      for (int y = 0; y < sh; ++y) {
        double acc = 0.0;
        for (int k = 0; k < 4; ++k) {
          const int xs = std::clamp(x0 + k, 0, sw - 1);
          acc += w[k] * img.at(c, y, xs);
        }
        tmp.at(c, y, x) = acc;
      }
  }
  for (int y = 0; y < oh; ++y) {
    const double sy = (y + 0.5) / 4.0 - 0.5;
    const int y0 = static_cast<int>(std::floor(sy)) - 1;
    double w[4];
    for (int k = 0; k < 4; ++k) w[k] = detail::cubic_weight(sy - (y0 + k));
    for (int c = 0; c < img.channels(); ++c)
      for (int x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (int k = 0; k < 4; ++k) {
          const int ys = std::clamp(y0 + k, 0, sh - 1);
          acc += w[k] * tmp.at(c, ys, x);
        }
        out.at(c, y, x) = acc;
      }
  }
  return out;
}

// BT.601 luma of an RGB image (or a copy of a single-channel one).
inline Image luma(const Image& img) {
  if (img.channels() == 1) return img;
  if (img.channels() != 3)
    throw ShapeError("luma: expected 1 or 3 channels, got " + img.shape_str());
  Image out(1, img.height(), img.width());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      out.at(0, y, x) = 0.299 * img.at(0, y, x) + 0.587 * img.at(1, y, x) +
                        0.114 * img.at(2, y, x);
  return out;
}

// k x k box blur with edge clamping; k odd keeps the image centered but any
// k >= 1 is accepted (k=4 is the "4x box blur" used by metric sanity checks).
inline Image box_blur(const Image& img, int k) {
  if (k < 1) throw ParameterError("box_blur: k must be >= 1");
  Image out(img.channels(), img.height(), img.width());
  const int lo = -(k - 1) / 2, hi = k / 2;
  const double inv = 1.0 / (k * k);
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) {
        double acc = 0.0;
        for (int dy = lo; dy <= hi; ++dy)
          for (int dx = lo; dx <= hi; ++dx) {
            const int ys = std::clamp(y + dy, 0, img.height() - 1);
            const int xs = std::clamp(x + dx, 0, img.width() - 1);
            acc += img.at(c, ys, xs);
          }
        out.at(c, y, x) = acc * inv;
      }
  return out;
}

}  // namespace fieldsr
