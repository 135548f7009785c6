// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "fieldsr/core/errors.hpp"

namespace fieldsr {

// Dense C x H x W array of doubles. Used for latents, images, noise tensors
// and anything else with per-pixel channels. Channel-major layout.
class Image {
 public:
  Image() = default;
  Image(int channels, int height, int width, double fill = 0.0)
      : channels_(channels), height_(height), width_(width) {
    if (channels <= 0 || height <= 0 || width <= 0)
      throw ParameterError("Image dims must be positive");
    data_.assign(static_cast<size_t>(channels) * height * width, fill);
  }

  static Image zeros_like(const Image& other) {
    return Image(other.channels_, other.height_, other.width_, 0.0);
  }

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& raw() { return data_; }
  const std::vector<double>& raw() const { return data_; }

  double& operator[](size_t i) { return data_[i]; }
  double operator[](size_t i) const { return data_[i]; }

  double& at(int c, int y, int x) {
    return data_[(static_cast<size_t>(c) * height_ + y) * width_ + x];
  }
  double at(int c, int y, int x) const {
    return data_[(static_cast<size_t>(c) * height_ + y) * width_ + x];
  }

  bool same_shape(const Image& o) const {
    return channels_ == o.channels_ && height_ == o.height_ && width_ == o.width_;
  }

  std::string shape_str() const {
    return std::to_string(channels_) + "x" + std::to_string(height_) + "x" +
           std::to_string(width_);
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

 private:
  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

inline void require_same_shape(const Image& a, const Image& b, const char* where) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(where) + ": shape mismatch " + a.shape_str() +
                     " vs " + b.shape_str());
}

// Elementwise helpers. All enforce matching shapes.
inline Image operator+(const Image& a, const Image& b) {
  require_same_shape(a, b, "Image::operator+");
  Image out = a;
  for (size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

inline Image operator-(const Image& a, const Image& b) {
  require_same_shape(a, b, "Image::operator-");
  Image out = a;
  for (size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

inline Image operator*(double s, const Image& a) {
  Image out = a;
  for (size_t i = 0; i < out.size(); ++i) out[i] *= s;
  return out;
}

inline Image& operator+=(Image& a, const Image& b) {
  require_same_shape(a, b, "Image::operator+=");
  for (size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

inline Image& operator-=(Image& a, const Image& b) {
  require_same_shape(a, b, "Image::operator-=");
  for (size_t i = 0; i < a.size(); ++i) a[i] -= b[i];
  return a;
}

inline Image& operator*=(Image& a, double s) {
  for (size_t i = 0; i < a.size(); ++i) a[i] *= s;
  return a;
}

inline double max_abs_diff(const Image& a, const Image& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double mean_abs_diff(const Image& a, const Image& b) {
  require_same_shape(a, b, "mean_abs_diff");
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

inline Image clamp01(const Image& a) {
  Image out = a;
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = out[i] < 0.0 ? 0.0 : (out[i] > 1.0 ? 1.0 : out[i]);
  return out;
}

}  // namespace fieldsr
