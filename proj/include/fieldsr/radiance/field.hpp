// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "fieldsr/core/binio.hpp"
#include "fieldsr/core/errors.hpp"
#include "fieldsr/core/quantize.hpp"
#include "fieldsr/radiance/camera.hpp"

namespace fieldsr {

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double softplus_grad(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logistic_grad(double x) {
  const double l = logistic(x);
  return l * (1.0 - l);
}

// 8-node trilinear stencil at a world position; weights sum to 1
struct TriProbe {
  std::array<uint32_t, 8> node;  // flat grid indices (z*N + y)*N + x
  std::array<double, 8> w;
};

// Dense N^3 voxel grid over an axis-aligned box. Raw density maps through
// softplus, raw color through the logistic, and the activated node values are
// interpolated trilinearly, so activated density stays >= 0 and color stays in
// [0,1] everywhere by construction.
struct VoxelField {
  int resolution = 0;
  Vec3 bbox_min{-0.5, -0.5, -0.5};
  Vec3 bbox_max{0.5, 0.5, 0.5};
  std::vector<double> density_raw;  // N^3
  std::vector<double> color_raw;    // 3 * N^3, channel-major

  VoxelField() = default;
  VoxelField(int n, Vec3 bmin, Vec3 bmax, double init_density_raw = -2.0,
             double init_color_raw = 0.0)
      : resolution(n), bbox_min(bmin), bbox_max(bmax) {
    if (n < 2) throw ParameterError("VoxelField: resolution must be >= 2");
    for (int a = 0; a < 3; ++a)
      if (!(bbox_min[a] < bbox_max[a])) throw ParameterError("VoxelField: empty bounding box");
    const size_t n3 = static_cast<size_t>(n) * n * n;
    density_raw.assign(n3, init_density_raw);
    color_raw.assign(3 * n3, init_color_raw);
  }

  size_t nodes() const {
    return static_cast<size_t>(resolution) * resolution * resolution;
  }

  void validate() const {
    if (resolution < 2) throw ParameterError("VoxelField: resolution must be >= 2");
    if (density_raw.size() != nodes() || color_raw.size() != 3 * nodes())
      throw ShapeError("VoxelField: grid sizes do not match resolution");
    for (double v : density_raw)
      if (!std::isfinite(v)) throw NumericError("VoxelField: non-finite density");
    for (double v : color_raw)
      if (!std::isfinite(v)) throw NumericError("VoxelField: non-finite color");
  }

  // nodes sit at bbox_min + i/(N-1) * extent; out-of-box points clamp
  TriProbe probe(const Vec3& p) const {
    const int n = resolution;
    TriProbe pr;
    double f[3];
    int i0[3];
    for (int a = 0; a < 3; ++a) {
      double u = (p[a] - bbox_min[a]) / (bbox_max[a] - bbox_min[a]) * (n - 1);
      u = std::min(std::max(u, 0.0), static_cast<double>(n - 1));
      int i = static_cast<int>(u);
      if (i > n - 2) i = n - 2;
      i0[a] = i;
      f[a] = u - i;
    }
    int c = 0;
    for (int dz = 0; dz < 2; ++dz)
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx, ++c) {
          pr.node[static_cast<size_t>(c)] = static_cast<uint32_t>(
              (static_cast<size_t>(i0[2] + dz) * n + (i0[1] + dy)) * n + (i0[0] + dx));
          pr.w[static_cast<size_t>(c)] = (dz ? f[2] : 1.0 - f[2]) * (dy ? f[1] : 1.0 - f[1]) *
                                         (dx ? f[0] : 1.0 - f[0]);
        }
    return pr;
  }

  double density(const TriProbe& pr) const {
    double s = 0.0;
    for (int c = 0; c < 8; ++c)
      s += pr.w[static_cast<size_t>(c)] * softplus(density_raw[pr.node[static_cast<size_t>(c)]]);
    return s;
  }

  void color(const TriProbe& pr, double out[3]) const {
    const size_t n3 = nodes();
    for (int ch = 0; ch < 3; ++ch) {
      double s = 0.0;
      for (int c = 0; c < 8; ++c)
        s += pr.w[static_cast<size_t>(c)] *
             logistic(color_raw[ch * n3 + pr.node[static_cast<size_t>(c)]]);
      out[ch] = s;
    }
  }

  double density_at(const Vec3& p) const { return density(probe(p)); }

  // rounds both grids to f32; checkpoint boundaries pass through this so a
  // saved-and-reloaded field matches the in-memory one bitwise
  void quantize() {
    quantize_f32(density_raw);
    quantize_f32(color_raw);
  }
};

namespace detail {
inline constexpr char kFieldMagic[9] = "FSRFLD01";
inline constexpr uint32_t kActSoftplus = 0;
inline constexpr uint32_t kActLogistic = 0;
}  // namespace detail

inline void save_field(const VoxelField& f, const std::string& path) {
  f.validate();
  BinWriter w(path);
  w.bytes(detail::kFieldMagic, 8);
  w.u32(static_cast<uint32_t>(f.resolution));
  for (int a = 0; a < 3; ++a) w.f64(f.bbox_min[a]);
  for (int a = 0; a < 3; ++a) w.f64(f.bbox_max[a]);
  w.u32(detail::kActSoftplus);
  w.u32(detail::kActLogistic);
  w.f32_array(f.density_raw);
  w.f32_array(f.color_raw);
  w.close();
}

inline VoxelField load_field(const std::string& path) {
  BinReader r(path);
  r.expect_magic(detail::kFieldMagic);
  VoxelField f;
  f.resolution = static_cast<int>(r.u32());
  for (int a = 0; a < 3; ++a) f.bbox_min[a] = r.f64();
  for (int a = 0; a < 3; ++a) f.bbox_max[a] = r.f64();
  if (r.u32() != detail::kActSoftplus || r.u32() != detail::kActLogistic)
    throw IoError("load_field: unknown activation ids in " + path);
  f.density_raw = r.f32_array();
  f.color_raw = r.f32_array();
  f.validate();
  return f;
}

}  // namespace fieldsr
