// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "fieldsr/core/rng.hpp"
#include "fieldsr/radiance/camera.hpp"

namespace fieldsr {

// world box the scene lives in
inline constexpr double kSceneHalf = 0.5;

enum class PrimitiveKind { Sphere, Box };

// size: sphere radius in x; box per-axis half extents
struct Primitive {
  PrimitiveKind kind = PrimitiveKind::Sphere;
  Vec3 center;
  Vec3 size{0.1, 0.1, 0.1};
  Vec3 color{0.5, 0.5, 0.5};
  double density = 80.0;

  bool contains(const Vec3& p) const {
    const Vec3 d = p - center;
    if (kind == PrimitiveKind::Sphere) return dot(d, d) <= size.x * size.x;
    return std::abs(d.x) <= size.x && std::abs(d.y) <= size.y && std::abs(d.z) <= size.z;
  }

  // entry/exit of the ray; false on miss
  bool intersect(const Ray& r, double& t_in, double& t_out) const {
    if (kind == PrimitiveKind::Sphere) {
      const Vec3 oc = r.origin - center;
      const double b = dot(oc, r.dir);
      const double c = dot(oc, oc) - size.x * size.x;
      const double disc = b * b - c;
      if (disc <= 0.0) return false;
      const double sq = std::sqrt(disc);
      t_in = -b - sq;
      t_out = -b + sq;
      return true;
    }
    t_in = -std::numeric_limits<double>::infinity();
    t_out = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
      const double da = r.dir[a];
      const double lo_w = center[a] - size[a], hi_w = center[a] + size[a];
      if (std::abs(da) < 1e-15) {
        if (r.origin[a] < lo_w || r.origin[a] > hi_w) return false;
        continue;
      }
      double lo = (lo_w - r.origin[a]) / da;
      double hi = (hi_w - r.origin[a]) / da;
      if (lo > hi) std::swap(lo, hi);
      t_in = std::max(t_in, lo);
      t_out = std::min(t_out, hi);
    }
    return t_out > t_in;
  }

  // farthest surface distance from the primitive center
  double outer_radius() const {
    if (kind == PrimitiveKind::Sphere) return size.x;
    return norm(size);
  }
};

// Piecewise-constant medium: inside a primitive the density and color are that
// primitive's constants (earlier list entries win where primitives overlap),
// elsewhere vacuum with a background color behind everything.
struct Scene {
  std::vector<Primitive> primitives;
  Vec3 bg{0.1, 0.1, 0.1};
  uint64_t seed = 0;

  void validate() const {
    for (const auto& p : primitives) {
      if (!(p.density > 0.0)) throw ParameterError("Scene: primitive density must be positive");
      for (int a = 0; a < 3; ++a) {
        const double h = p.kind == PrimitiveKind::Sphere ? p.size.x : p.size[a];
        if (!(h > 0.0)) throw ParameterError("Scene: degenerate primitive size");
        if (std::abs(p.center[a]) + h > kSceneHalf + 1e-12)
          throw ParameterError("Scene: primitive leaves the unit box");
      }
    }
  }

  // index of the occupying primitive at p, or -1
  int occupant(const Vec3& p) const {
    for (size_t i = 0; i < primitives.size(); ++i)
      if (primitives[i].contains(p)) return static_cast<int>(i);
    return -1;
  }
};

inline Scene gen_scene(uint64_t seed, int n_primitives) {
  if (n_primitives < 0) throw ParameterError("gen_scene: n_primitives must be >= 0");
  Rng rng(derive_seed(seed, {kStreamScene}));
  Scene s;
  s.seed = seed;
  s.bg = {rng.uniform(0.02, 0.25), rng.uniform(0.02, 0.25), rng.uniform(0.02, 0.25)};
  const double margin = 0.02;
  for (int i = 0; i < n_primitives; ++i) {
    Primitive p;
    p.kind = rng.uniform_int(0, 1) == 0 ? PrimitiveKind::Sphere : PrimitiveKind::Box;
    if (p.kind == PrimitiveKind::Sphere) {
      const double r = rng.uniform(0.08, 0.22);
      p.size = {r, r, r};
    } else {
      p.size = {rng.uniform(0.06, 0.20), rng.uniform(0.06, 0.20), rng.uniform(0.06, 0.20)};
    }
    for (int a = 0; a < 3; ++a) {
      const double h = p.kind == PrimitiveKind::Sphere ? p.size.x : p.size[a];
      const double lim = kSceneHalf - h - margin;
      p.center[a] = rng.uniform(-lim, lim);
    }
    p.color = {rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)};
    p.density = rng.uniform(40.0, 150.0);
    s.primitives.push_back(p);
  }
  s.validate();
  return s;
}

struct GtSample {
  double rgb[3] = {0, 0, 0};
  double depth = 0.0;
  double opacity = 0.0;
};

// Exact emission-absorption through the piecewise-constant medium: segment the
// ray at primitive boundaries, close each constant segment in closed form.
// Depth is the expected termination distance with residual mass at `far`.
inline GtSample gt_ray(const Scene& scene, const Ray& ray, double far) {
  std::vector<double> cuts{0.0};
  for (const auto& p : scene.primitives) {
    double a, b;
    if (p.intersect(ray, a, b)) {
      if (a > 0.0) cuts.push_back(a);
      if (b > 0.0) cuts.push_back(b);
    }
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end(),
                         [](double x, double y) { return std::abs(x - y) < 1e-12; }),
             cuts.end());

  GtSample out;
  double T = 1.0;
  double depth_acc = 0.0;
  for (size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double a = cuts[i], b = cuts[i + 1];
    const double len = b - a;
    if (len < 1e-12) continue;
    const int occ = scene.occupant(ray.origin + (0.5 * (a + b)) * ray.dir);
    if (occ < 0) continue;
    const Primitive& p = scene.primitives[static_cast<size_t>(occ)];
    const double sig = p.density;
    const double e = std::exp(-sig * len);
    const double alpha = 1.0 - e;
    for (int c = 0; c < 3; ++c) out.rgb[c] += T * alpha * p.color[c];
    // int_0^len sigma u exp(-sigma u) du = (1 - e (1 + sigma len)) / sigma
    depth_acc += T * (a * alpha + (1.0 - e * (1.0 + sig * len)) / sig);
    T *= e;
  }
  for (int c = 0; c < 3; ++c) out.rgb[c] += T * scene.bg[c];
  out.depth = depth_acc + T * far;
  out.opacity = 1.0 - T;
  return out;
}

}  // namespace fieldsr
