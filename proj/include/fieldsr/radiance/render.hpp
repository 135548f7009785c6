// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "fieldsr/core/image.hpp"
#include "fieldsr/core/parallel.hpp"
#include "fieldsr/core/rng.hpp"
#include "fieldsr/radiance/field.hpp"

namespace fieldsr {

// flat batch of rays with optional per-ray supervision targets
struct RayBatch {
  std::vector<double> origins;     // 3n, xyz interleaved
  std::vector<double> directions;  // 3n, unit vectors
  std::vector<double> targets;     // 3n or empty
  std::vector<int> view_ids;       // n or empty

  size_t size() const { return origins.size() / 3; }

  void push(const Ray& r, const double* target3 = nullptr, int view_id = -1) {
    origins.insert(origins.end(), {r.origin.x, r.origin.y, r.origin.z});
    directions.insert(directions.end(), {r.dir.x, r.dir.y, r.dir.z});
    if (target3) targets.insert(targets.end(), target3, target3 + 3);
    if (view_id >= 0) view_ids.push_back(view_id);
  }

  Ray ray(size_t i) const {
    return {{origins[3 * i], origins[3 * i + 1], origins[3 * i + 2]},
            {directions[3 * i], directions[3 * i + 1], directions[3 * i + 2]}};
  }

  void validate() const {
    if (origins.size() % 3 != 0 || directions.size() != origins.size())
      throw ShapeError("RayBatch: origins/directions must be 3n and equal");
    if (!targets.empty() && targets.size() != origins.size())
      throw ShapeError("RayBatch: targets must be empty or 3n");
    for (size_t i = 0; i < size(); ++i) {
      const Ray r = ray(i);
      if (std::abs(norm(r.dir) - 1.0) > 1e-9)
        throw ParameterError("RayBatch: directions must be unit length");
    }
  }
};

struct RenderOptions {
  int n_samples = 128;
  Vec3 bg{1.0, 1.0, 1.0};
  double far = 4.0;          // depth assigned to residual transmittance
  uint64_t jitter_seed = 0;  // stratification stream; same seed => same render
};

// slab test against the field's box; returns entry/exit along the ray
inline bool ray_box(const Vec3& o, const Vec3& d, const Vec3& bmin, const Vec3& bmax,
                    double& t0, double& t1) {
  t0 = 0.0;
  t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double da = d[a];
    if (std::abs(da) < 1e-15) {
      if (o[a] < bmin[a] || o[a] > bmax[a]) return false;
      continue;
    }
    double lo = (bmin[a] - o[a]) / da;
    double hi = (bmax[a] - o[a]) / da;
    if (lo > hi) std::swap(lo, hi);
    t0 = std::max(t0, lo);
    t1 = std::min(t1, hi);
  }
  return t1 > t0;
}

struct RaySample {
  double rgb[3] = {0, 0, 0};
  double depth = 0.0;
  double opacity = 0.0;
};

// Emission-absorption over stratified samples: the ray's box span is cut into
// n_samples equal bins, one jittered sample per bin, alpha_k = 1-exp(-sigma dt),
// weights w_k = T_k alpha_k with T the running transmittance. Depth is the
// expected termination distance, counting residual transmittance at `far`.
// The recorder sees every retained sample; the gradient pass reuses this march
// so its forward values match renders bitwise.
template <class Recorder>
inline RaySample march_ray(const VoxelField& field, const Ray& ray, Rng& rng,
                           const RenderOptions& opts, Recorder&& rec) {
  RaySample out;
  double t0, t1;
  if (!ray_box(ray.origin, ray.dir, field.bbox_min, field.bbox_max, t0, t1)) {
    for (int c = 0; c < 3; ++c) out.rgb[c] = opts.bg[c];
    out.depth = opts.far;
    return out;
  }
  const int n = opts.n_samples;
  const double dt = (t1 - t0) / n;
  double T = 1.0;
  double depth_acc = 0.0;
  for (int k = 0; k < n; ++k) {
    const double s = t0 + (k + rng.uniform()) * dt;
    const Vec3 p = ray.origin + s * ray.dir;
    const TriProbe pr = field.probe(p);
    const double sigma = field.density(pr);
    const double alpha = -std::expm1(-sigma * dt);
    if (alpha <= 0.0) continue;  // unreachable under softplus unless it underflows
    double col[3];
    field.color(pr, col);
    const double w = T * alpha;
    for (int c = 0; c < 3; ++c) out.rgb[c] += w * col[c];
    depth_acc += w * s;
    rec(pr, alpha, col, T, dt);
    T *= 1.0 - alpha;
  }
  for (int c = 0; c < 3; ++c) out.rgb[c] += T * opts.bg[c];
  out.depth = depth_acc + T * opts.far;
  out.opacity = 1.0 - T;
  return out;
}

inline RaySample render_ray(const VoxelField& field, const Ray& ray, Rng& rng,
                            const RenderOptions& opts) {
  return march_ray(field, ray, rng, opts,
                   [](const TriProbe&, double, const double*, double, double) {});
}

struct RenderedRays {
  std::vector<double> colors;  // 3n
  std::vector<double> depths;  // n
  std::vector<double> opacity;  // n
};

inline RenderedRays render_rays(const VoxelField& field, const RayBatch& rays,
                                const RenderOptions& opts) {
  if (opts.n_samples < 2) throw ParameterError("render_rays: n_samples must be >= 2");
  rays.validate();
  const size_t n = rays.size();
  RenderedRays out;
  out.colors.resize(3 * n);
  out.depths.resize(n);
  out.opacity.resize(n);
  parallel_for(n, [&](size_t i) {
    Rng rng(derive_seed(opts.jitter_seed, {kStreamRender, i}));
    const RaySample s = render_ray(field, rays.ray(i), rng, opts);
    for (int c = 0; c < 3; ++c) out.colors[3 * i + c] = s.rgb[c];
    out.depths[i] = s.depth;
    out.opacity[i] = s.opacity;
  });
  return out;
}

// full image grid through pixel centers; per-pixel stratification streams make
// repeat renders with one seed bit-identical and row order irrelevant
inline std::pair<Image, Image> render_image(const VoxelField& field, const Camera& cam,
                                            const RenderOptions& opts) {
  cam.validate();
  if (opts.n_samples < 2) throw ParameterError("render_image: n_samples must be >= 2");
  const int W = cam.width, H = cam.height;
  Image rgb(3, H, W);
  Image depth(1, H, W);
  parallel_for(static_cast<size_t>(H), [&](size_t y) {
    for (int x = 0; x < W; ++x) {
      const size_t pix = y * static_cast<size_t>(W) + x;
      Rng rng(derive_seed(opts.jitter_seed, {kStreamRender, pix}));
      const Ray r = cam.pixel_ray(x + 0.5, static_cast<double>(y) + 0.5);
      const RaySample s = render_ray(field, r, rng, opts);
      for (int c = 0; c < 3; ++c) rgb.at(c, static_cast<int>(y), x) = s.rgb[c];
      depth.at(0, static_cast<int>(y), x) = s.depth;
    }
  });
  return {std::move(rgb), std::move(depth)};
}

}  // namespace fieldsr
