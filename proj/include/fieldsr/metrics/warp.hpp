// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "fieldsr/core/errors.hpp"
#include "fieldsr/core/image.hpp"
#include "fieldsr/radiance/camera.hpp"

namespace fieldsr {

// Cross-view reprojection of an image: each source pixel is lifted to a
// world point by its depth and splatted into the target view.
struct WarpResult {
  Image warped;    // target-shaped, zero outside the mask
  Image mask;      // 1 channel, 1.0 where a source point landed
  double coverage = 0.0;  // masked fraction of target pixels
};

// Depth values are Euclidean distances along the unit pixel ray, matching
// the renderer's expected-termination-distance convention. Backprojects
// every source pixel, projects into the target camera, and rasterizes with
// 1-pixel splats under a z-buffer (nearest point to the target wins; ties
// keep the first source pixel in row-major order). Non-positive or
// non-finite depths are dropped. Empty coverage is not an error.
inline WarpResult warp_view(const Image& img_src, const Image& depth_src,
                            const Camera& cam_src, const Camera& cam_tgt) {
  cam_src.validate();
  cam_tgt.validate();
  if (depth_src.channels() != 1)
    throw ShapeError("warp_view: depth must have 1 channel, got " + depth_src.shape_str());
  if (img_src.height() != depth_src.height() || img_src.width() != depth_src.width())
    throw ShapeError("warp_view: image " + img_src.shape_str() + " vs depth " +
                     depth_src.shape_str());
  if (img_src.height() != cam_src.height || img_src.width() != cam_src.width)
    throw ShapeError("warp_view: image " + img_src.shape_str() +
                     " does not match the source camera resolution");

  const int C = img_src.channels();
  const int Ht = cam_tgt.height, Wt = cam_tgt.width;
  WarpResult out;
  out.warped = Image(C, Ht, Wt, 0.0);
  out.mask = Image(1, Ht, Wt, 0.0);
  std::vector<double> zbuf(static_cast<size_t>(Ht) * Wt,
                           std::numeric_limits<double>::infinity());

  for (int y = 0; y < img_src.height(); ++y) {
    for (int x = 0; x < img_src.width(); ++x) {
      const double d = depth_src.at(0, y, x);
      if (!(d > 0.0) || !std::isfinite(d)) continue;
      const Ray ray = cam_src.pixel_ray(x + 0.5, y + 0.5);
      const Vec3 p{ray.origin.x + d * ray.dir.x, ray.origin.y + d * ray.dir.y,
                   ray.origin.z + d * ray.dir.z};
      const Camera::Projection pr = cam_tgt.project(p);
      if (!pr.in_front) continue;
      const int tx = static_cast<int>(std::floor(pr.u));
      const int ty = static_cast<int>(std::floor(pr.v));
      if (tx < 0 || tx >= Wt || ty < 0 || ty >= Ht) continue;
      const size_t cell = static_cast<size_t>(ty) * Wt + tx;
      if (pr.dist < zbuf[cell]) {
        zbuf[cell] = pr.dist;
        out.mask.at(0, ty, tx) = 1.0;
        for (int c = 0; c < C; ++c) out.warped.at(c, ty, tx) = img_src.at(c, y, x);
      }
    }
  }

  double covered = 0.0;
  for (size_t i = 0; i < out.mask.size(); ++i) covered += out.mask[i];
  out.coverage = covered / static_cast<double>(out.mask.size());
  return out;
}

inline constexpr double kWarpCoverageMin = 0.05;  // below this the score is a missing datum

// Cross-view consistency: warp the render of view v' into view v by its
// depth and compare over the valid mask with a mean absolute difference.
// Lower is more consistent. Callers pick v' as the 3rd-nearest evaluation
// pose (third_nearest_pose below). Coverage under 5% yields no value
// rather than a spuriously good score.
inline std::optional<double> warped_consistency(const Image& render_v, const Image& render_vp,
                                                const Image& depth_vp, const Camera& cam_v,
                                                const Camera& cam_vp) {
  if (render_v.height() != cam_v.height || render_v.width() != cam_v.width)
    throw ShapeError("warped_consistency: render_v " + render_v.shape_str() +
                     " does not match cam_v resolution");
  if (render_v.channels() != render_vp.channels())
    throw ShapeError("warped_consistency: channel mismatch " + render_v.shape_str() + " vs " +
                     render_vp.shape_str());
  const WarpResult w = warp_view(render_vp, depth_vp, cam_vp, cam_v);
  if (w.coverage < kWarpCoverageMin) return std::nullopt;
  const int C = render_v.channels();
  double acc = 0.0;
  double n = 0.0;
  for (int y = 0; y < render_v.height(); ++y)
    for (int x = 0; x < render_v.width(); ++x) {
      if (w.mask.at(0, y, x) == 0.0) continue;
      for (int c = 0; c < C; ++c) acc += std::abs(render_v.at(c, y, x) - w.warped.at(c, y, x));
      n += 1.0;
    }
  return acc / (n * static_cast<double>(C));
}

// Index of the 3rd-nearest camera to cameras[v] by camera-center distance
// (clamped to the farthest available when fewer than 3 others exist).
inline int third_nearest_pose(const std::vector<Camera>& cameras, int v) {
  if (cameras.size() < 2) throw ParameterError("third_nearest_pose: need at least 2 cameras");
  if (v < 0 || v >= static_cast<int>(cameras.size()))
    throw ParameterError("third_nearest_pose: index out of range");
  std::vector<std::pair<double, int>> by_dist;
  by_dist.reserve(cameras.size() - 1);
  for (int i = 0; i < static_cast<int>(cameras.size()); ++i) {
    if (i == v) continue;
    const Vec3 d{cameras[i].t.x - cameras[v].t.x, cameras[i].t.y - cameras[v].t.y,
                 cameras[i].t.z - cameras[v].t.z};
    by_dist.emplace_back(norm(d), i);
  }
  std::sort(by_dist.begin(), by_dist.end());
  const size_t rank = std::min<size_t>(2, by_dist.size() - 1);
  return by_dist[rank].second;
}

}  // namespace fieldsr
