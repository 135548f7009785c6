// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <utility>

#include "fieldsr/core/image.hpp"
#include "fieldsr/core/parallel.hpp"
#include "fieldsr/radiance/camera.hpp"
#include "fieldsr/scenegen/scene.hpp"

namespace fieldsr {

// Reference render: supersample^2 subrays per pixel on a centered grid,
// box-filtered down. Resolution comes from the camera. Deterministic; the
// subray grid at factor s on a 4x camera tiles exactly into the grid at
// factor 4s on the base camera, which is what makes 4x-render-then-box-down
// agree with a direct low-resolution render.
inline std::pair<Image, Image> gt_render(const Scene& scene, const Camera& cam,
                                         int supersample) {
  if (supersample < 1) throw ParameterError("gt_render: supersample must be >= 1");
  cam.validate();
  scene.validate();
  const int W = cam.width, H = cam.height, ss = supersample;
  Image rgb(3, H, W);
  Image depth(1, H, W);
  const double inv = 1.0 / (ss * ss);
  parallel_for(static_cast<size_t>(H), [&](size_t y) {
    for (int x = 0; x < W; ++x) {
      double acc[3] = {0, 0, 0};
      double dacc = 0.0;
      for (int sy = 0; sy < ss; ++sy)
        for (int sx = 0; sx < ss; ++sx) {
          const Ray r = cam.pixel_ray(x + (sx + 0.5) / ss,
                                      static_cast<double>(y) + (sy + 0.5) / ss);
          const GtSample g = gt_ray(scene, r, cam.far);
          for (int c = 0; c < 3; ++c) acc[c] += g.rgb[c];
          dacc += g.depth;
        }
      for (int c = 0; c < 3; ++c) rgb.at(c, static_cast<int>(y), x) = acc[c] * inv;
      depth.at(0, static_cast<int>(y), x) = dacc * inv;
    }
  });
  return {std::move(rgb), std::move(depth)};
}

}  // namespace fieldsr
