// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "fieldsr/core/resample.hpp"
#include "fieldsr/core/rng.hpp"
#include "fieldsr/metrics/quality.hpp"
#include "fieldsr/metrics/warp.hpp"
#include "fieldsr/scenegen/dataset.hpp"
#include "fieldsr/scenegen/gt_render.hpp"

using namespace fieldsr;

namespace {

Image random_image(int c, int h, int w, uint64_t seed, double lo = 0.0, double hi = 1.0) {
  Rng rng(seed);
  Image img(c, h, w);
  for (size_t i = 0; i < img.size(); ++i) img[i] = rng.uniform(lo, hi);
  return img;
}

Mat3 axis_angle(const Vec3& axis, double angle) {
  const Vec3 a = normalized(axis);
  const double c = std::cos(angle), s = std::sin(angle);
  auto rot = [&](const Vec3& v) {
    return c * v + s * cross(a, v) + ((1.0 - c) * dot(a, v)) * a;
  };
  return Mat3::from_columns(rot({1, 0, 0}), rot({0, 1, 0}), rot({0, 0, 1}));
}

Camera rigid_transform(const Camera& cam, const Mat3& rg, const Vec3& tg) {
  Camera out = cam;
  out.R = rg * cam.R;
  out.t = rg * cam.t + tg;
  return out;
}

}  // namespace

TEST_CASE("psnr matches the direct formula and caps exact matches") {
  const Image a = random_image(3, 8, 8, 101);
  REQUIRE(psnr(a, a) == 99.0);

  Image b = a;
  for (size_t i = 0; i < b.size(); ++i) b[i] = 0.3;
  Image c = a;
  for (size_t i = 0; i < c.size(); ++i) c[i] = 0.4;
  REQUIRE(psnr(b, c) == Catch::Approx(20.0).margin(1e-9));

  const Image d = random_image(3, 8, 8, 102);
  double mse = 0.0;
  for (size_t i = 0; i < a.size(); ++i) mse += (a[i] - d[i]) * (a[i] - d[i]);
  mse /= static_cast<double>(a.size());
  REQUIRE(psnr(a, d) == Catch::Approx(10.0 * std::log10(1.0 / mse)).margin(1e-9));

  REQUIRE_THROWS_AS(psnr(a, Image(3, 8, 9)), ShapeError);
}

TEST_CASE("ssim rewards identity, is symmetric, and punishes negation") {
  const Image a = random_image(3, 24, 24, 201);
  REQUIRE(ssim(a, a) == Catch::Approx(1.0).margin(1e-12));

  const Image b = random_image(3, 24, 24, 202);
  REQUIRE(ssim(a, b) == Catch::Approx(ssim(b, a)).margin(1e-12));

  // bimodal content away from mid-gray so the negative has anticorrelated
  // structure at similar local means
  Rng rng(203);
  Image hi_lo(1, 32, 32);
  for (size_t i = 0; i < hi_lo.size(); ++i)
    hi_lo[i] = rng.uniform() < 0.5 ? rng.uniform(0.0, 0.2) : rng.uniform(0.8, 1.0);
  Image neg = hi_lo;
  for (size_t i = 0; i < neg.size(); ++i) neg[i] = 1.0 - neg[i];
  REQUIRE(ssim(hi_lo, neg) < 0.5);

  REQUIRE_THROWS_AS(ssim(Image(1, 8, 8), Image(1, 8, 8)), ParameterError);
  REQUIRE_THROWS_AS(ssim(a, Image(3, 24, 25)), ShapeError);
}

TEST_CASE("sharpness ranks blurred copies below their originals") {
  REQUIRE(sharpness(Image(3, 16, 16, 0.5)) == 0.0);

  Image checker(1, 16, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) checker.at(0, y, x) = ((x + y) % 2 == 0) ? 1.0 : 0.0;
  REQUIRE(sharpness(checker) > sharpness(Image(1, 16, 16, 0.5)));

  for (uint64_t seed = 0; seed < 20; ++seed) {
    const Image img = random_image(3, 24, 24, 300 + seed);
    REQUIRE(sharpness(img) > sharpness(box_blur(img, 4)));
  }
}

TEST_CASE("lr consistency is zero-preserving under the canonical downsample") {
  // dyadic pixel values keep the 4x box average exact
  Rng rng(401);
  Image lr(3, 6, 6);
  for (size_t i = 0; i < lr.size(); ++i)
    lr[i] = static_cast<double>(rng.uniform_int(64, 192)) / 256.0;

  const Image sr = upsample4_nearest(lr);
  REQUIRE(lr_consistency(sr, lr) == 0.0);

  // zero-mean perturbation balanced inside every 2x2 block
  Image sr_pert = sr;
  const double e = 1.0 / 64.0;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < sr.height(); y += 2)
      for (int x = 0; x < sr.width(); x += 2) {
        sr_pert.at(c, y, x) += e;
        sr_pert.at(c, y, x + 1) -= e;
        sr_pert.at(c, y + 1, x) -= e;
        sr_pert.at(c, y + 1, x + 1) += e;
      }
  REQUIRE(max_abs_diff(sr_pert, sr) == e);
  REQUIRE(lr_consistency(sr_pert, lr) == 0.0);

  REQUIRE_THROWS_AS(lr_consistency(Image(3, 20, 20), Image(3, 6, 6)), ShapeError);
}

TEST_CASE("hr references explain a matching low-resolution render") {
  const Scene scene = gen_scene(7, 2);
  const MultiViewDataset ds = make_dataset(scene, 1, 1, 16, 2);
  const auto [lr_eval, lr_depth] = gt_render(scene, ds.eval_cams[0], 8);
  REQUIRE(lr_consistency(ds.hr_refs[0], lr_eval) <= 1.0 / 255.0);
}

TEST_CASE("identity warp returns the source image on a full mask") {
  const Scene scene = gen_scene(11, 3);
  const Camera cam =
      make_look_at_camera({1.2, 0.6, 0.9}, {0, 0, 0}, {0, 0, 1}, 32.0, 32, 32, 0.5, 4.0);
  const auto [rgb, depth] = gt_render(scene, cam, 2);

  const WarpResult w = warp_view(rgb, depth, cam, cam);
  REQUIRE(w.coverage == 1.0);
  REQUIRE(max_abs_diff(w.warped, rgb) == 0.0);
  for (size_t i = 0; i < w.mask.size(); ++i) REQUIRE(w.mask[i] == 1.0);

  REQUIRE_THROWS_AS(warp_view(rgb, rgb, cam, cam), ShapeError);
  REQUIRE_THROWS_AS(warp_view(rgb, Image(1, 16, 16), cam, cam), ShapeError);
}

TEST_CASE("pure horizontal translation shifts a plane by the stereo disparity") {
  const int res = 32;
  const double f = 32.0, b = 0.1, plane_z = 0.05, eye_z = 1.6;
  const Camera cam_src =
      make_look_at_camera({0, 0, eye_z}, {0, 0, 0}, {0, 1, 0}, f, res, res, 0.1, 8.0);
  const Camera cam_tgt =
      make_look_at_camera({b, 0, eye_z}, {b, 0, 0}, {0, 1, 0}, f, res, res, 0.1, 8.0);

  // coordinate ramps as payload; analytic distance to the z = plane_z plane
  Image img(2, res, res), depth(1, res, res);
  for (int y = 0; y < res; ++y)
    for (int x = 0; x < res; ++x) {
      img.at(0, y, x) = x;
      img.at(1, y, x) = y;
      const Ray r = cam_src.pixel_ray(x + 0.5, y + 0.5);
      depth.at(0, y, x) = (plane_z - eye_z) / r.dir.z;
    }

  const WarpResult w = warp_view(img, depth, cam_src, cam_tgt);
  REQUIRE(w.coverage >= 0.9);
  const double disparity = f * b / (eye_z - plane_z);
  int checked = 0;
  for (int ty = 0; ty < res; ++ty)
    for (int tx = 0; tx < res; ++tx) {
      if (w.mask.at(0, ty, tx) == 0.0) continue;
      const double measured = w.warped.at(0, ty, tx) - tx;
      REQUIRE(std::abs(measured - disparity) <= 0.5 + 1e-9);
      REQUIRE(w.warped.at(1, ty, tx) == static_cast<double>(ty));
      ++checked;
    }
  REQUIRE(checked >= 900);
}

TEST_CASE("z-buffer keeps the nearest source point and first-wins on ties") {
  Camera src;
  src.focal = 2.0;
  src.cx = src.cy = 1.0;
  src.width = src.height = 2;
  src.R = Mat3::identity();
  src.t = {0, 0, 0};
  Camera tgt = src;
  tgt.focal = 1.0;
  tgt.cx = tgt.cy = 0.5;
  tgt.width = tgt.height = 1;

  Image img(1, 2, 2);
  img.at(0, 0, 0) = 0.0;
  img.at(0, 0, 1) = 1.0;
  img.at(0, 1, 0) = 2.0;
  img.at(0, 1, 1) = 3.0;

  Image depth(1, 2, 2, 2.0);
  depth.at(0, 0, 0) = 1.0;  // strictly nearest
  WarpResult w = warp_view(img, depth, src, tgt);
  REQUIRE(w.coverage == 1.0);
  REQUIRE(w.warped.at(0, 0, 0) == 0.0);

  depth.at(0, 0, 0) = 3.0;  // now farthest; remaining three tie at 2.0
  w = warp_view(img, depth, src, tgt);
  REQUIRE(w.warped.at(0, 0, 0) == 1.0);  // first tie in row-major order
}

TEST_CASE("an occluding surface masks warped far content") {
  Scene scene;
  scene.bg = {0.1, 0.1, 0.1};
  Primitive near_box;
  near_box.kind = PrimitiveKind::Box;
  near_box.center = {0, 0, 0.1};
  near_box.size = {0.1, 0.1, 0.02};
  near_box.color = {0.9, 0.1, 0.1};
  near_box.density = 500.0;
  Primitive far_box = near_box;
  far_box.center = {0, 0, -0.3};
  far_box.size = {0.45, 0.45, 0.02};
  far_box.color = {0.1, 0.9, 0.1};
  scene.primitives = {near_box, far_box};
  scene.validate();

  // source is sampled denser than the target so the occluder face has no
  // splat pinholes; far points landing on it must then lose the z-buffer
  const Camera cam_tgt =
      make_look_at_camera({0, 0, 1.6}, {0, 0, 0}, {0, 1, 0}, 48.0, 48, 48, 0.1, 8.0);
  const Camera cam_src =
      make_look_at_camera({0.5, 0.2, 1.5}, {0, 0, 0}, {0, 1, 0}, 96.0, 96, 96, 0.1, 8.0);
  const auto [rgb, depth] = gt_render(scene, cam_src, 2);
  const WarpResult w = warp_view(rgb, depth, cam_src, cam_tgt);

  // behind the near box only near-box points may win the z-buffer
  int center_hits = 0;
  for (int y = 23; y <= 25; ++y)
    for (int x = 23; x <= 25; ++x) {
      if (w.mask.at(0, y, x) == 0.0) continue;
      ++center_hits;
      REQUIRE(w.warped.at(0, y, x) > 0.5);
      REQUIRE(w.warped.at(1, y, x) < 0.5);
    }
  REQUIRE(center_hits >= 1);

  // clear of the occluder the far plane shows through
  int side_hits = 0;
  for (int y = 22; y <= 26; ++y)
    for (int x = 30; x <= 34; ++x) {
      if (w.mask.at(0, y, x) == 0.0) continue;
      ++side_hits;
      REQUIRE(w.warped.at(1, y, x) > 0.5);
      REQUIRE(w.warped.at(0, y, x) < 0.5);
    }
  REQUIRE(side_hits >= 1);
}

TEST_CASE("cross-view consistency scores identity, noise, and empty overlap") {
  const Scene scene = gen_scene(13, 2);
  const Camera cam =
      make_look_at_camera({0.9, -1.1, 0.8}, {0, 0, 0}, {0, 0, 1}, 32.0, 32, 32, 0.5, 4.0);
  const auto [rgb, depth] = gt_render(scene, cam, 2);

  const auto same = warped_consistency(rgb, rgb, depth, cam, cam);
  REQUIRE(same.has_value());
  REQUIRE(*same == 0.0);

  // unrelated noise through an identity warp: mean |U - U'| of independent
  // uniforms is 1/3
  const Camera cam64 =
      make_look_at_camera({0, 0, 1.6}, {0, 0, 0}, {0, 1, 0}, 64.0, 64, 64, 0.1, 8.0);
  const Image na = random_image(3, 64, 64, 501);
  const Image nb = random_image(3, 64, 64, 502);
  const Image flat_depth(1, 64, 64, 1.7);
  const auto noise = warped_consistency(na, nb, flat_depth, cam64, cam64);
  REQUIRE(noise.has_value());
  REQUIRE(*noise == Catch::Approx(1.0 / 3.0).margin(0.01));

  // anti-parallel views share no content: missing datum, not zero
  const Camera cam_away =
      make_look_at_camera({0, 0, 1.6}, {0, 0, 3.2}, {0, 1, 0}, 64.0, 64, 64, 0.1, 8.0);
  const auto off = warped_consistency(na, nb, flat_depth, cam_away, cam64);
  REQUIRE(!off.has_value());
}

TEST_CASE("plane renders stay consistent across nearby views") {
  // striped plane spanning both frusta: exact depths, no disocclusion
  Scene scene;
  scene.bg = {0.1, 0.1, 0.1};
  const Vec3 colors[3] = {{0.2, 0.3, 0.7}, {0.6, 0.5, 0.2}, {0.3, 0.7, 0.4}};
  for (int i = 0; i < 3; ++i) {
    Primitive stripe;
    stripe.kind = PrimitiveKind::Box;
    stripe.center = {-0.3 + 0.3 * i, 0, 0};
    stripe.size = {0.15, 0.45, 0.02};
    stripe.color = colors[i];
    stripe.density = 500.0;
    scene.primitives.push_back(stripe);
  }
  scene.validate();

  const Camera cam_v =
      make_look_at_camera({0, 0, 1.6}, {0, 0, 0}, {0, 1, 0}, 128.0, 64, 64, 0.1, 8.0);
  const Camera cam_vp =
      make_look_at_camera({0.03, 0, 1.6}, {0.03, 0, 0}, {0, 1, 0}, 128.0, 64, 64, 0.1, 8.0);
  const auto [img_v, dep_v] = gt_render(scene, cam_v, 2);
  const auto [img_vp, dep_vp] = gt_render(scene, cam_vp, 2);

  const auto score = warped_consistency(img_v, img_vp, dep_vp, cam_v, cam_vp);
  REQUIRE(score.has_value());
  REQUIRE(*score <= 0.02);

  // invariant under a global rigid transform of both camera frames
  const Mat3 rg = axis_angle({0.3, -0.5, 0.8}, 0.7);
  const Vec3 tg{0.4, -0.2, 0.3};
  const auto moved = warped_consistency(img_v, img_vp, dep_vp, rigid_transform(cam_v, rg, tg),
                                        rigid_transform(cam_vp, rg, tg));
  REQUIRE(moved.has_value());
  REQUIRE(*moved == Catch::Approx(*score).margin(1e-6));
}

TEST_CASE("third-nearest pose selection orders by camera distance") {
  std::vector<Camera> cams;
  for (int k = 0; k < 6; ++k)
    cams.push_back(make_look_at_camera({static_cast<double>(k), 0, 0}, {2.5, 5, 0}, {0, 0, 1},
                                       32.0, 8, 8));
  REQUIRE(third_nearest_pose(cams, 0) == 3);
  REQUIRE(third_nearest_pose(cams, 5) == 2);
  // distance ties resolve by index
  REQUIRE(third_nearest_pose(cams, 2) == 0);

  std::vector<Camera> three(cams.begin(), cams.begin() + 3);
  REQUIRE(third_nearest_pose(three, 0) == 2);  // clamped to the farthest available

  std::vector<Camera> one(cams.begin(), cams.begin() + 1);
  REQUIRE_THROWS_AS(third_nearest_pose(one, 0), ParameterError);
  REQUIRE_THROWS_AS(third_nearest_pose(cams, 6), ParameterError);
}
