// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fieldsr/core/image.hpp"
#include "fieldsr/core/png_io.hpp"
#include "fieldsr/core/resample.hpp"
#include "fieldsr/scenegen/gt_render.hpp"

namespace fieldsr {

// Multi-view capture of one synthetic scene: LR images on the training poses,
// 4x HR references on the evaluation poses (never used for training).
struct MultiViewDataset {
  Scene scene;
  std::vector<Camera> train_cams;  // LR intrinsics
  std::vector<Camera> eval_cams;   // LR intrinsics
  std::vector<Image> lr_images;    // one per training camera
  std::vector<Image> hr_refs;      // one per evaluation camera, 4x resolution
  int lr_res = 64;
  int hr_supersample = 2;
  uint64_t seed = 0;

  void validate() const {
    if (train_cams.size() != lr_images.size())
      throw ShapeError("MultiViewDataset: train cameras and LR images differ in count");
    if (eval_cams.size() != hr_refs.size())
      throw ShapeError("MultiViewDataset: eval cameras and HR references differ in count");
    for (const auto& img : lr_images)
      if (img.height() != lr_res || img.width() != lr_res)
        throw ShapeError("MultiViewDataset: LR image resolution mismatch");
    for (const auto& img : hr_refs)
      if (img.height() != 4 * lr_res || img.width() != 4 * lr_res)
        throw ShapeError("MultiViewDataset: HR reference must be exactly 4x LR");
  }
};

namespace detail {

inline constexpr double kViewRadius = 1.7;
inline constexpr double kCamNear = 0.5;
inline constexpr double kCamFar = 4.0;
inline constexpr double kGoldenAngle = 2.0 * 3.14159265358979323846 * 0.61803398874989485;

inline Camera orbit_camera(double azimuth, double elevation, int res) {
  const Vec3 eye{kViewRadius * std::cos(azimuth) * std::cos(elevation),
                 kViewRadius * std::sin(azimuth) * std::cos(elevation),
                 kViewRadius * std::sin(elevation)};
  return make_look_at_camera(eye, {0, 0, 0}, {0, 0, 1}, static_cast<double>(res), res, res,
                             kCamNear, kCamFar);
}

}  // namespace detail

// training poses: upper-hemisphere spiral (golden-angle azimuths, elevation
// rising 20..65 deg); evaluation poses: circle at 30 deg elevation; every
// optical axis passes through the scene center
inline Camera train_pose(int k, int n_train, int res) {
  const double el_lo = 20.0 * 3.14159265358979323846 / 180.0;
  const double el_hi = 65.0 * 3.14159265358979323846 / 180.0;
  const double u = n_train > 1 ? static_cast<double>(k) / (n_train - 1) : 0.0;
  return detail::orbit_camera(detail::kGoldenAngle * k, el_lo + (el_hi - el_lo) * u, res);
}

inline Camera eval_pose(int k, int n_eval, int res) {
  const double el = 30.0 * 3.14159265358979323846 / 180.0;
  const double az = 2.0 * 3.14159265358979323846 * (k + 0.5) / n_eval;
  return detail::orbit_camera(az, el, res);
}

// LR training images are rendered with 4x the HR supersampling so that a 4x
// box-downsampled HR render of the same pose matches them to rounding
inline MultiViewDataset make_dataset(const Scene& scene, int n_train_views, int n_eval_views,
                                     int lr_res, int hr_supersample = 2) {
  if (n_train_views < 1 || n_eval_views < 1)
    throw ParameterError("make_dataset: view counts must be >= 1");
  if (lr_res < 4) throw ParameterError("make_dataset: lr_res must be >= 4");
  if (hr_supersample < 1) throw ParameterError("make_dataset: hr_supersample must be >= 1");
  scene.validate();

  MultiViewDataset ds;
  ds.scene = scene;
  ds.lr_res = lr_res;
  ds.hr_supersample = hr_supersample;
  ds.seed = scene.seed;
  for (int k = 0; k < n_train_views; ++k) {
    const Camera cam = train_pose(k, n_train_views, lr_res);
    ds.train_cams.push_back(cam);
    ds.lr_images.push_back(gt_render(scene, cam, 4 * hr_supersample).first);
  }
  for (int k = 0; k < n_eval_views; ++k) {
    const Camera cam = eval_pose(k, n_eval_views, lr_res);
    ds.eval_cams.push_back(cam);
    ds.hr_refs.push_back(gt_render(scene, scale_camera(cam, 4), hr_supersample).first);
  }
  ds.validate();
  return ds;
}

namespace detail {

inline nlohmann::json camera_to_json(const Camera& c) {
  nlohmann::json j;
  j["focal"] = c.focal;
  j["cx"] = c.cx;
  j["cy"] = c.cy;
  j["width"] = c.width;
  j["height"] = c.height;
  j["near"] = c.near;
  j["far"] = c.far;
  j["R"] = c.R.m;  // row-major
  j["t"] = {c.t.x, c.t.y, c.t.z};
  return j;
}

inline Camera camera_from_json(const nlohmann::json& j) {
  Camera c;
  c.focal = j.at("focal").get<double>();
  c.cx = j.at("cx").get<double>();
  c.cy = j.at("cy").get<double>();
  c.width = j.at("width").get<int>();
  c.height = j.at("height").get<int>();
  c.near = j.at("near").get<double>();
  c.far = j.at("far").get<double>();
  c.R.m = j.at("R").get<std::array<double, 9>>();
  const auto t = j.at("t").get<std::array<double, 3>>();
  c.t = {t[0], t[1], t[2]};
  c.validate();
  return c;
}

inline nlohmann::json scene_to_json(const Scene& s) {
  nlohmann::json j;
  j["seed"] = s.seed;
  j["bg"] = {s.bg.x, s.bg.y, s.bg.z};
  j["primitives"] = nlohmann::json::array();
  for (const auto& p : s.primitives) {
    nlohmann::json pj;
    pj["kind"] = p.kind == PrimitiveKind::Sphere ? "sphere" : "box";
    pj["center"] = {p.center.x, p.center.y, p.center.z};
    pj["size"] = {p.size.x, p.size.y, p.size.z};
    pj["color"] = {p.color.x, p.color.y, p.color.z};
    pj["density"] = p.density;
    j["primitives"].push_back(pj);
  }
  return j;
}

inline Scene scene_from_json(const nlohmann::json& j) {
  Scene s;
  s.seed = j.at("seed").get<uint64_t>();
  auto bg = j.at("bg").get<std::array<double, 3>>();
  s.bg = {bg[0], bg[1], bg[2]};
  for (const auto& pj : j.at("primitives")) {
    Primitive p;
    const std::string kind = pj.at("kind").get<std::string>();
    if (kind == "sphere")
      p.kind = PrimitiveKind::Sphere;
    else if (kind == "box")
      p.kind = PrimitiveKind::Box;
    else
      throw IoError("dataset: unknown primitive kind '" + kind + "'");
    auto c = pj.at("center").get<std::array<double, 3>>();
    auto sz = pj.at("size").get<std::array<double, 3>>();
    auto col = pj.at("color").get<std::array<double, 3>>();
    p.center = {c[0], c[1], c[2]};
    p.size = {sz[0], sz[1], sz[2]};
    p.color = {col[0], col[1], col[2]};
    p.density = pj.at("density").get<double>();
    s.primitives.push_back(p);
  }
  s.validate();
  return s;
}

inline std::string view_name(int k) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d.png", k);
  return buf;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << j.dump(2) << "\n";
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read " + path.string());
  nlohmann::json j;
  is >> j;
  return j;
}

}  // namespace detail

// Layout: poses.json (intrinsics + world-from-camera per split), lr/0000.png..,
// hr_ref/0000.png.., meta.json (seed, resolutions, splits, scene description).
inline void save_dataset(const MultiViewDataset& ds, const std::string& dir) {
  ds.validate();
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "lr");
  fs::create_directories(fs::path(dir) / "hr_ref");

  nlohmann::json poses;
  poses["train"] = nlohmann::json::array();
  for (const auto& c : ds.train_cams) poses["train"].push_back(detail::camera_to_json(c));
  poses["eval"] = nlohmann::json::array();
  for (const auto& c : ds.eval_cams) poses["eval"].push_back(detail::camera_to_json(c));
  detail::write_json(fs::path(dir) / "poses.json", poses);

  nlohmann::json meta;
  meta["format"] = "fieldsr-dataset-v1";
  meta["seed"] = ds.seed;
  meta["lr_res"] = ds.lr_res;
  meta["hr_res"] = 4 * ds.lr_res;
  meta["n_train"] = ds.train_cams.size();
  meta["n_eval"] = ds.eval_cams.size();
  meta["hr_supersample"] = ds.hr_supersample;
  meta["scene"] = detail::scene_to_json(ds.scene);
  detail::write_json(fs::path(dir) / "meta.json", meta);

  for (size_t k = 0; k < ds.lr_images.size(); ++k)
    write_png_rgb8((fs::path(dir) / "lr" / detail::view_name(static_cast<int>(k))).string(),
                   ds.lr_images[k]);
  for (size_t k = 0; k < ds.hr_refs.size(); ++k)
    write_png_rgb8((fs::path(dir) / "hr_ref" / detail::view_name(static_cast<int>(k))).string(),
                   ds.hr_refs[k]);
}

inline MultiViewDataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  const nlohmann::json meta = detail::read_json(fs::path(dir) / "meta.json");
  if (meta.at("format").get<std::string>() != "fieldsr-dataset-v1")
    throw IoError("load_dataset: unrecognized dataset format in " + dir);
  MultiViewDataset ds;
  ds.seed = meta.at("seed").get<uint64_t>();
  ds.lr_res = meta.at("lr_res").get<int>();
  ds.hr_supersample = meta.at("hr_supersample").get<int>();
  ds.scene = detail::scene_from_json(meta.at("scene"));

  const nlohmann::json poses = detail::read_json(fs::path(dir) / "poses.json");
  for (const auto& cj : poses.at("train")) ds.train_cams.push_back(detail::camera_from_json(cj));
  for (const auto& cj : poses.at("eval")) ds.eval_cams.push_back(detail::camera_from_json(cj));

  for (size_t k = 0; k < ds.train_cams.size(); ++k)
    ds.lr_images.push_back(
        read_png_rgb8((fs::path(dir) / "lr" / detail::view_name(static_cast<int>(k))).string()));
  for (size_t k = 0; k < ds.eval_cams.size(); ++k)
    ds.hr_refs.push_back(read_png_rgb8(
        (fs::path(dir) / "hr_ref" / detail::view_name(static_cast<int>(k))).string()));
  ds.validate();
  return ds;
}

}  // namespace fieldsr
