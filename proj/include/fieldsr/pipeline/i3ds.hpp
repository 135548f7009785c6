// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "fieldsr/core/png_io.hpp"
#include "fieldsr/distill/rsd.hpp"
#include "fieldsr/metrics/quality.hpp"
#include "fieldsr/metrics/warp.hpp"
#include "fieldsr/radiance/train.hpp"
#include "fieldsr/scenegen/dataset.hpp"

namespace fieldsr {

// Alternating refinement: render every training pose at 4x, refine each
// render against its original LR image, then refit the field on the refined
// set. The two stages never overlap: the field is frozen while residuals
// are optimized, and no residuals exist while the field trains.
struct I3dsConfig {
  int n_cycles = 4;
  int checkpoint_every = 1;  // cycle interval between saved field snapshots
  int patch = 0;             // 0 refines whole images; else tile size (multiple of 4)
  int render_samples = 128;  // per-ray samples for pipeline and report renders
  uint64_t seed = 0;
  DistillConfig distill;
  SyncConfig sync;
  SyncConfig pretrain;
  FieldConfig field;

  void validate(const NoiseSchedule& s) const {
    if (n_cycles < 1) throw ParameterError("I3dsConfig: n_cycles must be >= 1");
    if (checkpoint_every < 1) throw ParameterError("I3dsConfig: checkpoint_every must be >= 1");
    if (patch != 0 && (patch < 8 || patch % 4 != 0))
      throw ParameterError("I3dsConfig: patch must be 0 or a multiple of 4, >= 8");
    if (render_samples < 2) throw ParameterError("I3dsConfig: render_samples must be >= 2");
    distill.validate(s);
    sync.validate();
    pretrain.validate();
  }
};

// Per-cycle evaluation snapshot. wall_seconds is informational process
// state; serialized reports carry only the reproducible fields.
struct CycleReport {
  int cycle = 0;
  std::vector<double> view_sharpness;  // evaluation renders at 4x; empty on rows parsed from disk
  double sharpness_mean = 0.0;
  double warped_consistency = std::numeric_limits<double>::quiet_NaN();
  double lr_consistency_err = 0.0;
  double wall_seconds = 0.0;
};

namespace detail {

inline std::string csv_num(double v) {
  std::ostringstream o;
  o.precision(17);
  o << v;
  return o.str();
}

inline std::string report_row(const CycleReport& r) {
  return std::to_string(r.cycle) + "," + csv_num(r.sharpness_mean) + "," +
         csv_num(r.warped_consistency) + "," + csv_num(r.lr_consistency_err);
}

inline constexpr const char* kReportHeader = "cycle,sharpness_mean,warped_consistency,lr_consistency";

inline Image crop_image(const Image& img, int y0, int x0, int h, int w) {
  Image out(img.channels(), h, w);
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(c, y, x) = img.at(c, y0 + y, x0 + x);
  return out;
}

inline void paste_image(Image& dst, const Image& src, int y0, int x0) {
  for (int c = 0; c < src.channels(); ++c)
    for (int y = 0; y < src.height(); ++y)
      for (int x = 0; x < src.width(); ++x) dst.at(c, y0 + y, x0 + x) = src.at(c, y, x);
}

// tile origins covering [0, len) with stride p; the tail tile is shifted
// flush to the end, so origins stay multiples of 4 when len and p are
inline std::vector<int> tile_offsets(int len, int p) {
  std::vector<int> off;
  for (int o = 0; o + p <= len; o += p) off.push_back(o);
  if (off.empty() || off.back() + p < len) off.push_back(len - p);
  return off;
}

}  // namespace detail

// One Conditioning per training view, anchored to the ORIGINAL LR images.
// Built once per run; every later cycle must observe identical content
// hashes, which pins refinement to the captured data rather than to its
// own previous output.
inline std::vector<Conditioning> build_view_conditioning(const MultiViewDataset& ds,
                                                         const NoiseSchedule& s,
                                                         const DistillConfig& dcfg,
                                                         uint64_t run_seed) {
  const int level = dcfg.lr_noise_level < 0 ? default_lr_noise_level(s) : dcfg.lr_noise_level;
  std::vector<Conditioning> conds;
  conds.reserve(ds.lr_images.size());
  for (size_t v = 0; v < ds.lr_images.size(); ++v) {
    Rng rng(derive_seed(run_seed, {kStreamConditioning, static_cast<uint64_t>(v)}));
    conds.push_back(make_conditioning(s, ds.lr_images[v], level, dcfg.token, rng));
  }
  return conds;
}

// Residual refinement of one 4x render. patch = 0 refines the whole image;
// otherwise a flush tiling is refined tile by tile (the memory-bounded
// path for larger-than-desk resolutions), each tile on its own stream.
inline Image refine_view(const Image& render4, const Conditioning& cond,
                         const DenoiserModel& denoiser, const Codec& codec,
                         const NoiseSchedule& s, const DistillConfig& dcfg, uint64_t run_seed,
                         int cycle, int view, int patch) {
  const uint64_t cy = static_cast<uint64_t>(cycle), vw = static_cast<uint64_t>(view);
  if (patch <= 0 || (patch >= render4.height() && patch >= render4.width()))
    return rsd_upscale_with(render4, cond, denoiser, codec, s, dcfg,
                            derive_seed(run_seed, {kStreamRsd, cy, vw}));

  if (render4.height() % 4 != 0 || render4.width() % 4 != 0)
    throw ShapeError("refine_view: tiled refinement needs dimensions divisible by 4");
  Image out = render4;
  const std::vector<int> ys = detail::tile_offsets(render4.height(), patch);
  const std::vector<int> xs = detail::tile_offsets(render4.width(), patch);
  uint64_t tile = 0;
  for (int y0 : ys)
    for (int x0 : xs) {
      Conditioning tc = cond;
      tc.lr_image = detail::crop_image(cond.lr_image, y0 / 4, x0 / 4, patch / 4, patch / 4);
      const Image refined = rsd_upscale_with(
          detail::crop_image(render4, y0, x0, patch, patch), tc, denoiser, codec, s, dcfg,
          derive_seed(run_seed, {kStreamRsd, cy, vw, tile}));
      detail::paste_image(out, refined, y0, x0);
      ++tile;
    }
  return out;
}

// Upscaling stage: render all training poses at 4x from the frozen field
// and refine each render. All poses are processed before any field update.
inline std::vector<Image> upscale_stage(const VoxelField& field, const MultiViewDataset& ds,
                                        const DenoiserModel& denoiser, const Codec& codec,
                                        const NoiseSchedule& s, const I3dsConfig& cfg,
                                        const std::vector<Conditioning>& conds,
                                        const std::vector<uint64_t>& anchor_hashes, int cycle) {
  if (conds.size() != ds.train_cams.size() || anchor_hashes.size() != conds.size())
    throw ShapeError("upscale_stage: conditioning count does not match training poses");
  RenderOptions ro;
  ro.n_samples = cfg.render_samples;
  ro.bg = ds.scene.bg;
  ro.far = cfg.sync.far;
  std::vector<Image> refined;
  refined.reserve(ds.train_cams.size());
  for (size_t v = 0; v < ds.train_cams.size(); ++v) {
    if (conds[v].content_hash() != anchor_hashes[v])
      throw StateError("upscale_stage: conditioning for view " + std::to_string(v) +
                       " drifted from the original LR image");
    ro.jitter_seed = derive_seed(
        cfg.seed, {kStreamRender, static_cast<uint64_t>(cycle), static_cast<uint64_t>(v)});
    const Image render4 = render_image(field, scale_camera(ds.train_cams[v], 4), ro).first;
    refined.push_back(refine_view(render4, conds[v], denoiser, codec, s, cfg.distill, cfg.seed,
                                  cycle, static_cast<int>(v), cfg.patch));
  }
  return refined;
}

// standalone entry: derives the per-view conditioning itself
inline std::vector<Image> upscale_stage(const VoxelField& field, const MultiViewDataset& ds,
                                        const DenoiserModel& denoiser, const Codec& codec,
                                        const NoiseSchedule& s, const I3dsConfig& cfg,
                                        int cycle = 1) {
  const std::vector<Conditioning> conds = build_view_conditioning(ds, s, cfg.distill, cfg.seed);
  std::vector<uint64_t> hashes;
  hashes.reserve(conds.size());
  for (const Conditioning& c : conds) hashes.push_back(c.content_hash());
  return upscale_stage(field, ds, denoiser, codec, s, cfg, conds, hashes, cycle);
}

// Synchronization stage: refit the field on the refined images. Detail the
// views agree on survives; view-inconsistent detail averages out. Returns
// the per-step loss trace.
inline std::vector<double> sync_stage(VoxelField& field, const std::vector<Image>& refined,
                                      const std::vector<Camera>& cams_4x,
                                      const SyncConfig& cfg) {
  return sync_train(field, refined, cams_4x, cfg);
}

struct I3dsResult {
  VoxelField field;
  std::vector<CycleReport> reports;
};

// Evaluation snapshot of the current field: sharpness and cross-view
// consistency over evaluation poses, LR-consistency over training poses,
// all rendered at 4x the LR resolution.
inline CycleReport make_cycle_report(int cycle, const VoxelField& field,
                                     const MultiViewDataset& ds, const I3dsConfig& cfg) {
  const uint64_t cy = static_cast<uint64_t>(cycle);
  RenderOptions ro;
  ro.n_samples = cfg.render_samples;
  ro.bg = ds.scene.bg;
  ro.far = cfg.sync.far;

  CycleReport r;
  r.cycle = cycle;

  std::vector<Image> rgbs, depths;
  std::vector<Camera> cams4;
  for (size_t e = 0; e < ds.eval_cams.size(); ++e) {
    cams4.push_back(scale_camera(ds.eval_cams[e], 4));
    ro.jitter_seed = derive_seed(cfg.seed, {kStreamValidation, cy, static_cast<uint64_t>(e)});
    auto [rgb, depth] = render_image(field, cams4.back(), ro);
    r.view_sharpness.push_back(sharpness(rgb));
    rgbs.push_back(std::move(rgb));
    depths.push_back(std::move(depth));
  }
  for (double v : r.view_sharpness) r.sharpness_mean += v;
  r.sharpness_mean /= static_cast<double>(r.view_sharpness.size());

  if (cams4.size() >= 2) {
    double acc = 0.0;
    int n = 0;
    for (size_t e = 0; e < cams4.size(); ++e) {
      const int vp = third_nearest_pose(cams4, static_cast<int>(e));
      const auto score =
          warped_consistency(rgbs[e], rgbs[vp], depths[vp], cams4[e], cams4[vp]);
      if (score.has_value()) {
        acc += *score;
        ++n;
      }
    }
    if (n > 0) r.warped_consistency = acc / n;
  }

  double lc = 0.0;
  for (size_t v = 0; v < ds.train_cams.size(); ++v) {
    ro.jitter_seed =
        derive_seed(cfg.seed, {kStreamValidation, cy, static_cast<uint64_t>(v), 1});
    const Image render4 = render_image(field, scale_camera(ds.train_cams[v], 4), ro).first;
    lc += lr_consistency(render4, ds.lr_images[v]);
  }
  r.lr_consistency_err = lc / static_cast<double>(ds.train_cams.size());
  return r;
}

namespace detail {

inline void write_reports_csv(const std::string& path, const std::vector<std::string>& rows) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write " + path);
  f << kReportHeader << "\n";
  for (const std::string& row : rows) f << row << "\n";
}

// keeps raw lines so resumed runs rewrite byte-identical prefixes
inline std::vector<std::string> read_report_rows(const std::string& path, int max_cycle) {
  std::vector<std::string> rows;
  std::ifstream f(path);
  if (!f) return rows;
  std::string line;
  bool first = true;
  while (std::getline(f, line)) {
    if (first) {
      first = false;
      continue;
    }
    if (line.empty()) continue;
    const int cyc = std::stoi(line.substr(0, line.find(',')));
    if (cyc <= max_cycle) rows.push_back(line);
  }
  return rows;
}

inline CycleReport parse_report_row(const std::string& line) {
  CycleReport r;
  std::istringstream ss(line);
  std::string tok;
  std::getline(ss, tok, ',');
  r.cycle = std::stoi(tok);
  std::getline(ss, tok, ',');
  r.sharpness_mean = std::stod(tok);
  std::getline(ss, tok, ',');
  r.warped_consistency = std::stod(tok);
  std::getline(ss, tok, ',');
  r.lr_consistency_err = std::stod(tok);
  return r;
}

inline std::string ckpt_path(const std::string& run_dir, int cycle) {
  return (std::filesystem::path(run_dir) / "ckpt" / ("cycle_" + std::to_string(cycle) + ".field"))
      .string();
}

}  // namespace detail

// Full pipeline. Seeding: every noise stream derives from cfg.seed with
// (stage, cycle, view) tags; the seed fields of the sub-configs are
// overridden here so one seed governs the run. The field is quantized to
// f32 at every cycle boundary whether or not a checkpoint is written, so a
// resumed run is bitwise identical to an uninterrupted one.
//
// run_dir layout (when non-empty): ckpt/cycle_k.field, refined/cycle_k/
// (one PNG per training pose), reports.csv. cycle_0 is the LR-fit
// baseline. An existing run_dir resumes from its highest checkpoint; any
// failure mid-cycle leaves the previous cycle's artifacts intact.
// init_field, when given, replaces the pretraining stage as cycle 0.
inline I3dsResult i3ds_run(const MultiViewDataset& ds, const DenoiserModel& denoiser,
                           const NoiseSchedule& s, I3dsConfig cfg,
                           const std::string& run_dir = "", const Codec* codec = nullptr,
                           const VoxelField* init_field = nullptr) {
  namespace fs = std::filesystem;
  cfg.validate(s);
  ds.validate();
  for (const Image& lr : ds.lr_images)
    if (lr.height() % 4 != 0 || lr.width() % 4 != 0)
      throw ShapeError("i3ds_run: LR resolution must be divisible by 4 for tiling");
  const IdentityCodec identity;
  const Codec& cdc = codec ? *codec : static_cast<const Codec&>(identity);

  cfg.pretrain.seed = cfg.seed;
  cfg.pretrain.bg = ds.scene.bg;
  cfg.sync.bg = ds.scene.bg;

  const bool persist = !run_dir.empty();
  if (persist) {
    fs::create_directories(fs::path(run_dir) / "ckpt");
    fs::create_directories(fs::path(run_dir) / "refined");
  }

  // resume point: highest checkpoint on disk, if any
  int start = -1;
  if (persist)
    for (int k = cfg.n_cycles; k >= 0; --k)
      if (fs::exists(detail::ckpt_path(run_dir, k))) {
        start = k;
        break;
      }

  I3dsResult out;
  std::vector<std::string> rows;
  const std::string reports_path = (fs::path(run_dir) / "reports.csv").string();

  if (start >= 0) {
    out.field = load_field(detail::ckpt_path(run_dir, start));
    rows = detail::read_report_rows(reports_path, start);
    for (const std::string& row : rows) out.reports.push_back(detail::parse_report_row(row));
    detail::write_reports_csv(reports_path, rows);
  } else {
    const auto t0 = std::chrono::steady_clock::now();
    if (init_field) {
      out.field = *init_field;
      out.field.validate();
    } else {
      out.field = pretrain_lr(ds, cfg.field, cfg.pretrain);
    }
    out.field.quantize();
    start = 0;
    if (persist) save_field(out.field, detail::ckpt_path(run_dir, 0));
    CycleReport r0 = make_cycle_report(0, out.field, ds, cfg);
    r0.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rows.push_back(detail::report_row(r0));
    out.reports.push_back(std::move(r0));
    if (persist) detail::write_reports_csv(reports_path, rows);
  }

  const std::vector<Conditioning> conds = build_view_conditioning(ds, s, cfg.distill, cfg.seed);
  std::vector<uint64_t> anchors;
  anchors.reserve(conds.size());
  for (const Conditioning& c : conds) anchors.push_back(c.content_hash());

  std::vector<Camera> train_cams4;
  for (const Camera& c : ds.train_cams) train_cams4.push_back(scale_camera(c, 4));

  for (int k = start + 1; k <= cfg.n_cycles; ++k) {
    const auto t0 = std::chrono::steady_clock::now();

    const std::vector<Image> refined =
        upscale_stage(out.field, ds, denoiser, cdc, s, cfg, conds, anchors, k);
    if (persist) {
      const fs::path dir = fs::path(run_dir) / "refined" / ("cycle_" + std::to_string(k));
      fs::create_directories(dir);
      for (size_t v = 0; v < refined.size(); ++v)
        write_png_rgb8((dir / detail::view_name(static_cast<int>(v))).string(),
                       clamp01(refined[v]));
    }

    SyncConfig scfg = cfg.sync;
    scfg.seed = derive_seed(cfg.seed, {kStreamSync, static_cast<uint64_t>(k)});
    sync_stage(out.field, refined, train_cams4, scfg);
    out.field.quantize();

    if (persist && (k % cfg.checkpoint_every == 0 || k == cfg.n_cycles))
      save_field(out.field, detail::ckpt_path(run_dir, k));

    CycleReport r = make_cycle_report(k, out.field, ds, cfg);
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rows.push_back(detail::report_row(r));
    out.reports.push_back(std::move(r));
    if (persist) detail::write_reports_csv(reports_path, rows);
  }
  return out;
}

}  // namespace fieldsr
