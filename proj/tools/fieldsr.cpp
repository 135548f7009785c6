// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Every subcommand reads one flat key/value config
// assembled from built-in defaults, an optional JSON file (--config), named
// flags, and repeatable --set KEY=VALUE overrides, in that order of
// precedence (later wins). The fully resolved config is echoed to the output
// directory as config.json, so a finished run documents itself.
//
// Exit codes: 0 success, 2 usage or config error (nothing written), 3
// runtime failure (partial artifacts such as checkpoints are retained).

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <list>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fieldsr/core/errors.hpp"
#include "fieldsr/core/image.hpp"
#include "fieldsr/core/parallel.hpp"
#include "fieldsr/core/png_io.hpp"
#include "fieldsr/core/resample.hpp"
#include "fieldsr/core/rng.hpp"
#include "fieldsr/denoiser/checkpoint.hpp"
#include "fieldsr/denoiser/train.hpp"
#include "fieldsr/diffusion/schedule.hpp"
#include "fieldsr/distill/compare2d.hpp"
#include "fieldsr/distill/config.hpp"
#include "fieldsr/metrics/quality.hpp"
#include "fieldsr/metrics/warp.hpp"
#include "fieldsr/pipeline/i3ds.hpp"
#include "fieldsr/radiance/camera.hpp"
#include "fieldsr/radiance/field.hpp"
#include "fieldsr/radiance/render.hpp"
#include "fieldsr/radiance/train.hpp"
#include "fieldsr/scenegen/dataset.hpp"
#include "fieldsr/scenegen/scene.hpp"

namespace {

using namespace fieldsr;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// flat config

struct CliConfig {
  uint64_t seed = 0;
  int threads = 0;  // 0 keeps the library's hardware default
  std::string out;

  std::string dataset_dir;
  int ds_objects = 4;
  int ds_train_views = 24;
  int ds_eval_views = 100;
  int ds_lr_res = 64;
  int ds_hr_supersample = 2;

  int sched_T = 256;
  double sched_beta_start = 1e-4;
  double sched_beta_end = 2e-2;
  std::string sched_kind = "linear";

  std::string den_ckpt;
  int den_epochs = 30;
  int den_steps_per_epoch = 100;
  int den_batch = 4;
  int den_patch = 32;
  int den_patches = 256;
  int den_channels = 12;
  int den_hidden = 2;
  int den_tokens = 4;
  int den_emb_dim = 12;
  int den_lr_noise_level = -1;
  int den_token = 1;
  double den_lr = 1e-3;
  double den_val_fraction = 0.1;

  int dist_steps = 512;
  double dist_lr = 1e-2;
  std::string dist_norm = "l1";
  bool dist_detach = true;
  bool dist_shared_eps = true;
  int dist_t_min = -1;
  int dist_t_max = -1;
  int dist_token = 1;
  int dist_lr_noise_level = -1;

  int rad_resolution = 96;
  int rad_render_samples = 128;
  double rad_far = 4.0;

  int sync_steps = 4000;
  int sync_rays = 1024;
  double sync_lr = 0.3;
  int sync_samples = 128;
  std::string sync_loss = "l1";

  int pre_steps = 4000;
  int pre_rays = 1024;
  double pre_lr = 0.3;
  int pre_samples = 128;

  int pipe_cycles = 4;
  int pipe_checkpoint_every = 1;
  int pipe_patch = 0;
  std::string init_field;

  std::string up_image;
  std::string up_methods = "ancestral,sds,rsd";

  std::string eval_run;
  int eval_poses = -1;  // -1 uses every evaluation pose in the dataset
  int eval_views_shown = 4;
  int eval_cycle = -1;  // -1 picks the highest saved cycle checkpoint
};

enum class KeyKind { U64, Int, Dbl, Str, Bool };

struct KeyBinding {
  const char* key;
  KeyKind kind;
  void* p;
};

std::vector<KeyBinding> key_bindings(CliConfig& c) {
  return {
      {"seed", KeyKind::U64, &c.seed},
      {"threads", KeyKind::Int, &c.threads},
      {"out", KeyKind::Str, &c.out},
      {"dataset.dir", KeyKind::Str, &c.dataset_dir},
      {"dataset.objects", KeyKind::Int, &c.ds_objects},
      {"dataset.train_views", KeyKind::Int, &c.ds_train_views},
      {"dataset.eval_views", KeyKind::Int, &c.ds_eval_views},
      {"dataset.lr_res", KeyKind::Int, &c.ds_lr_res},
      {"dataset.hr_supersample", KeyKind::Int, &c.ds_hr_supersample},
      {"schedule.T", KeyKind::Int, &c.sched_T},
      {"schedule.beta_start", KeyKind::Dbl, &c.sched_beta_start},
      {"schedule.beta_end", KeyKind::Dbl, &c.sched_beta_end},
      {"schedule.kind", KeyKind::Str, &c.sched_kind},
      {"denoiser.ckpt", KeyKind::Str, &c.den_ckpt},
      {"denoiser.epochs", KeyKind::Int, &c.den_epochs},
      {"denoiser.steps_per_epoch", KeyKind::Int, &c.den_steps_per_epoch},
      {"denoiser.batch", KeyKind::Int, &c.den_batch},
      {"denoiser.patch", KeyKind::Int, &c.den_patch},
      {"denoiser.patches", KeyKind::Int, &c.den_patches},
      {"denoiser.channels", KeyKind::Int, &c.den_channels},
      {"denoiser.hidden", KeyKind::Int, &c.den_hidden},
      {"denoiser.tokens", KeyKind::Int, &c.den_tokens},
      {"denoiser.emb_dim", KeyKind::Int, &c.den_emb_dim},
      {"denoiser.lr_noise_level", KeyKind::Int, &c.den_lr_noise_level},
      {"denoiser.token", KeyKind::Int, &c.den_token},
      {"denoiser.lr", KeyKind::Dbl, &c.den_lr},
      {"denoiser.val_fraction", KeyKind::Dbl, &c.den_val_fraction},
      {"distill.steps", KeyKind::Int, &c.dist_steps},
      {"distill.lr", KeyKind::Dbl, &c.dist_lr},
      {"distill.norm", KeyKind::Str, &c.dist_norm},
      {"distill.detach", KeyKind::Bool, &c.dist_detach},
      {"distill.shared_eps", KeyKind::Bool, &c.dist_shared_eps},
      {"distill.t_min", KeyKind::Int, &c.dist_t_min},
      {"distill.t_max", KeyKind::Int, &c.dist_t_max},
      {"distill.token", KeyKind::Int, &c.dist_token},
      {"distill.lr_noise_level", KeyKind::Int, &c.dist_lr_noise_level},
      {"radiance.resolution", KeyKind::Int, &c.rad_resolution},
      {"radiance.render_samples", KeyKind::Int, &c.rad_render_samples},
      {"radiance.far", KeyKind::Dbl, &c.rad_far},
      {"sync.steps", KeyKind::Int, &c.sync_steps},
      {"sync.rays", KeyKind::Int, &c.sync_rays},
      {"sync.lr", KeyKind::Dbl, &c.sync_lr},
      {"sync.samples", KeyKind::Int, &c.sync_samples},
      {"sync.loss", KeyKind::Str, &c.sync_loss},
      {"pretrain.steps", KeyKind::Int, &c.pre_steps},
      {"pretrain.rays", KeyKind::Int, &c.pre_rays},
      {"pretrain.lr", KeyKind::Dbl, &c.pre_lr},
      {"pretrain.samples", KeyKind::Int, &c.pre_samples},
      {"pipeline.cycles", KeyKind::Int, &c.pipe_cycles},
      {"pipeline.checkpoint_every", KeyKind::Int, &c.pipe_checkpoint_every},
      {"pipeline.patch", KeyKind::Int, &c.pipe_patch},
      {"init_field", KeyKind::Str, &c.init_field},
      {"upscale2d.image", KeyKind::Str, &c.up_image},
      {"upscale2d.methods", KeyKind::Str, &c.up_methods},
      {"eval.run", KeyKind::Str, &c.eval_run},
      {"eval.poses", KeyKind::Int, &c.eval_poses},
      {"eval.views_shown", KeyKind::Int, &c.eval_views_shown},
      {"eval.cycle", KeyKind::Int, &c.eval_cycle},
  };
}

void set_from_string(const KeyBinding& b, const std::string& raw) {
  try {
    switch (b.kind) {
      case KeyKind::U64: {
        size_t pos = 0;
        const unsigned long long v = std::stoull(raw, &pos);
        if (pos != raw.size()) throw std::invalid_argument(raw);
        *static_cast<uint64_t*>(b.p) = v;
        return;
      }
      case KeyKind::Int: {
        size_t pos = 0;
        const int v = std::stoi(raw, &pos);
        if (pos != raw.size()) throw std::invalid_argument(raw);
        *static_cast<int*>(b.p) = v;
        return;
      }
      case KeyKind::Dbl: {
        size_t pos = 0;
        const double v = std::stod(raw, &pos);
        if (pos != raw.size()) throw std::invalid_argument(raw);
        *static_cast<double*>(b.p) = v;
        return;
      }
      case KeyKind::Bool: {
        if (raw == "true" || raw == "1") {
          *static_cast<bool*>(b.p) = true;
        } else if (raw == "false" || raw == "0") {
          *static_cast<bool*>(b.p) = false;
        } else {
          throw std::invalid_argument(raw);
        }
        return;
      }
      case KeyKind::Str:
        *static_cast<std::string*>(b.p) = raw;
        return;
    }
  } catch (const std::exception&) {
    throw ParameterError("config key '" + std::string(b.key) + "': cannot parse value '" + raw +
                         "'");
  }
}

void set_from_json(const KeyBinding& b, const nlohmann::json& v) {
  switch (b.kind) {
    case KeyKind::U64:
      if (!v.is_number_integer() && !v.is_number_unsigned())
        throw ParameterError("config key '" + std::string(b.key) + "': expected an integer");
      if (v.is_number_integer() && v.get<int64_t>() < 0)
        throw ParameterError("config key '" + std::string(b.key) + "': expected >= 0");
      *static_cast<uint64_t*>(b.p) = v.get<uint64_t>();
      return;
    case KeyKind::Int:
      if (!v.is_number_integer() && !v.is_number_unsigned())
        throw ParameterError("config key '" + std::string(b.key) + "': expected an integer");
      *static_cast<int*>(b.p) = v.get<int>();
      return;
    case KeyKind::Dbl:
      if (!v.is_number())
        throw ParameterError("config key '" + std::string(b.key) + "': expected a number");
      *static_cast<double*>(b.p) = v.get<double>();
      return;
    case KeyKind::Bool:
      if (!v.is_boolean())
        throw ParameterError("config key '" + std::string(b.key) + "': expected true/false");
      *static_cast<bool*>(b.p) = v.get<bool>();
      return;
    case KeyKind::Str:
      if (!v.is_string())
        throw ParameterError("config key '" + std::string(b.key) + "': expected a string");
      *static_cast<std::string*>(b.p) = v.get<std::string>();
      return;
  }
}

const KeyBinding& find_binding(std::vector<KeyBinding>& bs, const std::string& key) {
  for (const KeyBinding& b : bs)
    if (key == b.key) return b;
  throw ParameterError("unknown config key '" + key + "'");
}

void load_config_file(CliConfig& c, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParameterError("cannot open config file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ParameterError("config file " + path + ": " + e.what());
  }
  if (!j.is_object()) throw ParameterError("config file " + path + ": expected a JSON object");
  auto bs = key_bindings(c);
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() == "command") continue;  // echoed configs reload cleanly
    set_from_json(find_binding(bs, it.key()), it.value());
  }
}

nlohmann::json resolved_json(const CliConfig& cfg, const std::string& cmd) {
  CliConfig c = cfg;  // bindings want mutable access
  nlohmann::json j = nlohmann::json::object();
  j["command"] = cmd;
  for (const KeyBinding& b : key_bindings(c)) {
    switch (b.kind) {
      case KeyKind::U64: j[b.key] = *static_cast<uint64_t*>(b.p); break;
      case KeyKind::Int: j[b.key] = *static_cast<int*>(b.p); break;
      case KeyKind::Dbl: j[b.key] = *static_cast<double*>(b.p); break;
      case KeyKind::Bool: j[b.key] = *static_cast<bool*>(b.p); break;
      case KeyKind::Str: j[b.key] = *static_cast<std::string*>(b.p); break;
    }
  }
  return j;
}

void write_resolved_config(const std::string& dir, const CliConfig& cfg, const std::string& cmd) {
  fs::create_directories(dir);
  std::ofstream out(fs::path(dir) / "config.json", std::ios::trunc);
  if (!out) throw IoError("cannot write " + (fs::path(dir) / "config.json").string());
  out << resolved_json(cfg, cmd).dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// flag plumbing: every flag funnels into the same key table as --set

struct Flags {
  struct Item {
    CLI::Option* opt = nullptr;
    const char* key;
    std::string val;
  };
  std::list<Item> items;  // list: stable addresses for CLI11 bindings
  std::vector<std::string> sets;
  std::string config_path;

  void bind(CLI::App* sub, const std::string& flag, const char* key, const std::string& help) {
    items.push_back({nullptr, key, {}});
    Item& it = items.back();
    it.opt = sub->add_option(flag, it.val, help);
  }

  // named flags first, --set last, so --set wins on a key collision
  std::vector<std::pair<std::string, std::string>> collected() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const Item& it : items)
      if (it.opt->count() > 0) out.emplace_back(it.key, it.val);
    for (const std::string& kv : sets) {
      const size_t eq = kv.find('=');
      if (eq == std::string::npos || eq == 0)
        throw ParameterError("--set expects KEY=VALUE, got '" + kv + "'");
      out.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
    }
    return out;
  }
};

void add_common_flags(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config_path, "flat JSON config file applied before flags");
  sub->add_option("--set", f.sets, "KEY=VALUE config override, repeatable, applied last")
      ->type_name("KEY=VALUE");
  f.bind(sub, "--seed", "seed", "base RNG seed for every derived stream");
  f.bind(sub, "--out", "out", "output directory");
  f.bind(sub, "--threads", "threads", "worker thread cap (0 = hardware default)");
}

// ---------------------------------------------------------------------------
// small shared helpers

NoiseSchedule schedule_of(const CliConfig& c) {
  return make_schedule(c.sched_T, c.sched_beta_start, c.sched_beta_end,
                       schedule_kind_from_name(c.sched_kind));
}

ConvSpec conv_spec_of(const CliConfig& c) {
  ConvSpec spec;
  spec.channels = c.den_channels;
  spec.n_hidden = c.den_hidden;
  spec.n_tokens = c.den_tokens;
  spec.emb_dim = c.den_emb_dim;
  return spec;
}

DistillConfig distill_of(const CliConfig& c) {
  DistillConfig d;
  d.learning_rate = c.dist_lr;
  d.loss_norm = loss_norm_from_name(c.dist_norm);
  d.detach_prediction = c.dist_detach;
  d.shared_eps = c.dist_shared_eps;
  d.steps = c.dist_steps;
  d.t_min = c.dist_t_min;
  d.t_max = c.dist_t_max;
  d.token = c.dist_token;
  d.lr_noise_level = c.dist_lr_noise_level;
  d.seed = c.seed;
  return d;
}

SyncConfig sync_of(const CliConfig& c) {
  SyncConfig s;
  s.steps = c.sync_steps;
  s.rays_per_step = c.sync_rays;
  s.learning_rate = c.sync_lr;
  s.n_samples = c.sync_samples;
  s.far = c.rad_far;
  s.loss = loss_norm_from_name(c.sync_loss);
  s.seed = c.seed;
  return s;
}

SyncConfig pretrain_of(const CliConfig& c) {
  SyncConfig s = sync_of(c);
  s.steps = c.pre_steps;
  s.rays_per_step = c.pre_rays;
  s.learning_rate = c.pre_lr;
  s.n_samples = c.pre_samples;
  return s;
}

FieldConfig field_of(const CliConfig& c) {
  FieldConfig f;
  f.resolution = c.rad_resolution;
  return f;
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ParameterError(msg);
}

void require_dataset_dir(const std::string& dir) {
  require(!dir.empty(), "dataset.dir is required (--dataset)");
  require(fs::exists(fs::path(dir) / "meta.json"),
          "dataset directory " + dir + " has no meta.json");
}

void require_file(const std::string& path, const std::string& what) {
  require(!path.empty(), what + " is required");
  require(fs::exists(path), what + " " + path + " does not exist");
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ','))
    if (!cur.empty()) out.push_back(cur);
  return out;
}

std::string epoch_row(const EpochStat& st) {
  std::ostringstream os;
  os << st.epoch << "," << detail::csv_num(st.train_loss) << "," << detail::csv_num(st.val_loss)
     << "," << detail::csv_num(st.zero_val_loss);
  return os.str();
}

// raw loss.csv rows from a previous leg of the same run, up to (not
// including) epoch `limit`; kept verbatim so resumed runs rewrite the file
// byte-identically
std::vector<std::string> read_epoch_rows(const std::string& path, int limit) {
  std::vector<std::string> rows;
  std::ifstream in(path);
  if (!in) return rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (first) {
      first = false;
      continue;
    }
    if (line.empty()) continue;
    int epoch = -1;
    try {
      epoch = std::stoi(line.substr(0, line.find(',')));
    } catch (const std::exception&) {
      continue;
    }
    if (epoch < limit) rows.push_back(line);
  }
  return rows;
}

void write_csv(const std::string& path, const std::string& header,
               const std::vector<std::string>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << header << "\n";
  for (const std::string& r : rows) out << r << "\n";
}

// ---------------------------------------------------------------------------
// subcommand setup (config errors, exit 2) and execution (runtime, exit 3)

using Runner = std::function<void()>;

Runner setup_gen_scene(const CliConfig& cfg) {
  require(!cfg.out.empty(), "an output directory is required (--out)");
  require(cfg.ds_objects >= 1, "dataset.objects must be >= 1");
  require(cfg.ds_train_views >= 1 && cfg.ds_eval_views >= 1, "view counts must be >= 1");
  require(cfg.ds_lr_res >= 4, "dataset.lr_res must be >= 4");
  require(cfg.ds_hr_supersample >= 1, "dataset.hr_supersample must be >= 1");
  return [cfg] {
    const Scene scene = gen_scene(cfg.seed, cfg.ds_objects);
    const MultiViewDataset ds = make_dataset(scene, cfg.ds_train_views, cfg.ds_eval_views,
                                             cfg.ds_lr_res, cfg.ds_hr_supersample);
    save_dataset(ds, cfg.out);
    write_resolved_config(cfg.out, cfg, "gen-scene");
    std::cout << "dataset " << cfg.out << ": " << ds.train_cams.size() << " train views at "
              << ds.lr_res << "px, " << ds.eval_cams.size() << " eval views at " << 4 * ds.lr_res
              << "px\n";
  };
}

Runner setup_train_denoiser(const CliConfig& cfg) {
  require(!cfg.out.empty(), "an output directory is required (--out)");
  require_dataset_dir(cfg.dataset_dir);
  const NoiseSchedule s = schedule_of(cfg);
  DenoiserTrainConfig tcfg;
  tcfg.conv = conv_spec_of(cfg);
  tcfg.epochs = cfg.den_epochs;
  tcfg.steps_per_epoch = cfg.den_steps_per_epoch;
  tcfg.batch_size = cfg.den_batch;
  tcfg.lr_noise_level = cfg.den_lr_noise_level;
  tcfg.token = cfg.den_token;
  tcfg.val_fraction = cfg.den_val_fraction;
  tcfg.adam.lr = cfg.den_lr;
  tcfg.seed = cfg.seed;
  tcfg.validate();
  tcfg.resolved_lr_noise_level(s);
  require(cfg.den_patch >= 4 && cfg.den_patch % 4 == 0,
          "denoiser.patch must be a positive multiple of 4");
  require(cfg.den_patches >= 1, "denoiser.patches must be >= 1");
  return [cfg, s, tcfg] {
    const MultiViewDataset ds = load_dataset(cfg.dataset_dir);
    const PatchCorpus corpus =
        extract_patch_corpus(ds.hr_refs, cfg.den_patch, cfg.den_patches, cfg.seed);
    const std::string ckpt = (fs::path(cfg.out) / "denoiser.ckpt").string();
    const std::string csv = (fs::path(cfg.out) / "loss.csv").string();
    write_resolved_config(cfg.out, cfg, "train-denoiser");

    std::optional<DenoiserTrainState> state;
    if (fs::exists(ckpt)) {
      state.emplace(load_denoiser_checkpoint(ckpt, s.hash()));
      if (state->model.spec().to_config() != tcfg.conv.to_config())
        throw StateError("denoiser checkpoint architecture differs from the configured one");
    } else {
      state.emplace(tcfg.conv, cfg.seed, tcfg.adam);
    }

    std::vector<std::string> rows = read_epoch_rows(csv, state->next_epoch);
    if (state->next_epoch >= tcfg.epochs) {
      std::cout << "checkpoint already at epoch " << state->next_epoch << ", nothing to train\n";
      return;
    }
    for (int e = state->next_epoch; e < tcfg.epochs; ++e) {
      std::vector<EpochStat> curve;
      train_denoiser_epochs(*state, corpus, s, tcfg, e + 1, curve);
      for (const EpochStat& st : curve) rows.push_back(epoch_row(st));
      save_denoiser_checkpoint(ckpt, *state, s.hash());
      write_csv(csv, "epoch,train_loss,val_loss,zero_val_loss", rows);
      const EpochStat& st = curve.back();
      std::cout << "epoch " << st.epoch << ": train " << st.train_loss << " val " << st.val_loss
                << " (zero baseline " << st.zero_val_loss << ")\n";
    }
    std::cout << "checkpoint " << ckpt << "\n";
  };
}

Runner setup_pretrain_lr(const CliConfig& cfg) {
  require(!cfg.out.empty(), "an output directory is required (--out)");
  require_dataset_dir(cfg.dataset_dir);
  const FieldConfig fc = field_of(cfg);
  SyncConfig pc = pretrain_of(cfg);
  pc.validate();
  require(cfg.rad_resolution >= 2, "radiance.resolution must be >= 2");
  require(cfg.rad_render_samples >= 2, "radiance.render_samples must be >= 2");
  return [cfg, fc, pc] {
    const MultiViewDataset ds = load_dataset(cfg.dataset_dir);
    write_resolved_config(cfg.out, cfg, "pretrain-lr");
    const VoxelField field = pretrain_lr(ds, fc, pc);
    const std::string path = (fs::path(cfg.out) / "field_lr.field").string();
    save_field(field, path);

    RenderOptions ro;
    ro.n_samples = cfg.rad_render_samples;
    ro.bg = ds.scene.bg;
    ro.far = cfg.rad_far;
    double acc = 0.0;
    for (size_t v = 0; v < ds.train_cams.size(); ++v) {
      ro.jitter_seed = derive_seed(cfg.seed, {kStreamValidation, 0, v});
      acc += psnr(render_image(field, ds.train_cams[v], ro).first, ds.lr_images[v]);
    }
    std::cout << "field " << path << ": train-view PSNR "
              << acc / static_cast<double>(ds.train_cams.size()) << " dB\n";
  };
}

Runner setup_upscale2d(const CliConfig& cfg) {
  require(!cfg.out.empty(), "an output directory is required (--out)");
  require_file(cfg.up_image, "upscale2d.image (--image)");
  require_file(cfg.den_ckpt, "denoiser.ckpt (--ckpt)");
  const NoiseSchedule s = schedule_of(cfg);
  const DistillConfig dcfg = distill_of(cfg);
  dcfg.validate(s);
  const std::vector<std::string> methods = split_csv(cfg.up_methods);
  require(!methods.empty(), "upscale2d.methods must name at least one method");
  for (const std::string& m : methods) {
    const auto& known = compare_method_names();
    if (std::find(known.begin(), known.end(), m) == known.end())
      throw ParameterError("unknown method '" + m + "'; available: ancestral, sds, rsd");
  }
  return [cfg, s, dcfg, methods] {
    const Image lr = read_png_rgb8(cfg.up_image);
    const DenoiserTrainState state = load_denoiser_checkpoint(cfg.den_ckpt, s.hash());
    const IdentityCodec codec;
    const CompareResult res = upscale2d_compare(lr, methods, state.model, codec, s, dcfg);
    write_resolved_config(cfg.out, cfg, "upscale2d");
    for (const std::string& m : methods)
      write_png_rgb8((fs::path(cfg.out) / (m + ".png")).string(), clamp01(res.images.at(m)));
    std::vector<std::string> rows;
    for (const CompareRow& r : res.rows) {
      std::ostringstream os;
      os << r.method << "," << r.seed << "," << detail::csv_num(r.sharpness) << ","
         << detail::csv_num(r.lr_consistency);
      rows.push_back(os.str());
    }
    write_csv((fs::path(cfg.out) / "metrics.csv").string(), CompareResult::csv_header(), rows);
    std::cout << CompareResult::csv_header() << "\n";
    for (const std::string& r : rows) std::cout << r << "\n";
  };
}

Runner setup_i3ds(const CliConfig& cfg) {
  require(!cfg.out.empty(), "an output directory is required (--out)");
  require_dataset_dir(cfg.dataset_dir);
  require_file(cfg.den_ckpt, "denoiser.ckpt (--ckpt)");
  if (!cfg.init_field.empty()) require_file(cfg.init_field, "init_field");
  const NoiseSchedule s = schedule_of(cfg);
  I3dsConfig icfg;
  icfg.n_cycles = cfg.pipe_cycles;
  icfg.checkpoint_every = cfg.pipe_checkpoint_every;
  icfg.patch = cfg.pipe_patch;
  icfg.render_samples = cfg.rad_render_samples;
  icfg.seed = cfg.seed;
  icfg.distill = distill_of(cfg);
  icfg.sync = sync_of(cfg);
  icfg.pretrain = pretrain_of(cfg);
  icfg.field = field_of(cfg);
  icfg.validate(s);
  return [cfg, s, icfg] {
    const MultiViewDataset ds = load_dataset(cfg.dataset_dir);
    const DenoiserTrainState state = load_denoiser_checkpoint(cfg.den_ckpt, s.hash());
    std::optional<VoxelField> init;
    if (!cfg.init_field.empty()) init.emplace(load_field(cfg.init_field));
    write_resolved_config(cfg.out, cfg, "i3ds");
    const I3dsResult res =
        i3ds_run(ds, state.model, s, icfg, cfg.out, nullptr, init ? &*init : nullptr);
    std::cout << detail::kReportHeader << "\n";
    for (const CycleReport& r : res.reports) std::cout << detail::report_row(r) << "\n";
  };
}

// one eval row per rendering method, aggregated over evaluation poses
struct EvalAgg {
  std::string method;
  int cycle = 0;
  double psnr_sum = 0.0, ssim_sum = 0.0, sharp_sum = 0.0;
  int n_views = 0;
  double warp_sum = 0.0;
  int warp_n = 0;
  double coverage_sum = 0.0;
  int coverage_n = 0;
  double lrc_sum = 0.0;
  int lrc_n = 0;
};

std::string eval_row(uint64_t scene_seed, const EvalAgg& a) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::ostringstream os;
  os << scene_seed << "," << a.method << "," << a.cycle << ","
     << detail::csv_num(a.n_views ? a.psnr_sum / a.n_views : nan) << ","
     << detail::csv_num(a.n_views ? a.ssim_sum / a.n_views : nan) << ","
     << detail::csv_num(a.n_views ? a.sharp_sum / a.n_views : nan) << ","
     << detail::csv_num(a.warp_n ? a.warp_sum / a.warp_n : nan) << ","
     << detail::csv_num(a.lrc_n ? a.lrc_sum / a.lrc_n : nan) << ","
     << detail::csv_num(a.coverage_n ? a.coverage_sum / a.coverage_n : nan);
  return os.str();
}

Runner setup_eval(CliConfig cfg) {
  require(!cfg.eval_run.empty(), "a run directory is required (--run)");
  require(fs::exists(fs::path(cfg.eval_run) / "ckpt"),
          "run directory " + cfg.eval_run + " has no ckpt/ subdirectory");
  require_dataset_dir(cfg.dataset_dir);
  require(cfg.eval_views_shown >= 1, "eval.views_shown must be >= 1");
  require(cfg.rad_render_samples >= 2, "radiance.render_samples must be >= 2");
  // default to a subdirectory so the run's own config.json stays intact
  if (cfg.out.empty()) cfg.out = (fs::path(cfg.eval_run) / "eval").string();

  const fs::path ckpt_dir = fs::path(cfg.eval_run) / "ckpt";
  int last = -1;
  for (const auto& ent : fs::directory_iterator(ckpt_dir)) {
    const std::string name = ent.path().filename().string();
    if (name.rfind("cycle_", 0) != 0 || ent.path().extension() != ".field") continue;
    try {
      last = std::max(last, std::stoi(name.substr(6)));
    } catch (const std::exception&) {
    }
  }
  require(last >= 0, "run directory " + cfg.eval_run + " has no cycle checkpoints");
  const int cycle = cfg.eval_cycle < 0 ? last : cfg.eval_cycle;
  const fs::path f0_path = ckpt_dir / "cycle_0.field";
  const fs::path fk_path = ckpt_dir / ("cycle_" + std::to_string(cycle) + ".field");
  require(fs::exists(f0_path), "run has no cycle_0 checkpoint (baseline)");
  require(fs::exists(fk_path), "run has no cycle_" + std::to_string(cycle) + " checkpoint");

  return [cfg, f0_path, fk_path, cycle] {
    const MultiViewDataset ds = load_dataset(cfg.dataset_dir);
    const VoxelField f0 = load_field(f0_path.string());
    const VoxelField fk = load_field(fk_path.string());

    const int n_eval_all = static_cast<int>(ds.eval_cams.size());
    const int n_eval = cfg.eval_poses < 0 ? n_eval_all : std::min(cfg.eval_poses, n_eval_all);
    require(n_eval >= 1, "eval needs at least one evaluation pose");
    const int shown = std::min(cfg.eval_views_shown, n_eval);
    const int H = 4 * ds.lr_res, W = 4 * ds.lr_res;

    std::vector<Camera> eval4, evalL;
    for (int e = 0; e < n_eval; ++e) {
      eval4.push_back(scale_camera(ds.eval_cams[e], 4));
      evalL.push_back(ds.eval_cams[e]);
    }

    // omega_lr and omega_sr are judged on 4x renders; the bicubic baseline
    // renders at native LR and upsamples, so its cross-view warp runs at LR
    // where its depth lives
    struct Method {
      std::string name;
      const VoxelField* field;
      int cycle;
      bool bicubic;
    };
    const std::vector<Method> methods = {
        {"omega_lr", &f0, 0, false}, {"omega_lr_bicubic4", &f0, 0, true}, {"omega_sr", &fk, cycle, false}};

    Image grid(3, static_cast<int>(methods.size()) * H, shown * W);
    std::vector<std::string> rows;
    for (size_t mi = 0; mi < methods.size(); ++mi) {
      const Method& m = methods[mi];
      EvalAgg agg;
      agg.method = m.name;
      agg.cycle = m.cycle;
      const std::vector<Camera>& cams = m.bicubic ? evalL : eval4;

      auto render_at = [&](int e) {
        RenderOptions ro;
        ro.n_samples = cfg.rad_render_samples;
        ro.bg = ds.scene.bg;
        ro.far = cfg.rad_far;
        ro.jitter_seed = derive_seed(cfg.seed, {kStreamValidation, mi, 0, static_cast<uint64_t>(e)});
        return render_image(*m.field, cams[e], ro);
      };

      for (int e = 0; e < n_eval; ++e) {
        const auto [rgb, depth] = render_at(e);
        const Image shown_img = m.bicubic ? upsample4_bicubic(rgb) : rgb;
        agg.psnr_sum += psnr(shown_img, ds.hr_refs[e]);
        agg.ssim_sum += ssim(shown_img, ds.hr_refs[e]);
        agg.sharp_sum += sharpness(shown_img);
        agg.n_views += 1;
        if (e < shown)
          detail::paste_image(grid, clamp01(shown_img), static_cast<int>(mi) * H, e * W);
        if (n_eval >= 2) {
          const int vp = third_nearest_pose(cams, e);
          const auto [rgb_p, depth_p] = render_at(vp);
          const WarpResult w = warp_view(rgb_p, depth_p, cams[vp], cams[e]);
          agg.coverage_sum += w.coverage;
          agg.coverage_n += 1;
          if (const auto wc = warped_consistency(rgb, rgb_p, depth_p, cams[e], cams[vp])) {
            agg.warp_sum += *wc;
            agg.warp_n += 1;
          }
        }
      }
      for (size_t v = 0; v < ds.train_cams.size(); ++v) {
        RenderOptions ro;
        ro.n_samples = cfg.rad_render_samples;
        ro.bg = ds.scene.bg;
        ro.far = cfg.rad_far;
        ro.jitter_seed = derive_seed(cfg.seed, {kStreamValidation, mi, 1, v});
        if (m.bicubic) {
          const Image up =
              upsample4_bicubic(render_image(*m.field, ds.train_cams[v], ro).first);
          agg.lrc_sum += lr_consistency(up, ds.lr_images[v]);
        } else {
          const Image r4 =
              render_image(*m.field, scale_camera(ds.train_cams[v], 4), ro).first;
          agg.lrc_sum += lr_consistency(r4, ds.lr_images[v]);
        }
        agg.lrc_n += 1;
      }
      rows.push_back(eval_row(ds.seed, agg));
    }

    write_resolved_config(cfg.out, cfg, "eval");
    const std::string header =
        "scene,method,cycle,psnr,ssim,sharpness,warped_consistency,lr_consistency,coverage";
    write_csv((fs::path(cfg.out) / "eval.csv").string(), header, rows);
    write_png_rgb8((fs::path(cfg.out) / "grid.png").string(), grid);
    std::cout << header << "\n";
    for (const std::string& r : rows) std::cout << r << "\n";
  };
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "synthetic multi-view super-resolution: scene generation, denoiser training,\n"
      "2D upscaling, iterative 3D synchronization, evaluation.\n"
      "Config precedence: defaults < --config file < named flags < --set KEY=VALUE.\n"
      "Relative --out paths resolve under $FIELDSR_OUT_ROOT when it is set."};
  app.require_subcommand(1);

  std::map<std::string, Flags> flags;
  std::map<std::string, CLI::App*> subs;

  auto add_sub = [&](const char* name, const char* help) {
    CLI::App* sub = app.add_subcommand(name, help);
    add_common_flags(sub, flags[name]);
    subs[name] = sub;
    return sub;
  };

  {
    add_sub("gen-scene", "render a synthetic multi-view dataset (LR train views, 4x HR eval refs)");
    CLI::App* sub = add_sub("train-denoiser", "fit the conditional conv denoiser on HR patches");
    Flags& f = flags["train-denoiser"];
    f.bind(sub, "--dataset", "dataset.dir", "dataset directory supplying HR patches");
    f.bind(sub, "--epochs", "denoiser.epochs", "total epochs to reach (resumes from checkpoint)");
  }
  {
    CLI::App* sub = add_sub("pretrain-lr", "fit a voxel field to the LR training views");
    flags["pretrain-lr"].bind(sub, "--dataset", "dataset.dir", "input dataset directory");
  }
  {
    CLI::App* sub = add_sub("upscale2d", "4x upscale one LR image by each requested method");
    Flags& f = flags["upscale2d"];
    f.bind(sub, "--image", "upscale2d.image", "LR input image (PNG)");
    f.bind(sub, "--ckpt", "denoiser.ckpt", "trained denoiser checkpoint");
    f.bind(sub, "--methods", "upscale2d.methods", "comma list from: ancestral,sds,rsd");
  }
  {
    CLI::App* sub = add_sub("i3ds", "alternate upscaling and field synchronization for n cycles");
    Flags& f = flags["i3ds"];
    f.bind(sub, "--dataset", "dataset.dir", "input dataset directory");
    f.bind(sub, "--ckpt", "denoiser.ckpt", "trained denoiser checkpoint");
    f.bind(sub, "--cycles", "pipeline.cycles", "refine/synchronize cycles (>= 1)");
    f.bind(sub, "--init-field", "init_field", "pretrained field replacing the pretraining stage");
  }
  {
    CLI::App* sub = add_sub("eval", "score a finished run against the dataset's HR references");
    Flags& f = flags["eval"];
    f.bind(sub, "--run", "eval.run", "finished run directory (ckpt/cycle_*.field)");
    f.bind(sub, "--dataset", "dataset.dir", "dataset the run was trained on");
    f.bind(sub, "--cycle", "eval.cycle", "cycle checkpoint to evaluate (-1 = latest)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  std::string cmd;
  for (const auto& [name, sub] : subs)
    if (app.got_subcommand(sub)) cmd = name;

  Runner runner;
  try {
    const Flags& f = flags[cmd];
    CliConfig cfg;
    if (!f.config_path.empty()) load_config_file(cfg, f.config_path);
    auto bs = key_bindings(cfg);
    for (const auto& [key, val] : f.collected()) set_from_string(find_binding(bs, key), val);

    if (cfg.threads < 0) throw ParameterError("threads must be >= 0");
    if (cfg.threads > 0) set_thread_cap(cfg.threads);

    const char* root = std::getenv("FIELDSR_OUT_ROOT");
    if (root && *root && !cfg.out.empty() && fs::path(cfg.out).is_relative())
      cfg.out = (fs::path(root) / cfg.out).string();

    if (cmd == "gen-scene") runner = setup_gen_scene(cfg);
    else if (cmd == "train-denoiser") runner = setup_train_denoiser(cfg);
    else if (cmd == "pretrain-lr") runner = setup_pretrain_lr(cfg);
    else if (cmd == "upscale2d") runner = setup_upscale2d(cfg);
    else if (cmd == "i3ds") runner = setup_i3ds(cfg);
    else runner = setup_eval(cfg);
  } catch (const std::exception& e) {
    std::cerr << "fieldsr " << cmd << ": " << e.what() << "\n";
    return 2;
  }

  try {
    runner();
  } catch (const std::exception& e) {
    std::cerr << "fieldsr " << cmd << ": " << e.what() << "\n";
    return 3;
  }
  return 0;
}
