// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "fieldsr/core/resample.hpp"
#include "fieldsr/core/rng.hpp"
#include "fieldsr/denoiser/model.hpp"

namespace fieldsr {

// Layer layout of the small conditional conv net. The target latent is
// concatenated channel-wise with the nearest-4x-upsampled LR conditioning;
// every non-head block adds a learned linear map of the sinusoidal timestep
// embedding and a learned class-token bias to its conv output, then SiLU.
// The head conv is zero-initialized so an untrained model predicts zero.
struct ConvSpec {
  int in_channels = 3;    // target latent channels (also output channels)
  int cond_channels = 3;  // LR conditioning channels after upsampling
  int channels = 12;      // hidden width
  int n_hidden = 2;       // hidden blocks between stem and head
  int n_tokens = 4;       // class-token table size
  int emb_dim = 12;       // sinusoidal embedding size, even

  void validate() const {
    if (in_channels < 1 || cond_channels < 0 || channels < 1 || n_hidden < 0 || n_tokens < 1)
      throw ParameterError("ConvSpec: non-positive dimension");
    if (emb_dim < 2 || emb_dim % 2 != 0)
      throw ParameterError("ConvSpec: emb_dim must be even and >= 2");
  }

  std::string to_config() const {
    std::ostringstream os;
    os << "conv.in_channels = " << in_channels << "\n"
       << "conv.cond_channels = " << cond_channels << "\n"
       << "conv.channels = " << channels << "\n"
       << "conv.n_hidden = " << n_hidden << "\n"
       << "conv.n_tokens = " << n_tokens << "\n"
       << "conv.emb_dim = " << emb_dim << "\n";
    return os.str();
  }

  static ConvSpec from_config(const std::string& text) {
    ConvSpec sp;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
      std::istringstream ls(line);
      std::string key, eq;
      if (!(ls >> key >> eq) || eq != "=") continue;
      if (key == "conv.in_channels") ls >> sp.in_channels;
      else if (key == "conv.cond_channels") ls >> sp.cond_channels;
      else if (key == "conv.channels") ls >> sp.channels;
      else if (key == "conv.n_hidden") ls >> sp.n_hidden;
      else if (key == "conv.n_tokens") ls >> sp.n_tokens;
      else if (key == "conv.emb_dim") ls >> sp.emb_dim;
    }
    sp.validate();
    return sp;
  }
};

namespace detail {

inline size_t conv_param_count(int co, int ci) {
  return static_cast<size_t>(co) * ci * 9 + co;
}

// Offsets into the flat parameter vector. Per block: conv weights
// [co][ci][ky][kx], conv bias [co], time map [co][emb], token table
// [token][co]; the head has conv weights and bias only.
struct ConvLayout {
  struct Block {
    size_t w = 0, b = 0, time = 0, token = 0;
    int ci = 0, co = 0;
  };
  std::vector<Block> blocks;  // stem + hidden
  size_t head_w = 0, head_b = 0;
  int head_ci = 0, head_co = 0;
  size_t total = 0;

  explicit ConvLayout(const ConvSpec& sp) {
    size_t off = 0;
    auto add_block = [&](int ci, int co) {
      Block blk;
      blk.ci = ci;
      blk.co = co;
      blk.w = off;
      off += static_cast<size_t>(co) * ci * 9;
      blk.b = off;
      off += co;
      blk.time = off;
      off += static_cast<size_t>(co) * sp.emb_dim;
      blk.token = off;
      off += static_cast<size_t>(sp.n_tokens) * co;
      blocks.push_back(blk);
    };
    add_block(sp.in_channels + sp.cond_channels, sp.channels);
    for (int i = 0; i < sp.n_hidden; ++i) add_block(sp.channels, sp.channels);
    head_ci = sp.channels;
    head_co = sp.in_channels;
    head_w = off;
    off += static_cast<size_t>(head_co) * head_ci * 9;
    head_b = off;
    off += head_co;
    total = off;
  }
};

// 3x3 same-size convolution with zero padding, CHW layout.
inline void conv3x3_forward(const Image& in, const double* W, const double* b, Image& out) {
  const int ci = in.channels(), H = in.height(), Wd = in.width(), co = out.channels();
  for (int o = 0; o < co; ++o) {
    const double bias = b[o];
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < Wd; ++x) out.at(o, y, x) = bias;
    for (int c = 0; c < ci; ++c) {
      const double* k = W + (static_cast<size_t>(o) * ci + c) * 9;
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < Wd; ++x) {
          double acc = 0.0;
          for (int dy = -1; dy <= 1; ++dy) {
            const int yy = y + dy;
            if (yy < 0 || yy >= H) continue;
            for (int dx = -1; dx <= 1; ++dx) {
              const int xx = x + dx;
              if (xx < 0 || xx >= Wd) continue;
              acc += k[(dy + 1) * 3 + (dx + 1)] * in.at(c, yy, xx);
            }
          }
          out.at(o, y, x) += acc;
        }
      }
    }
  }
}

// dL/din given dL/dout: correlation with the transposed kernel.
inline void conv3x3_backward_input(const Image& dOut, const double* W, int ci, Image& dIn) {
  const int co = dOut.channels(), H = dOut.height(), Wd = dOut.width();
  for (size_t i = 0; i < dIn.size(); ++i) dIn[i] = 0.0;
  for (int o = 0; o < co; ++o) {
    for (int c = 0; c < ci; ++c) {
      const double* k = W + (static_cast<size_t>(o) * ci + c) * 9;
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < Wd; ++x) {
          const double g = dOut.at(o, y, x);
          if (g == 0.0) continue;
          for (int dy = -1; dy <= 1; ++dy) {
            const int yy = y + dy;
            if (yy < 0 || yy >= H) continue;
            for (int dx = -1; dx <= 1; ++dx) {
              const int xx = x + dx;
              if (xx < 0 || xx >= Wd) continue;
              dIn.at(c, yy, xx) += g * k[(dy + 1) * 3 + (dx + 1)];
            }
          }
        }
      }
    }
  }
}

inline void conv3x3_backward_params(const Image& in, const Image& dOut, double* dW, double* db) {
  const int ci = in.channels(), H = in.height(), Wd = in.width(), co = dOut.channels();
  for (int o = 0; o < co; ++o) {
    double bsum = 0.0;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < Wd; ++x) bsum += dOut.at(o, y, x);
    db[o] += bsum;
    for (int c = 0; c < ci; ++c) {
      double* k = dW + (static_cast<size_t>(o) * ci + c) * 9;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          double acc = 0.0;
          const int y0 = std::max(0, -dy), y1 = std::min(H, H - dy);
          const int x0 = std::max(0, -dx), x1 = std::min(Wd, Wd - dx);
          for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x) acc += dOut.at(o, y, x) * in.at(c, y + dy, x + dx);
          k[(dy + 1) * 3 + (dx + 1)] += acc;
        }
      }
    }
  }
}

inline double silu(double x) { return x / (1.0 + std::exp(-x)); }

inline double silu_grad(double x) {
  const double s = 1.0 / (1.0 + std::exp(-x));
  return s * (1.0 + x * (1.0 - s));
}

}  // namespace detail

inline std::vector<double> sinusoidal_embedding(int t, int emb_dim) {
  std::vector<double> emb(static_cast<size_t>(emb_dim));
  const int half = emb_dim / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * i / half);
    emb[2 * i] = std::sin(t * freq);
    emb[2 * i + 1] = std::cos(t * freq);
  }
  return emb;
}

class ConvDenoiser : public TrainableDenoiser {
 public:
  ConvDenoiser(ConvSpec spec, uint64_t init_seed)
      : spec_(spec), layout_(spec), params_(layout_.total, 0.0) {
    spec_.validate();
    init_params(init_seed);
  }

  const ConvSpec& spec() const { return spec_; }
  size_t param_count() const override { return params_.size(); }
  std::vector<double>& params() override { return params_; }
  const std::vector<double>& params() const override { return params_; }

  Image predict_eps(const Image& z_t, const Conditioning& cond, int t) const override {
    return run_forward(z_t, cond, t, nullptr);
  }

  Image forward_cached(const Image& z_t, const Conditioning& cond, int t,
                       std::unique_ptr<DenoiserCache>& cache) const override {
    auto own = std::make_unique<Cache>();
    Image out = run_forward(z_t, cond, t, own.get());
    cache = std::move(own);
    return out;
  }

  void backward(const DenoiserCache& cache, const Image& dL_dout, std::vector<double>& param_grad,
                Image* dL_dz_t) const override {
    const auto* cc = dynamic_cast<const Cache*>(&cache);
    if (!cc) throw ParameterError("ConvDenoiser::backward: cache from a different backend");
    if (param_grad.size() != params_.size())
      throw ShapeError("ConvDenoiser::backward: param_grad size mismatch");
    run_backward(*cc, dL_dout, param_grad, dL_dz_t);
  }

  Image input_vjp(const Image& z_t, const Conditioning& cond, int t,
                  const Image& dL_dout) const override {
    std::unique_ptr<DenoiserCache> cache;
    forward_cached(z_t, cond, t, cache);
    std::vector<double> scratch(params_.size(), 0.0);
    Image dz(z_t.channels(), z_t.height(), z_t.width());
    backward(*cache, dL_dout, scratch, &dz);
    return dz;
  }

 private:
  struct Cache : DenoiserCache {
    Image x_in;               // stem input (latent ++ upsampled conditioning)
    std::vector<Image> pre;   // per-block pre-activation
    std::vector<Image> post;  // per-block SiLU output
    std::vector<double> emb;  // timestep embedding
    int token = 0;
  };

  void init_params(uint64_t seed) {
    Rng rng(derive_seed(seed, {kStreamDenoiserInit}));
    for (const auto& blk : layout_.blocks) {
      const double scale = std::sqrt(2.0 / (blk.ci * 9));
      for (size_t i = 0; i < static_cast<size_t>(blk.co) * blk.ci * 9; ++i)
        params_[blk.w + i] = scale * rng.normal();
      const double tscale = 0.1 / std::sqrt(static_cast<double>(spec_.emb_dim));
      for (size_t i = 0; i < static_cast<size_t>(blk.co) * spec_.emb_dim; ++i)
        params_[blk.time + i] = tscale * rng.normal();
      // conv bias and token table start at zero
    }
    // head stays zero: untrained model predicts zero noise
  }

  Image cond_input(const Image& z_t, const Conditioning& cond) const {
    Image x(spec_.in_channels + spec_.cond_channels, z_t.height(), z_t.width());
    if (z_t.channels() != spec_.in_channels)
      throw ShapeError("ConvDenoiser: latent has " + std::to_string(z_t.channels()) +
                       " channels, spec expects " + std::to_string(spec_.in_channels));
    for (int c = 0; c < spec_.in_channels; ++c)
      for (int y = 0; y < z_t.height(); ++y)
        for (int x2 = 0; x2 < z_t.width(); ++x2) x.at(c, y, x2) = z_t.at(c, y, x2);
    if (spec_.cond_channels > 0 && !cond.lr_image.empty()) {
      require_cond_matches(cond, z_t, "ConvDenoiser");
      Image up = upsample4_nearest(cond.lr_image);
      for (int c = 0; c < spec_.cond_channels; ++c)
        for (int y = 0; y < z_t.height(); ++y)
          for (int x2 = 0; x2 < z_t.width(); ++x2)
            x.at(spec_.in_channels + c, y, x2) = up.at(c, y, x2);
    }
    // absent conditioning leaves those channels zero
    return x;
  }

  Image run_forward(const Image& z_t, const Conditioning& cond, int t, Cache* cache) const {
    if (cond.token < 0 || cond.token >= spec_.n_tokens)
      throw ParameterError("ConvDenoiser: token outside table");
    const std::vector<double> emb = sinusoidal_embedding(t, spec_.emb_dim);
    Image x = cond_input(z_t, cond);
    if (cache) {
      cache->x_in = x;
      cache->emb = emb;
      cache->token = cond.token;
      cache->pre.clear();
      cache->post.clear();
    }
    for (const auto& blk : layout_.blocks) {
      Image a(blk.co, x.height(), x.width());
      detail::conv3x3_forward(x, params_.data() + blk.w, params_.data() + blk.b, a);
      for (int c = 0; c < blk.co; ++c) {
        double bias = 0.0;
        const double* wt = params_.data() + blk.time + static_cast<size_t>(c) * spec_.emb_dim;
        for (int e = 0; e < spec_.emb_dim; ++e) bias += wt[e] * emb[e];
        bias += params_[blk.token + static_cast<size_t>(cond.token) * blk.co + c];
        for (int y = 0; y < a.height(); ++y)
          for (int x2 = 0; x2 < a.width(); ++x2) a.at(c, y, x2) += bias;
      }
      Image h = Image::zeros_like(a);
      for (size_t i = 0; i < a.size(); ++i) h[i] = detail::silu(a[i]);
      if (cache) {
        cache->pre.push_back(a);
        cache->post.push_back(h);
      }
      x = std::move(h);
    }
    Image out(layout_.head_co, x.height(), x.width());
    detail::conv3x3_forward(x, params_.data() + layout_.head_w,
                            params_.data() + layout_.head_b, out);
    return out;
  }

  void run_backward(const Cache& cc, const Image& dL_dout, std::vector<double>& g,
                    Image* dL_dz_t) const {
    const Image& head_in = cc.post.back();
    detail::conv3x3_backward_params(head_in, dL_dout, g.data() + layout_.head_w,
                                    g.data() + layout_.head_b);
    Image dH(head_in.channels(), head_in.height(), head_in.width());
    detail::conv3x3_backward_input(dL_dout, params_.data() + layout_.head_w, layout_.head_ci, dH);

    for (int bi = static_cast<int>(layout_.blocks.size()) - 1; bi >= 0; --bi) {
      const auto& blk = layout_.blocks[bi];
      const Image& pre = cc.pre[bi];
      Image dA = Image::zeros_like(pre);
      for (size_t i = 0; i < pre.size(); ++i) dA[i] = dH[i] * detail::silu_grad(pre[i]);
      // shared per-channel bias: gradient is the channel sum of dA
      for (int c = 0; c < blk.co; ++c) {
        double s = 0.0;
        for (int y = 0; y < dA.height(); ++y)
          for (int x2 = 0; x2 < dA.width(); ++x2) s += dA.at(c, y, x2);
        double* gt = g.data() + blk.time + static_cast<size_t>(c) * spec_.emb_dim;
        for (int e = 0; e < spec_.emb_dim; ++e) gt[e] += s * cc.emb[e];
        g[blk.token + static_cast<size_t>(cc.token) * blk.co + c] += s;
      }
      const Image& in = (bi == 0) ? cc.x_in : cc.post[bi - 1];
      detail::conv3x3_backward_params(in, dA, g.data() + blk.w, g.data() + blk.b);
      if (bi == 0) {
        if (dL_dz_t) {
          Image dX(in.channels(), in.height(), in.width());
          detail::conv3x3_backward_input(dA, params_.data() + blk.w, blk.ci, dX);
          for (int c = 0; c < spec_.in_channels; ++c)
            for (int y = 0; y < dX.height(); ++y)
              for (int x2 = 0; x2 < dX.width(); ++x2)
                dL_dz_t->at(c, y, x2) = dX.at(c, y, x2);
        }
      } else {
        Image dIn(blk.ci, in.height(), in.width());
        detail::conv3x3_backward_input(dA, params_.data() + blk.w, blk.ci, dIn);
        dH = std::move(dIn);
      }
    }
  }

  ConvSpec spec_;
  detail::ConvLayout layout_;
  std::vector<double> params_;
};

}  // namespace fieldsr
