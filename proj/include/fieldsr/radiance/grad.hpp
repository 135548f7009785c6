// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "fieldsr/distill/config.hpp"
#include "fieldsr/radiance/render.hpp"

namespace fieldsr {

// Dense gradient buffers for both grids plus the list of touched nodes, so a
// sparse optimizer can skip the untouched bulk. Color and density share one
// stencil per sample, hence one touched list.
struct FieldGrad {
  std::vector<double> density;  // N^3
  std::vector<double> color;    // 3 * N^3
  std::vector<uint32_t> touched;

  void init(size_t n3) {
    density.assign(n3, 0.0);
    color.assign(3 * n3, 0.0);
    touched.clear();
    stamp_.assign(n3, 0);
    round_ = 1;  // stamps start untouched
  }

  // zero the touched entries and start a fresh accumulation round
  void clear_touched() {
    const size_t n3 = density.size();
    for (uint32_t node : touched) {
      density[node] = 0.0;
      for (int c = 0; c < 3; ++c) color[c * n3 + node] = 0.0;
    }
    touched.clear();
    if (++round_ == 0) {  // stamp wraparound
      stamp_.assign(stamp_.size(), 0);
      round_ = 1;
    }
  }

  void touch(uint32_t node) {
    if (stamp_[node] != round_) {
      stamp_[node] = round_;
      touched.push_back(node);
    }
  }

 private:
  std::vector<uint32_t> stamp_;
  uint32_t round_ = 0;
};

struct PhotoGradResult {
  double loss = 0.0;
};

namespace detail {

struct MarchRecord {
  TriProbe pr;
  double alpha;
  double col[3];
  double T;
  double dt;
};

}  // namespace detail

// Exact gradient of the photometric loss (mean over rays, summed over
// channels) with respect to both raw grids. Same stratification stream as
// render_rays, so the forward pass here reproduces renders bitwise. L1
// subgradients are 0 at ties. Rays are accumulated serially in batch order;
// per-entry results do not depend on that order.
inline PhotoGradResult photometric_grad_into(const VoxelField& field, const RayBatch& rays,
                                             const RenderOptions& opts, LossNorm norm,
                                             FieldGrad& grad) {
  if (rays.targets.empty()) throw ParameterError("photometric_grad: rays carry no targets");
  rays.validate();
  if (opts.n_samples < 2) throw ParameterError("photometric_grad: n_samples must be >= 2");
  const size_t n3 = field.nodes();
  if (grad.density.size() != n3) grad.init(n3);

  const size_t n_rays = rays.size();
  const double inv_rays = n_rays ? 1.0 / static_cast<double>(n_rays) : 0.0;
  PhotoGradResult res;
  std::vector<detail::MarchRecord> recs;
  recs.reserve(static_cast<size_t>(opts.n_samples));

  for (size_t i = 0; i < n_rays; ++i) {
    recs.clear();
    Rng rng(derive_seed(opts.jitter_seed, {kStreamRender, i}));
    const RaySample out = march_ray(
        field, rays.ray(i), rng, opts,
        [&](const TriProbe& pr, double alpha, const double* col, double T, double dt) {
          detail::MarchRecord r;
          r.pr = pr;
          r.alpha = alpha;
          for (int c = 0; c < 3; ++c) r.col[c] = col[c];
          r.T = T;
          r.dt = dt;
          recs.push_back(r);
        });

    double G[3];
    const double T_final = recs.empty() ? 1.0 : recs.back().T * (1.0 - recs.back().alpha);
    for (int c = 0; c < 3; ++c) {
      const double d = out.rgb[c] - rays.targets[3 * i + c];
      if (norm == LossNorm::L1) {
        res.loss += std::abs(d) * inv_rays;
        G[c] = static_cast<double>((d > 0.0) - (d < 0.0)) * inv_rays;
      } else {
        res.loss += d * d * inv_rays;
        G[c] = 2.0 * d * inv_rays;
      }
    }

    // walk samples back to front with the suffix of downstream radiance:
    // dC/dsigma_k = dt * (T_k (1-alpha_k) c_k - suffix_k)
    double suffix[3];
    for (int c = 0; c < 3; ++c) suffix[c] = T_final * opts.bg[c];
    for (size_t k = recs.size(); k-- > 0;) {
      const auto& r = recs[k];
      const double w = r.T * r.alpha;
      double dL_dsigma = 0.0;
      for (int c = 0; c < 3; ++c)
        dL_dsigma += G[c] * r.dt * (r.T * (1.0 - r.alpha) * r.col[c] - suffix[c]);
      for (int j = 0; j < 8; ++j) {
        const uint32_t node = r.pr.node[static_cast<size_t>(j)];
        const double wt = r.pr.w[static_cast<size_t>(j)];
        grad.touch(node);
        grad.density[node] += dL_dsigma * wt * softplus_grad(field.density_raw[node]);
        for (int c = 0; c < 3; ++c) {
          const size_t idx = static_cast<size_t>(c) * n3 + node;
          grad.color[idx] += G[c] * w * wt * logistic_grad(field.color_raw[idx]);
        }
      }
      for (int c = 0; c < 3; ++c) suffix[c] += w * r.col[c];
    }
  }
  return res;
}

struct PhotometricGrad {
  double loss = 0.0;
  FieldGrad grad;
};

inline PhotometricGrad photometric_grad(const VoxelField& field, const RayBatch& rays,
                                        const RenderOptions& opts,
                                        LossNorm norm = LossNorm::L1) {
  PhotometricGrad out;
  out.grad.init(field.nodes());
  out.loss = photometric_grad_into(field, rays, opts, norm, out.grad).loss;
  return out;
}

}  // namespace fieldsr
