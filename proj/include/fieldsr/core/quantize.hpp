// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "fieldsr/core/image.hpp"

namespace fieldsr {

// Checkpoints store 32-bit floats. State that will be checkpointed is
// rounded to f32 in memory at every checkpoint boundary, so a run resumed
// from disk continues the exact trajectory of the uninterrupted run.
inline double quantize_f32(double x) { return static_cast<double>(static_cast<float>(x)); }

inline void quantize_f32(std::vector<double>& v) {
  for (double& x : v) x = quantize_f32(x);
}

inline void quantize_f32(Image& img) {
  for (size_t i = 0; i < img.size(); ++i) img[i] = quantize_f32(img[i]);
}

}  // namespace fieldsr
