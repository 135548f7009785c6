// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <string>

#include "fieldsr/core/image.hpp"

namespace fieldsr {

// FNV-1a. Not cryptographic; used for config fingerprints and
// change-detection on image content.
inline uint64_t fnv1a(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline uint64_t fnv1a(const std::string& s, uint64_t h = 0xcbf29ce484222325ULL) {
  return fnv1a(s.data(), s.size(), h);
}

inline uint64_t hash_u64(uint64_t v, uint64_t h = 0xcbf29ce484222325ULL) {
  unsigned char buf[8];
  std::memcpy(buf, &v, 8);
  return fnv1a(buf, 8, h);
}

// Hash of shape + exact bit pattern of every sample. Bit-identical images,
// and only those, collide by construction.
inline uint64_t hash_image(const Image& img, uint64_t h = 0xcbf29ce484222325ULL) {
  h = hash_u64(static_cast<uint64_t>(img.channels()), h);
  h = hash_u64(static_cast<uint64_t>(img.height()), h);
  h = hash_u64(static_cast<uint64_t>(img.width()), h);
  return fnv1a(img.data(), img.size() * sizeof(double), h);
}

}  // namespace fieldsr
