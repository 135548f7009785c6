// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "fieldsr/core/errors.hpp"

namespace fieldsr {

static_assert(std::endian::native == std::endian::little,
              "checkpoint formats are little-endian; big-endian hosts need byte swapping");

class BinWriter {
 public:
  explicit BinWriter(const std::string& path) : path_(path), os_(path, std::ios::binary) {
    if (!os_) throw IoError("cannot open for writing: " + path);
  }

  void bytes(const void* p, size_t n) {
    os_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  }
  void u32(uint32_t v) { bytes(&v, 4); }
  void u64(uint64_t v) { bytes(&v, 8); }
  void i64(int64_t v) { bytes(&v, 8); }
  void f64(double v) { bytes(&v, 8); }

  void str(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }

  // doubles stored as f32; values are expected to be pre-quantized
  void f32_array(const std::vector<double>& v) {
    u64(v.size());
    std::vector<float> buf(v.size());
    for (size_t i = 0; i < v.size(); ++i) buf[i] = static_cast<float>(v[i]);
    bytes(buf.data(), buf.size() * 4);
  }

  void close() {
    os_.close();
    if (!os_) throw IoError("write failed: " + path_);
  }

 private:
  std::string path_;
  std::ofstream os_;
};

class BinReader {
 public:
  explicit BinReader(const std::string& path) : path_(path), is_(path, std::ios::binary) {
    if (!is_) throw IoError("cannot open for reading: " + path);
  }

  void bytes(void* p, size_t n) {
    is_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (is_.gcount() != static_cast<std::streamsize>(n))
      throw IoError("truncated file: " + path_);
  }
  uint32_t u32() {
    uint32_t v;
    bytes(&v, 4);
    return v;
  }
  uint64_t u64() {
    uint64_t v;
    bytes(&v, 8);
    return v;
  }
  int64_t i64() {
    int64_t v;
    bytes(&v, 8);
    return v;
  }
  double f64() {
    double v;
    bytes(&v, 8);
    return v;
  }

  std::string str(uint32_t max_len = 1u << 20) {
    const uint32_t n = u32();
    if (n > max_len) throw IoError("string field too long in " + path_);
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }

  std::vector<double> f32_array(uint64_t max_len = 1ull << 32) {
    const uint64_t n = u64();
    if (n > max_len) throw IoError("array field too long in " + path_);
    std::vector<float> buf(static_cast<size_t>(n));
    bytes(buf.data(), buf.size() * 4);
    std::vector<double> out(buf.size());
    for (size_t i = 0; i < buf.size(); ++i) out[i] = static_cast<double>(buf[i]);
    return out;
  }

  void expect_magic(const char* magic8) {
    char buf[8];
    bytes(buf, 8);
    if (std::memcmp(buf, magic8, 8) != 0)
      throw IoError("bad magic in " + path_ + " (expected " + std::string(magic8, 8) + ")");
  }

 private:
  std::string path_;
  std::ifstream is_;
};

}  // namespace fieldsr
