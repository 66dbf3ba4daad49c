/*
Copyright 2026 The Headforge Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS-IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

// Little-endian byte (de)serialization shared by the P3DM1 and DPTH1
// containers.

#ifndef HEADFORGE_BINARY_IO_H_
#define HEADFORGE_BINARY_IO_H_

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

namespace headforge {

class ByteWriter {
 public:
  void bytes(const void* data, size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    buffer_.insert(buffer_.end(), p, p + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buffer_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    u32(bits);
  }
  template <typename Index>
  void f32s(const float* v, Index n) {
    for (Index i = 0; i < n; ++i) f32(v[i]);
  }
  const std::vector<std::uint8_t>& buffer() const { return buffer_; }
  void write_file(const std::filesystem::path& path) const;

 private:
  std::vector<std::uint8_t> buffer_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<std::uint8_t> data) : data_(std::move(data)) {}
  static ByteReader from_file(const std::filesystem::path& path);

  size_t remaining() const { return data_.size() - pos_; }
  void bytes(void* out, size_t n);
  std::uint32_t u32();
  float f32() {
    std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }
  template <typename Index>
  void f32s(float* out, Index n) {
    for (Index i = 0; i < n; ++i) out[i] = f32();
  }

 private:
  std::vector<std::uint8_t> data_;
  size_t pos_ = 0;
};

}  // namespace headforge

#endif  // HEADFORGE_BINARY_IO_H_
