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

#include <fstream>
#include <iterator>

#include "headforge/binary_io.h"
#include "headforge/error.h"
#include "headforge/grid.h"

namespace headforge {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDimension: return "dimension";
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kBadMagic: return "bad_magic";
    case ErrorCode::kTruncated: return "truncated";
    case ErrorCode::kPayloadSize: return "payload_size";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kUndefinedDepth: return "undefined_depth";
    case ErrorCode::kEmptyRegion: return "empty_region";
    case ErrorCode::kDegenerate: return "degenerate";
    case ErrorCode::kNonFinite: return "non_finite";
    case ErrorCode::kBehindCamera: return "behind_camera";
    case ErrorCode::kConfig: return "config";
  }
  return "unknown";
}

namespace {

template <typename Op>
Mask combine(const Mask& a, const Mask& b, Op op) {
  require_same_shape(a, b, "mask algebra");
  Mask out(a.width(), a.height(), 0);
  for (size_t i = 0; i < a.size(); ++i) {
    out[i] = op(a[i] != 0, b[i] != 0) ? 1 : 0;
  }
  return out;
}

}  // namespace

Mask mask_and(const Mask& a, const Mask& b) {
  return combine(a, b, [](bool x, bool y) { return x && y; });
}
Mask mask_or(const Mask& a, const Mask& b) {
  return combine(a, b, [](bool x, bool y) { return x || y; });
}
Mask mask_minus(const Mask& a, const Mask& b) {
  return combine(a, b, [](bool x, bool y) { return x && !y; });
}
bool mask_subset(const Mask& a, const Mask& b) {
  require_same_shape(a, b, "mask subset");
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i] && !b[i]) return false;
  }
  return true;
}

double pairwise_sum(const double* values, size_t n) {
  if (n <= 16) {
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) s += values[i];
    return s;
  }
  const size_t half = n / 2;
  return pairwise_sum(values, half) + pairwise_sum(values + half, n - half);
}

void ByteWriter::write_file(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(buffer_.data()),
            static_cast<std::streamsize>(buffer_.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path.string());
}

ByteReader ByteReader::from_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open: " + path.string());
  std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  return ByteReader(std::move(data));
}

void ByteReader::bytes(void* out, size_t n) {
  if (n > remaining()) throw Error(ErrorCode::kTruncated, "unexpected end of data");
  std::memcpy(out, data_.data() + pos_, n);
  pos_ += n;
}

std::uint32_t ByteReader::u32() {
  if (remaining() < 4) throw Error(ErrorCode::kTruncated, "unexpected end of data");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
  pos_ += 4;
  return v;
}

}  // namespace headforge
