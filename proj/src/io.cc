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

#include "headforge/io.h"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

#include "headforge/binary_io.h"
#include "headforge/error.h"

namespace headforge {

namespace {

constexpr char kDepthMagic[5] = {'D', 'P', 'T', 'H', '1'};

std::uint8_t to_byte(float v) {
  if (!std::isfinite(v)) v = 0.0f;
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

void png_write_to_vector(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + length);
}

void png_flush_noop(png_structp) {}

std::vector<std::uint8_t> encode(int width, int height, int channels,
                                 const std::vector<std::uint8_t>& pixels,
                                 const KeyValues* text = nullptr) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw Error(ErrorCode::kIo, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  std::vector<std::uint8_t> out;
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, info ? &info : nullptr);
    throw Error(ErrorCode::kIo, "png encoding failed");
  }
  png_set_write_fn(png, &out, png_write_to_vector, png_flush_noop);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  std::vector<png_text> chunks;
  if (text) {
    for (const auto& [key, value] : *text) {
      png_text t{};
      t.compression = PNG_TEXT_COMPRESSION_NONE;
      t.key = const_cast<char*>(key.c_str());
      t.text = const_cast<char*>(value.c_str());
      t.text_length = value.size();
      chunks.push_back(t);
    }
    png_set_text(png, info, chunks.data(), static_cast<int>(chunks.size()));
  }
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) {
    png_write_row(png, const_cast<png_bytep>(pixels.data() +
                                             static_cast<size_t>(y) * width * channels));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

// Decodes to 8-bit gray or rgb, dropping alpha.
std::vector<std::uint8_t> decode(const std::filesystem::path& path, int channels,
                                 int* width, int* height) {
  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!file) throw Error(ErrorCode::kIo, "cannot open: " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw Error(ErrorCode::kIo, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    throw Error(ErrorCode::kIo, "png decoding failed: " + path.string());
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  const png_byte color = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
  }
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  const bool is_gray = color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA;
  if (channels == 3 && is_gray) png_set_gray_to_rgb(png);
  if (channels == 1 && !is_gray) png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  png_read_update_info(png, info);
  *width = static_cast<int>(png_get_image_width(png, info));
  *height = static_cast<int>(png_get_image_height(png, info));
  std::vector<std::uint8_t> pixels(static_cast<size_t>(*width) * *height * channels);
  std::vector<png_bytep> rows(static_cast<size_t>(*height));
  for (int y = 0; y < *height; ++y) {
    rows[y] = pixels.data() + static_cast<size_t>(y) * *width * channels;
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return pixels;
}

void write_bytes(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path.string());
}

}  // namespace

std::vector<std::uint8_t> encode_png(const Image& image, const KeyValues* text) {
  std::vector<std::uint8_t> pixels(image.size() * 3);
  for (size_t i = 0; i < image.size(); ++i) {
    for (int c = 0; c < 3; ++c) pixels[3 * i + c] = to_byte(image[i][c]);
  }
  return encode(image.width(), image.height(), 3, pixels, text);
}

std::vector<std::uint8_t> encode_png(const Mask& mask) {
  std::vector<std::uint8_t> pixels(mask.size());
  for (size_t i = 0; i < mask.size(); ++i) pixels[i] = mask[i] ? 255 : 0;
  return encode(mask.width(), mask.height(), 1, pixels);
}

void write_png(const Image& image, const std::filesystem::path& path,
               const KeyValues* text) {
  write_bytes(encode_png(image, text), path);
}

KeyValues read_png_text(const std::filesystem::path& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!file) throw Error(ErrorCode::kIo, "cannot open: " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw Error(ErrorCode::kIo, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    throw Error(ErrorCode::kIo, "png decoding failed: " + path.string());
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  png_textp chunks = nullptr;
  const int n = png_get_text(png, info, &chunks, nullptr);
  KeyValues out;
  for (int i = 0; i < n; ++i) out[chunks[i].key] = std::string(chunks[i].text, chunks[i].text_length);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

Image read_png(const std::filesystem::path& path) {
  int w = 0, h = 0;
  const auto pixels = decode(path, 3, &w, &h);
  Image image(w, h);
  for (size_t i = 0; i < image.size(); ++i) {
    for (int c = 0; c < 3; ++c) image[i][c] = pixels[3 * i + c] / 255.0f;
  }
  return image;
}

void write_mask_png(const Mask& mask, const std::filesystem::path& path) {
  write_bytes(encode_png(mask), path);
}

Mask read_mask_png(const std::filesystem::path& path) {
  int w = 0, h = 0;
  const auto pixels = decode(path, 1, &w, &h);
  Mask mask(w, h, 0);
  for (size_t i = 0; i < mask.size(); ++i) mask[i] = pixels[i] != 0 ? 1 : 0;
  return mask;
}

void write_depth(const DepthMap& depth, const std::filesystem::path& path) {
  ByteWriter out;
  out.bytes(kDepthMagic, sizeof(kDepthMagic));
  out.u32(static_cast<std::uint32_t>(depth.width()));
  out.u32(static_cast<std::uint32_t>(depth.height()));
  for (double d : depth.data()) {
    out.f32(is_defined(d) ? static_cast<float>(d)
                          : std::numeric_limits<float>::quiet_NaN());
  }
  out.write_file(path);
}

DepthMap read_depth(const std::filesystem::path& path) {
  ByteReader in = ByteReader::from_file(path);
  char magic[5];
  if (in.remaining() < 13) throw Error(ErrorCode::kTruncated, "truncated depth file: " + path.string());
  in.bytes(magic, sizeof(magic));
  if (!std::equal(magic, magic + 5, kDepthMagic)) {
    throw Error(ErrorCode::kBadMagic, "not a DPTH1 file: " + path.string());
  }
  const std::uint64_t w = in.u32(), h = in.u32();
  if (w * h * 4 != in.remaining()) {
    throw Error(ErrorCode::kPayloadSize, "depth payload does not match header: " + path.string());
  }
  DepthMap depth(static_cast<int>(w), static_cast<int>(h), kUndefinedDepth);
  for (auto& d : depth.data()) {
    const float v = in.f32();
    d = std::isfinite(v) ? static_cast<double>(v) : kUndefinedDepth;
  }
  return depth;
}

KeyValues parse_key_values(const std::string& text, const std::string& origin) {
  KeyValues out;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::kConfig,
                  origin + ":" + std::to_string(number) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) {
      throw Error(ErrorCode::kConfig, origin + ":" + std::to_string(number) + ": empty key");
    }
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_key_values(buffer.str(), path.string());
}

void write_key_values(const KeyValues& values, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot open for writing: " + path.string());
  for (const auto& [k, v] : values) out << k << " = " << v << '\n';
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path.string());
}

double parse_double(const std::string& text, const std::string& key) {
  try {
    size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::kConfig, key + ": expected a number, got '" + text + "'");
  }
}

long parse_int(const std::string& text, const std::string& key) {
  try {
    size_t used = 0;
    const long v = std::stol(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::kConfig, key + ": expected an integer, got '" + text + "'");
  }
}

bool parse_bool(const std::string& text, const std::string& key) {
  if (text == "1" || text == "true" || text == "yes" || text == "on") return true;
  if (text == "0" || text == "false" || text == "no" || text == "off") return false;
  throw Error(ErrorCode::kConfig, key + ": expected a boolean, got '" + text + "'");
}

std::vector<double> parse_doubles(const std::string& text, const std::string& key) {
  std::vector<double> out;
  std::istringstream in(text);
  std::string token;
  while (in >> token) out.push_back(parse_double(token, key));
  return out;
}

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

std::string format_doubles(const double* values, size_t n) {
  std::string out;
  for (size_t i = 0; i < n; ++i) {
    if (i) out += ' ';
    out += format_double(values[i]);
  }
  return out;
}

}  // namespace headforge
