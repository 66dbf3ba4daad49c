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

// File formats: 8-bit PNG images and masks, the DPTH1 depth container and
// flat key=value text files.

#ifndef HEADFORGE_IO_H_
#define HEADFORGE_IO_H_

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "headforge/grid.h"

namespace headforge {

using KeyValues = std::map<std::string, std::string>;

// Values map linearly between [0, 1] and 0..255; no gamma transform.
// |text| is stored as uncompressed tEXt chunks.
void write_png(const Image& image, const std::filesystem::path& path,
               const KeyValues* text = nullptr);
Image read_png(const std::filesystem::path& path);
KeyValues read_png_text(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_png(const Image& image, const KeyValues* text = nullptr);
std::vector<std::uint8_t> encode_png(const Mask& mask);

// Masks are single-channel 0/255; any non-zero pixel reads as inside.
void write_mask_png(const Mask& mask, const std::filesystem::path& path);
Mask read_mask_png(const std::filesystem::path& path);

// "DPTH1", u32 width, u32 height, row-major little-endian f32; undefined
// pixels are quiet NaN.
void write_depth(const DepthMap& depth, const std::filesystem::path& path);
DepthMap read_depth(const std::filesystem::path& path);

// Ordered "key = value" pairs; '#' starts a comment.
KeyValues parse_key_values(const std::string& text, const std::string& origin);
KeyValues read_key_values(const std::filesystem::path& path);
void write_key_values(const KeyValues& values, const std::filesystem::path& path);

double parse_double(const std::string& text, const std::string& key);
long parse_int(const std::string& text, const std::string& key);
bool parse_bool(const std::string& text, const std::string& key);
std::vector<double> parse_doubles(const std::string& text, const std::string& key);
std::string format_doubles(const double* values, size_t n);
std::string format_double(double value);

}  // namespace headforge

#endif  // HEADFORGE_IO_H_
