// Copyright 2026 The SDG-SOD Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace sdg::io {

// 8-bit raster, channels interleaved (RGB order for 3 channels).
struct Image8 {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c = 0) const {
    return pixels[(y * width + x) * channels + c];
  }
};

// PNG or JPEG; color images come back as RGB.
Image8 read_rgb(const std::filesystem::path& path);
Image8 read_gray(const std::filesystem::path& path);
// Lossless PNG; output bytes are a deterministic function of the pixels.
void write_png(const std::filesystem::path& path, const Image8& image);
std::vector<std::uint8_t> encode_png(const Image8& image);

// Maps values in [0, 1] to round(255 p).
Image8 gray_from_unit(std::size_t height, std::size_t width, const std::vector<double>& values);

}  // namespace sdg::io
