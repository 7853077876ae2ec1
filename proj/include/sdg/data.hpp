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

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sdg/image_io.hpp"
#include "sdg/tensor.hpp"

namespace sdg::data {

// Per-channel ImageNet statistics applied after scaling to [0, 1].
inline constexpr std::array<double, 3> kChannelMean{0.485, 0.456, 0.406};
inline constexpr std::array<double, 3> kChannelStd{0.229, 0.224, 0.225};

struct SampleRecord {
  std::filesystem::path image;
  std::filesystem::path mask;
  std::string split;
  std::optional<std::string> caption;

  std::string id() const { return image.stem().string(); }
};

// 3 x size x size, bilinearly resized then normalized per channel.
Tensor image_tensor(const io::Image8& image, std::size_t size);
// size x size in {0, 1}: scaled to [0, 1], bilinearly resized, then
// binarized at 0.5.
Tensor mask_tensor(const io::Image8& mask, std::size_t size);

// Decode failures and extent mismatches raise FormatError naming both paths.
std::pair<Tensor, Tensor> load_pair(const SampleRecord& record, std::size_t size);

// Pairs <root>/images/<stem>.{png,jpg,jpeg} with <root>/masks/<stem>.png and
// attaches captions from <root>/captions.tsv when present. Lexicographic
// by image filename; a missing directory or mask is an IoError.
std::vector<SampleRecord> list_dataset(const std::filesystem::path& root, const std::string& split);

// Undoes the channel normalization, for overlays.
io::Image8 denormalize(const Tensor& image);

}  // namespace sdg::data
