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

namespace sdg::fixtures {

// Procedural mini-COCO: images/, masks/ (every "thing" is salient),
// panoptic/ rasters + panoptic.json, captions.tsv. Two stuff bands split by
// a void stripe, with one to three colored shapes on top.
void make_mini_coco(const std::filesystem::path& dir, std::size_t count = 30, std::uint64_t seed = 2026);

// Overfitting set: two salient shapes in opposite corners per image, each
// named by the caption. images/, masks/, captions.tsv.
void make_overfit(const std::filesystem::path& dir, std::size_t count = 8, std::uint64_t seed = 88);

// Evaluation set: gt/ and pred/ maps plus identical/ (pred equal to gt).
void make_eval_set(const std::filesystem::path& dir, std::size_t count = 20, std::uint64_t seed = 20);

}  // namespace sdg::fixtures
