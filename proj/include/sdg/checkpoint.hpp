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

#include <filesystem>
#include <vector>

#include "sdg/nn.hpp"

namespace sdg {

// Binary tensor archive:
//   "SDGT" | u32 version | u32 count |
//   count x (u32 name_len | name bytes | u32 rank | rank x u64 extent | f64 values)
// All integers and floats little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_tensors(const std::filesystem::path& path);

}  // namespace sdg
