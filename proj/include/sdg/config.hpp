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
#include <string>

#include "sdg/fusion.hpp"
#include "sdg/metrics.hpp"
#include "sdg/trainer.hpp"

namespace sdg {

struct DataPaths {
  std::filesystem::path pretrain;    // dataset root with images/ and masks/
  std::filesystem::path finetune;
  std::filesystem::path validation;  // optional
  std::filesystem::path output = "runs/default";
};

// Everything a run needs: model stages, training schedule, metrics, paths.
struct RunConfig {
  std::uint64_t seed = 0;
  SdgSodConfig model;
  std::size_t vocab_max = 256;
  TrainConfig train;
  metrics::MetricsConfig metrics;
  DataPaths data;

  void validate() const;
};

// Parses a JSON document. Unknown keys and type mismatches raise ConfigError
// carrying the dotted key path; relative paths resolve against base_dir.
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

// Canonical JSON with every field spelled out.
std::string dump_run_config(const RunConfig& cfg);
// 16 hex digits of a 64-bit FNV-1a hash of the canonical dump.
std::string config_hash(const RunConfig& cfg);

}  // namespace sdg
