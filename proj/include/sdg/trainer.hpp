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
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sdg/data.hpp"
#include "sdg/fusion.hpp"
#include "sdg/loss.hpp"
#include "sdg/optim.hpp"

namespace sdg {

struct TrainConfig {
  double lr = 5e-5;
  std::size_t pretrain_epochs = 30;
  std::size_t finetune_epochs = 80;
  std::size_t image_size = 64;
  std::size_t batch_size = 4;
  std::uint64_t seed = 0;
  bool cosine_lr = false;
  bool flip = true;  // seeded horizontal-flip augmentation
  // Caption branch pre-training, run before the saliency schedule.
  std::size_t caption_epochs = 0;
  double caption_lr = 1e-3;
  std::size_t max_steps = 0;  // 0: no limit
  std::size_t checkpoint_every = 1;

  void validate() const;
};

struct Sample {
  std::string id;
  Tensor image;              // 3 x S x S, normalized
  Tensor mask;               // S x S in {0, 1}
  std::vector<int> caption;  // [SOS] ... [EOS]; empty without a caption
};

// Loads every record at the configured size; captions are encoded with the
// vocabulary and clipped to the decoder's word budget.
std::vector<Sample> load_samples(const std::vector<data::SampleRecord>& records, std::size_t size,
                                 const Vocabulary& vocab, std::size_t max_len);

Tensor flip_horizontal(const Tensor& map);

struct StepLosses {
  double bce = 0;
  double iou = 0;
  double total = 0;
};

struct BatchItem {
  const Sample* sample = nullptr;
  bool flipped = false;
};

class Trainer {
 public:
  Trainer(SdgSodModel& model, TrainConfig cfg);

  const TrainConfig& config() const { return cfg_; }
  Adam& optimizer() { return *sod_opt_; }
  Rng& rng() { return rng_; }
  std::uint64_t steps() const { return steps_; }
  void set_steps(std::uint64_t steps) { steps_ = steps; }

  // One forward/backward/update over the batch mean of the structure loss.
  // A non-finite loss raises NumericError naming the batch and its samples.
  StepLosses train_step(const std::vector<BatchItem>& batch, std::uint64_t batch_id);
  // One pass in seeded order; returns per-epoch mean losses.
  StepLosses train_epoch(const std::vector<Sample>& samples, std::size_t epoch, std::uint64_t total_steps);

  // Teacher-forced caption cross-entropy; one shuffled pass.
  double caption_epoch(const std::vector<Sample>& samples);
  void reset_caption_cache() { caption_cache_.clear(); }

  // Mean absolute error of sigmoid outputs over the samples, no augmentation.
  double evaluate_mae(const std::vector<Sample>& samples);

  // Word maps fed to fusion for a (possibly flipped) sample.
  std::vector<Tensor> guidance_maps(const BatchItem& item, const Tensor& image);

 private:
  SdgSodModel& model_;
  TrainConfig cfg_;
  Rng rng_;
  std::unique_ptr<Adam> sod_opt_;
  std::unique_ptr<Adam> caption_opt_;
  std::uint64_t steps_ = 0;
  std::map<std::pair<std::string, bool>, std::vector<Tensor>> caption_cache_;
};

struct CheckpointManifest {
  std::string config_hash;
  std::size_t epoch = 0;  // epochs completed
  std::uint64_t step = 0;
  std::string rng_state;
  std::string tag;  // "epoch" or "final"
  bool caption_trained = false;
};

// <stem>.sdgt (parameters of both branches plus optimizer state) and
// <stem>.json (manifest).
void save_checkpoint(const std::filesystem::path& stem, const SdgSodModel& model, const Adam* optimizer,
                     const CheckpointManifest& manifest);
CheckpointManifest read_manifest(const std::filesystem::path& stem);
// Restores parameters (and optimizer state when given); returns the manifest.
CheckpointManifest load_checkpoint(const std::filesystem::path& stem, SdgSodModel& model, Adam* optimizer);

struct ScheduleInputs {
  std::vector<Sample> pretrain;
  std::vector<Sample> finetune;
  std::vector<Sample> validation;  // falls back to the fine-tuning set when empty
};

struct ScheduleResult {
  std::size_t epochs = 0;
  std::uint64_t steps = 0;
  double last_val_mae = 0;
  std::filesystem::path final_checkpoint;
};

// Caption pre-training (unless restored), then pretrain and fine-tune
// epochs. Writes checkpoints/epoch_NNNN.{sdgt,json}, checkpoints/final.*,
// and train_log.csv under out_dir. With `resume`, continues from the
// newest epoch checkpoint whose config hash matches.
ScheduleResult run_schedule(SdgSodModel& model, const TrainConfig& cfg, const ScheduleInputs& inputs,
                            const std::filesystem::path& out_dir, const std::string& config_hash, bool resume);

}  // namespace sdg
