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
#include <cstdint>
#include <string>
#include <vector>

#include "sdg/nn.hpp"

namespace sdg {

struct StageConfig {
  std::size_t embed_dim = 8;
  std::size_t depth = 2;
  std::size_t heads = 1;
  std::size_t reduction = 1;  // tokens merged per key/value token; a perfect square
  std::size_t patch_size = 3;
  std::size_t stride = 2;

  std::size_t head_dim() const { return embed_dim / heads; }
  void validate(std::size_t stage_index) const;
};

struct BackboneConfig {
  std::array<StageConfig, 4> stages;
  std::size_t in_channels = 3;
  std::size_t mlp_ratio = 4;
  // Learned per-stage position embeddings sized for `image_size`.
  bool position_embedding = false;
  std::size_t image_size = 64;

  // C = [8,16,32,64], heads = [1,2,4,8], R = [64,16,4,1], depths [2,2,2,2].
  static BackboneConfig toy();
  BackboneConfig with_depths(const std::array<std::size_t, 4>& depths) const;
  void validate() const;
};

// F1..F4, each C_i x H_i x W_i at strides 4, 8, 16, 32.
struct FeaturePyramid {
  std::array<Tensor, 4> levels;
};

// Per-attention-call instrumentation.
struct AttentionStats {
  std::size_t query_len = 0;
  std::size_t kv_len = 0;
  std::uint64_t score_multiplies = 0;
  bool keep_weights = false;
  std::vector<Tensor> weights;  // one [query_len x kv_len] matrix per head
};

// Spatial reduction: channel-stacks each sqrt(R) x sqrt(R) block of the
// h x w token grid (row-major block order, row-major inside a block), maps
// C*R -> C and layer-normalizes.
Tensor spatial_reduce(const Tensor& tokens, std::size_t h, std::size_t w, std::size_t reduction,
                      const Linear& proj, const LayerNorm& norm);

class EfficientSelfAttention {
 public:
  EfficientSelfAttention() = default;
  EfficientSelfAttention(ParameterStore& store, const std::string& name, std::size_t dim, std::size_t heads,
                         std::size_t reduction, Rng& rng);

  Tensor operator()(const Tensor& tokens, std::size_t h, std::size_t w, AttentionStats* stats = nullptr) const;
  Tensor reduce(const Tensor& tokens, std::size_t h, std::size_t w) const;

  std::size_t reduction() const { return reduction_; }

 private:
  std::size_t dim_ = 0, heads_ = 1, reduction_ = 1;
  Linear query_, key_, value_, out_;
  Linear reduce_proj_;
  LayerNorm reduce_norm_;
};

class TransformerBlock {
 public:
  TransformerBlock() = default;
  TransformerBlock(ParameterStore& store, const std::string& name, const StageConfig& cfg, std::size_t mlp_ratio,
                   Rng& rng);

  Tensor operator()(const Tensor& tokens, std::size_t h, std::size_t w, AttentionStats* stats = nullptr) const;

 private:
  LayerNorm norm1_, norm2_;
  EfficientSelfAttention attn_;
  Linear fc1_, fc2_;
};

// Overlapping patch merging: strided convolution (kernel > stride, padding
// kernel/2) followed by a token layer norm. Returns tokens and grid extents.
class PatchMerge {
 public:
  PatchMerge() = default;
  PatchMerge(ParameterStore& store, const std::string& name, std::size_t in_channels, const StageConfig& cfg,
             Rng& rng);

  Tensor operator()(const Tensor& map) const;  // C_in x h x w -> C_i x h' x w'

 private:
  std::size_t patch_size_ = 0;
  Conv2d conv_;
  LayerNorm norm_;
};

class PvtBackbone {
 public:
  PvtBackbone(const BackboneConfig& cfg, ParameterStore& store, Rng& rng);

  // `stats`, when given, receives one entry per attention call in execution order.
  FeaturePyramid forward(const Tensor& image, std::vector<AttentionStats>* stats = nullptr,
                         bool keep_weights = false) const;
  const BackboneConfig& config() const { return cfg_; }

 private:
  BackboneConfig cfg_;
  std::array<PatchMerge, 4> merges_;
  std::array<std::vector<TransformerBlock>, 4> blocks_;
  std::array<LayerNorm, 4> norms_;
  std::array<Tensor, 4> positions_;
};

}  // namespace sdg
