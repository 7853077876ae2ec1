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

#include "sdg/backbone.hpp"

#include <cmath>

#include "sdg/ops.hpp"

namespace sdg {

namespace {

std::size_t exact_sqrt(std::size_t r) {
  auto s = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(r))));
  return s * s == r ? s : 0;
}

std::string stage_name(std::size_t i) { return "stage" + std::to_string(i + 1); }

}  // namespace

void StageConfig::validate(std::size_t stage_index) const {
  const std::string where = "stage " + std::to_string(stage_index + 1) + ": ";
  if (embed_dim == 0 || heads == 0 || depth == 0) throw ConfigError(where + "embed_dim, heads and depth must be positive");
  if (embed_dim % heads != 0) {
    throw ConfigError(where + "embed_dim " + std::to_string(embed_dim) + " not divisible by heads " +
                      std::to_string(heads));
  }
  if (reduction == 0 || exact_sqrt(reduction) == 0) {
    throw ConfigError(where + "reduction " + std::to_string(reduction) + " is not a perfect square");
  }
  if (stride == 0 || patch_size <= stride) throw ConfigError(where + "patch_size must exceed stride");
}

BackboneConfig BackboneConfig::toy() {
  BackboneConfig cfg;
  const std::array<std::size_t, 4> dims{8, 16, 32, 64}, heads{1, 2, 4, 8}, reductions{64, 16, 4, 1};
  for (std::size_t i = 0; i < 4; ++i) {
    cfg.stages[i].embed_dim = dims[i];
    cfg.stages[i].heads = heads[i];
    cfg.stages[i].reduction = reductions[i];
    cfg.stages[i].depth = 2;
    cfg.stages[i].patch_size = i == 0 ? 7 : 3;
    cfg.stages[i].stride = i == 0 ? 4 : 2;
  }
  return cfg;
}

BackboneConfig BackboneConfig::with_depths(const std::array<std::size_t, 4>& depths) const {
  BackboneConfig cfg = *this;
  for (std::size_t i = 0; i < 4; ++i) cfg.stages[i].depth = depths[i];
  return cfg;
}

void BackboneConfig::validate() const {
  for (std::size_t i = 0; i < 4; ++i) stages[i].validate(i);
  if (stages[0].stride != 4) throw ConfigError("stage 1: stride must be 4");
  for (std::size_t i = 1; i < 4; ++i) {
    if (stages[i].stride != 2) throw ConfigError("stage " + std::to_string(i + 1) + ": stride must be 2");
  }
  if (in_channels == 0 || mlp_ratio == 0) throw ConfigError("in_channels and mlp_ratio must be positive");
  if (position_embedding && (image_size == 0 || image_size % 32 != 0)) {
    throw ConfigError("image_size must be a positive multiple of 32 when position embeddings are enabled");
  }
}

Tensor spatial_reduce(const Tensor& tokens, std::size_t h, std::size_t w, std::size_t reduction,
                      const Linear& proj, const LayerNorm& norm) {
  if (tokens.rank() != 2 || tokens.dim(0) != h * w) {
    throw DimensionError("spatial_reduce: " + shape_str(tokens.shape()) + " is not a " + std::to_string(h) + "x" +
                         std::to_string(w) + " token grid");
  }
  const std::size_t side = exact_sqrt(reduction);
  if (side == 0) throw ConfigError("spatial_reduce: reduction " + std::to_string(reduction) + " is not a perfect square");
  if ((h * w) % reduction != 0 || h % side != 0 || w % side != 0) {
    throw DimensionError("spatial_reduce: " + std::to_string(h) + "x" + std::to_string(w) +
                         " grid not divisible into " + std::to_string(side) + "x" + std::to_string(side) + " blocks");
  }
  const std::size_t c = tokens.dim(1);
  Tensor grouped = tokens;
  if (reduction > 1) {
    std::vector<int> order;
    order.reserve(h * w);
    for (std::size_t by = 0; by < h / side; ++by)
      for (std::size_t bx = 0; bx < w / side; ++bx)
        for (std::size_t dy = 0; dy < side; ++dy)
          for (std::size_t dx = 0; dx < side; ++dx)
            order.push_back(static_cast<int>((by * side + dy) * w + bx * side + dx));
    grouped = ops::reshape(ops::gather_rows(tokens, order), {h * w / reduction, c * reduction});
  }
  return norm(proj(grouped));
}

EfficientSelfAttention::EfficientSelfAttention(ParameterStore& store, const std::string& name, std::size_t dim,
                                               std::size_t heads, std::size_t reduction, Rng& rng)
    : dim_(dim), heads_(heads), reduction_(reduction) {
  query_ = Linear::make(store, name + ".q", dim, dim, rng);
  key_ = Linear::make(store, name + ".k", dim, dim, rng);
  value_ = Linear::make(store, name + ".v", dim, dim, rng);
  reduce_proj_ = Linear::make(store, name + ".sr", dim * reduction, dim, rng);
  reduce_norm_ = LayerNorm::make(store, name + ".sr_norm", dim);
  out_ = Linear::make(store, name + ".proj", dim, dim, rng);
}

Tensor EfficientSelfAttention::reduce(const Tensor& tokens, std::size_t h, std::size_t w) const {
  return spatial_reduce(tokens, h, w, reduction_, reduce_proj_, reduce_norm_);
}

Tensor EfficientSelfAttention::operator()(const Tensor& tokens, std::size_t h, std::size_t w,
                                          AttentionStats* stats) const {
  const Tensor q = query_(tokens);
  const Tensor reduced = reduce(tokens, h, w);
  const Tensor k = key_(reduced);
  const Tensor v = value_(reduced);
  const std::size_t head_dim = dim_ / heads_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  if (stats) {
    stats->query_len = q.dim(0);
    stats->kv_len = k.dim(0);
    stats->score_multiplies = 0;
    stats->weights.clear();
  }
  std::vector<Tensor> heads;
  heads.reserve(heads_);
  for (std::size_t hd = 0; hd < heads_; ++hd) {
    const Tensor qh = ops::slice(q, 1, hd * head_dim, head_dim);
    const Tensor kh = ops::slice(k, 1, hd * head_dim, head_dim);
    const Tensor vh = ops::slice(v, 1, hd * head_dim, head_dim);
    const std::uint64_t before = multiply_count();
    const Tensor scores = ops::matmul(qh, ops::transpose(kh));
    const Tensor weights = ops::softmax_last(ops::scale(scores, scale));
    if (stats) {
      stats->score_multiplies += multiply_count() - before;
      if (stats->keep_weights) stats->weights.push_back(weights.detach());
    }
    heads.push_back(ops::matmul(weights, vh));
  }
  const Tensor merged = heads_ == 1 ? heads[0] : ops::concat(heads, 1);
  return out_(merged);
}

TransformerBlock::TransformerBlock(ParameterStore& store, const std::string& name, const StageConfig& cfg,
                                   std::size_t mlp_ratio, Rng& rng) {
  norm1_ = LayerNorm::make(store, name + ".norm1", cfg.embed_dim);
  attn_ = EfficientSelfAttention(store, name + ".attn", cfg.embed_dim, cfg.heads, cfg.reduction, rng);
  norm2_ = LayerNorm::make(store, name + ".norm2", cfg.embed_dim);
  fc1_ = Linear::make(store, name + ".mlp.fc1", cfg.embed_dim, cfg.embed_dim * mlp_ratio, rng);
  fc2_ = Linear::make(store, name + ".mlp.fc2", cfg.embed_dim * mlp_ratio, cfg.embed_dim, rng);
}

Tensor TransformerBlock::operator()(const Tensor& tokens, std::size_t h, std::size_t w, AttentionStats* stats) const {
  const Tensor x = ops::add(tokens, attn_(norm1_(tokens), h, w, stats));
  return ops::add(x, fc2_(ops::gelu(fc1_(norm2_(x)))));
}

PatchMerge::PatchMerge(ParameterStore& store, const std::string& name, std::size_t in_channels,
                       const StageConfig& cfg, Rng& rng)
    : patch_size_(cfg.patch_size) {
  conv_ = Conv2d::make(store, name + ".conv", in_channels, cfg.embed_dim, cfg.patch_size, cfg.stride,
                       cfg.patch_size / 2, rng);
  norm_ = LayerNorm::make(store, name + ".norm", cfg.embed_dim);
}

Tensor PatchMerge::operator()(const Tensor& map) const {
  if (map.rank() != 3) throw DimensionError("patch_merge: expected C x H x W, got " + shape_str(map.shape()));
  if (map.dim(1) < patch_size_ || map.dim(2) < patch_size_) {
    throw DimensionError("patch_merge: input " + shape_str(map.shape()) + " smaller than one " +
                         std::to_string(patch_size_) + "x" + std::to_string(patch_size_) + " patch");
  }
  const Tensor conv = conv_(map);
  return tokens_to_map(norm_(map_to_tokens(conv)), conv.dim(1), conv.dim(2));
}

PvtBackbone::PvtBackbone(const BackboneConfig& cfg, ParameterStore& store, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  std::size_t in = cfg_.in_channels;
  std::size_t side = cfg_.image_size;
  for (std::size_t i = 0; i < 4; ++i) {
    const StageConfig& sc = cfg_.stages[i];
    const std::string prefix = "backbone." + stage_name(i);
    merges_[i] = PatchMerge(store, prefix + ".patch", in, sc, rng);
    side /= sc.stride;
    if (cfg_.position_embedding) {
      positions_[i] = store.weight(prefix + ".pos", {side * side, sc.embed_dim}, sc.embed_dim, rng);
    }
    for (std::size_t b = 0; b < sc.depth; ++b) {
      blocks_[i].emplace_back(store, prefix + ".block" + std::to_string(b), sc, cfg_.mlp_ratio, rng);
    }
    norms_[i] = LayerNorm::make(store, prefix + ".norm", sc.embed_dim);
    in = sc.embed_dim;
  }
}

FeaturePyramid PvtBackbone::forward(const Tensor& image, std::vector<AttentionStats>* stats,
                                    bool keep_weights) const {
  if (image.rank() != 3 || image.dim(0) != cfg_.in_channels) {
    throw DimensionError("backbone: expected " + std::to_string(cfg_.in_channels) + " x H x W image, got " +
                         shape_str(image.shape()));
  }
  if (image.dim(1) % 32 != 0) {
    throw DimensionError("backbone: height " + std::to_string(image.dim(1)) + " is not divisible by 32");
  }
  if (image.dim(2) % 32 != 0) {
    throw DimensionError("backbone: width " + std::to_string(image.dim(2)) + " is not divisible by 32");
  }
  if (cfg_.position_embedding && (image.dim(1) != cfg_.image_size || image.dim(2) != cfg_.image_size)) {
    throw DimensionError("backbone: position embeddings require a " + std::to_string(cfg_.image_size) +
                         "-pixel square input");
  }
  FeaturePyramid pyramid;
  Tensor map = image;
  for (std::size_t i = 0; i < 4; ++i) {
    const Tensor merged = merges_[i](map);
    const std::size_t h = merged.dim(1), w = merged.dim(2);
    Tensor tokens = map_to_tokens(merged);
    if (positions_[i].defined()) tokens = ops::add(tokens, positions_[i]);
    for (const auto& block : blocks_[i]) {
      if (stats) {
        AttentionStats s;
        s.keep_weights = keep_weights;
        tokens = block(tokens, h, w, &s);
        stats->push_back(std::move(s));
      } else {
        tokens = block(tokens, h, w);
      }
    }
    map = tokens_to_map(norms_[i](tokens), h, w);
    pyramid.levels[i] = map;
  }
  return pyramid;
}

}  // namespace sdg
