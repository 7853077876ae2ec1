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

#include "sdg/fusion.hpp"

#include <algorithm>

#include "sdg/ops.hpp"

namespace sdg {

Tensor aggregate_attention(const std::vector<Tensor>& maps, std::size_t h, std::size_t w, GuidanceNorm norm) {
  if (h == 0 || w == 0) throw DimensionError("aggregate_attention: zero target extent");
  if (maps.empty()) return Tensor::full({h, w}, 1.0);
  Tensor total;
  for (const auto& m : maps) {
    if (m.rank() != 2) throw DimensionError("aggregate_attention: map of shape " + shape_str(m.shape()));
    for (double v : m.data()) {
      if (v < 0) throw ContractError("aggregate_attention: negative attention value");
    }
    const Tensor resized = ops::bilinear_resize(ops::reshape(m, {1, m.dim(0), m.dim(1)}), h, w);
    total = total.defined() ? ops::add(total, resized) : resized;
  }
  total = ops::reshape(total, {h, w});
  const Tensor peak = ops::max_all(total);
  if (norm == GuidanceNorm::kMax) {
    if (peak.item() == 0.0) return Tensor::full({h, w}, 1.0);
    return ops::div_by(total, peak);
  }
  const Tensor floor = ops::neg(ops::max_all(ops::neg(total)));
  const Tensor range = ops::sub(peak, floor);
  if (range.item() == 0.0) return Tensor::full({h, w}, 1.0);
  const Tensor shifted = ops::sub(total, ops::mul_by(Tensor::full({h, w}, 1.0), floor));
  return ops::div_by(shifted, range);
}

Tensor fuse_level(const Tensor& features, const Tensor& guidance, const Linear& xi) {
  if (features.rank() != 3 || guidance.rank() != 2 || guidance.dim(0) != features.dim(1) ||
      guidance.dim(1) != features.dim(2)) {
    throw DimensionError("fuse_level: guidance " + shape_str(guidance.shape()) + " does not match features " +
                         shape_str(features.shape()));
  }
  const std::size_t c = features.dim(0), h = features.dim(1), w = features.dim(2);
  const Tensor modulated = ops::mul(features, ops::repeat_leading(guidance, c));
  const Tensor projected = tokens_to_map(xi(map_to_tokens(modulated)), h, w);
  return ops::add(projected, features);
}

SaliencyDecoder::SaliencyDecoder(ParameterStore& store, const BackboneConfig& cfg, std::size_t dim, Rng& rng) {
  for (std::size_t i = 0; i < 4; ++i) {
    align_[i] = Linear::make(store, "decoder.align" + std::to_string(i + 1), cfg.stages[i].embed_dim, dim, rng);
  }
  classifier_ = Linear::make(store, "decoder.classifier", 4 * dim, 1, rng);
}

Tensor SaliencyDecoder::quarter_logits(const FeaturePyramid& pyramid, std::size_t height, std::size_t width) const {
  const std::size_t qh = height / 4, qw = width / 4;
  std::vector<Tensor> aligned;
  for (std::size_t i = 0; i < 4; ++i) {
    const Tensor& level = pyramid.levels[i];
    const Tensor mapped = tokens_to_map(align_[i](map_to_tokens(level)), level.dim(1), level.dim(2));
    aligned.push_back(ops::bilinear_resize(mapped, qh, qw));
  }
  const Tensor fused = ops::concat(aligned, 0);
  return tokens_to_map(classifier_(map_to_tokens(fused)), qh, qw);
}

Tensor SaliencyDecoder::operator()(const FeaturePyramid& pyramid, std::size_t height, std::size_t width) const {
  const Tensor full = ops::bilinear_resize(quarter_logits(pyramid, height, width), height, width);
  return ops::reshape(full, {height, width});
}

SdgSodModel::SdgSodModel(SdgSodConfig cfg, const Vocabulary& vocab, std::uint64_t seed)
    : cfg_(std::move(cfg)), vocab_(vocab) {
  cfg_.caption.vocab_size = vocab_.size();
  if (cfg_.decoder_dim == 0) {
    cfg_.decoder_dim = cfg_.backbone.stages[0].embed_dim;
    for (const auto& s : cfg_.backbone.stages) cfg_.decoder_dim = std::min(cfg_.decoder_dim, s.embed_dim);
  }
  Rng sod_rng(seed);
  backbone_ = std::make_unique<PvtBackbone>(cfg_.backbone, sod_params_, sod_rng);
  for (std::size_t i = 0; i < 4; ++i) {
    // Zero-initialized so that fusion starts as the identity on features.
    const std::size_t c = cfg_.backbone.stages[i].embed_dim;
    const std::string name = "fusion.xi" + std::to_string(i + 1);
    xi_[i].weight = sod_params_.constant(name + ".weight", {c, c}, 0.0);
    xi_[i].bias = sod_params_.constant(name + ".bias", {c}, 0.0);
  }
  decoder_ = SaliencyDecoder(sod_params_, cfg_.backbone, cfg_.decoder_dim, sod_rng);
  Rng caption_rng(seed ^ 0x5DC0A7105EEDULL);
  caption_ = std::make_unique<CaptionModel>(cfg_.caption, caption_params_, caption_rng);
}

CaptionOutput SdgSodModel::caption_for(const Tensor& image) const {
  if (cfg_.joint_caption) return caption_->generate(image);
  NoGradGuard no_grad;
  return caption_->generate(image);
}

Prediction SdgSodModel::predict(const Tensor& image, const GuidanceFlags& flags) const {
  const bool any = std::any_of(flags.begin(), flags.end(), [](bool f) { return f; });
  if (!any) return run(image, nullptr, {}, flags);
  const CaptionOutput caption = caption_for(image);
  return run(image, &caption, caption.attention_maps, flags);
}

Prediction SdgSodModel::predict_with_maps(const Tensor& image, const std::vector<Tensor>& maps,
                                          const GuidanceFlags& flags) const {
  return run(image, nullptr, maps, flags);
}

Prediction SdgSodModel::run(const Tensor& image, const CaptionOutput* caption, const std::vector<Tensor>& maps,
                            const GuidanceFlags& flags) const {
  FeaturePyramid pyramid = backbone_->forward(image);
  Prediction out;
  if (caption) out.caption = *caption;
  for (std::size_t i = 0; i < 4; ++i) {
    if (!flags[i]) continue;
    const Tensor& level = pyramid.levels[i];
    out.guidance[i] = aggregate_attention(maps, level.dim(1), level.dim(2), cfg_.guidance_norm);
    pyramid.levels[i] = fuse_level(level, out.guidance[i], xi_[i]);
  }
  out.logits = decoder_(pyramid, image.dim(1), image.dim(2));
  out.saliency = ops::sigmoid(out.logits);
  return out;
}

Tensor SdgSodModel::predict_unguided_logits(const Tensor& image) const {
  return decoder_(backbone_->forward(image), image.dim(1), image.dim(2));
}

}  // namespace sdg
