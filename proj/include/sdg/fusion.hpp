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
#include <memory>
#include <vector>

#include "sdg/backbone.hpp"
#include "sdg/caption.hpp"

namespace sdg {

enum class GuidanceNorm {
  kMax,     // S / max(S)
  kMinMax,  // (S - min) / (max - min)
};

// normalize(sum_j resize(M_j)) at h x w. Empty input, or a sum whose
// normalizer is zero, yields the all-ones map.
Tensor aggregate_attention(const std::vector<Tensor>& maps, std::size_t h, std::size_t w,
                           GuidanceNorm norm = GuidanceNorm::kMax);

// xi(F * A) + F with A broadcast over channels and xi applied per location.
Tensor fuse_level(const Tensor& features, const Tensor& guidance, const Linear& xi);

using GuidanceFlags = std::array<bool, 4>;

struct SdgSodConfig {
  BackboneConfig backbone = BackboneConfig::toy();
  CaptionConfig caption;
  std::size_t decoder_dim = 0;  // 0 selects min(C_i)
  GuidanceFlags guidance{true, true, true, true};
  GuidanceNorm guidance_norm = GuidanceNorm::kMax;
  // Let gradients reach the caption branch through the attention maps.
  bool joint_caption = false;
};

// All-MLP head: per-level C_i -> D, resize to H/4 x W/4, concat, 4D -> 1,
// bilinear upsample of the logits to H x W.
class SaliencyDecoder {
 public:
  SaliencyDecoder() = default;
  SaliencyDecoder(ParameterStore& store, const BackboneConfig& cfg, std::size_t dim, Rng& rng);

  // Logits at quarter resolution, 1 x H/4 x W/4.
  Tensor quarter_logits(const FeaturePyramid& pyramid, std::size_t height, std::size_t width) const;
  // Full-resolution logits, H x W.
  Tensor operator()(const FeaturePyramid& pyramid, std::size_t height, std::size_t width) const;

 private:
  std::array<Linear, 4> align_;
  Linear classifier_;
};

struct Prediction {
  Tensor logits;    // H x W
  Tensor saliency;  // H x W, sigmoid(logits)
  CaptionOutput caption;
  std::array<Tensor, 4> guidance;  // undefined for levels without guidance
};

class SdgSodModel {
 public:
  SdgSodModel(SdgSodConfig cfg, const Vocabulary& vocab, std::uint64_t seed);

  SdgSodModel(const SdgSodModel&) = delete;
  SdgSodModel& operator=(const SdgSodModel&) = delete;

  const SdgSodConfig& config() const { return cfg_; }
  const Vocabulary& vocabulary() const { return vocab_; }
  ParameterStore& sod_parameters() { return sod_params_; }
  ParameterStore& caption_parameters() { return caption_params_; }
  const ParameterStore& sod_parameters() const { return sod_params_; }
  const ParameterStore& caption_parameters() const { return caption_params_; }
  const PvtBackbone& backbone() const { return *backbone_; }
  const CaptionModel& caption() const { return *caption_; }
  const Linear& xi(std::size_t level) const { return xi_[level]; }

  // Caption from the guidance branch. Recorded on the tape only in joint mode.
  CaptionOutput caption_for(const Tensor& image) const;

  // Full forward with the configured guidance flags.
  Prediction predict(const Tensor& image) const { return predict(image, cfg_.guidance); }
  Prediction predict(const Tensor& image, const GuidanceFlags& flags) const;
  // Forward with externally supplied word maps (no caption decoding).
  Prediction predict_with_maps(const Tensor& image, const std::vector<Tensor>& maps,
                               const GuidanceFlags& flags) const;
  // The unguided PVT-SOD path: backbone then decoder, no fusion code involved.
  Tensor predict_unguided_logits(const Tensor& image) const;

 private:
  Prediction run(const Tensor& image, const CaptionOutput* caption, const std::vector<Tensor>& maps,
                 const GuidanceFlags& flags) const;

  SdgSodConfig cfg_;
  Vocabulary vocab_;
  ParameterStore sod_params_;
  ParameterStore caption_params_;
  std::unique_ptr<PvtBackbone> backbone_;
  std::array<Linear, 4> xi_;
  SaliencyDecoder decoder_;
  std::unique_ptr<CaptionModel> caption_;
};

}  // namespace sdg
