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
#include <map>
#include <string>
#include <vector>

#include "sdg/nn.hpp"

namespace sdg {

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kSos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;

  Vocabulary();
  explicit Vocabulary(std::vector<std::string> tokens);

  // Whitespace tokenization, lowercased; keeps at most `max_size` entries
  // (reserved tokens included), most frequent first, ties alphabetical.
  static Vocabulary build(const std::vector<std::string>& captions, std::size_t max_size);
  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t size() const { return tokens_.size(); }
  int id(const std::string& token) const;
  const std::string& token(int id) const;
  bool is_special(int id) const { return id == kPad || id == kSos || id == kEos; }

  static std::vector<std::string> tokenize(const std::string& caption);
  // [SOS] words... [EOS]; throws ContractError for an empty caption.
  std::vector<int> encode(const std::string& caption) const;
  // Words only; special tokens dropped.
  std::string decode(const std::vector<int>& ids) const;

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int> ids_;
};

// One line per image: "image_filename<TAB>caption text".
std::vector<std::pair<std::string, std::string>> read_caption_file(const std::filesystem::path& path);

struct CaptionConfig {
  std::size_t grid = 7;
  std::array<std::size_t, 4> encoder_channels{8, 16, 32, 32};
  std::size_t d_model = 32;
  std::size_t heads = 2;
  std::size_t layers = 2;
  std::size_t ffn_dim = 64;
  std::size_t max_len = 12;
  // Decoder layer whose cross-attention supplies word maps; -1 is the last.
  int attention_layer = -1;
  std::size_t vocab_size = 0;  // filled from the vocabulary

  void validate() const;
};

// G: [N_I x D] tokens on a g x g grid (row-major).
struct GridFeatures {
  Tensor tokens;
  std::size_t grid = 7;
};

struct CaptionOutput {
  std::vector<int> tokens;              // [SOS] ... [EOS]
  std::vector<Tensor> attention_maps;   // one g x g map per emitted word
  std::size_t word_count() const { return attention_maps.size(); }
  bool truncated = false;               // word budget exhausted before [EOS]
};

struct DecodeStep {
  Tensor logits;                   // [vocab]
  Tensor cross_attention;          // [g x g], head-averaged
  std::vector<Tensor> per_head;    // [g x g] each
};

// Teacher-forced decoder pass over a whole token sequence.
struct DecoderPass {
  Tensor logits;  // [L x vocab]
  // Cross-attention of the selected layer, averaged over heads: [L x N_I].
  Tensor cross_attention;
  std::vector<Tensor> per_head;  // [L x N_I] each
};

class CaptionModel {
 public:
  CaptionModel(const CaptionConfig& cfg, ParameterStore& store, Rng& rng);

  const CaptionConfig& config() const { return cfg_; }

  GridFeatures visual_encode(const Tensor& image) const;
  DecoderPass decode(const GridFeatures& grid, const std::vector<int>& tokens) const;
  DecodeStep decode_step(const GridFeatures& grid, const std::vector<int>& prefix) const;
  // Greedy decoding from [SOS]; at most max_len tokens including [SOS] and
  // the closing [EOS], so at most max_len - 2 words.
  CaptionOutput generate(const GridFeatures& grid, std::size_t max_len) const;
  CaptionOutput generate(const Tensor& image) const { return generate(visual_encode(image), cfg_.max_len); }

  // Mean teacher-forced cross-entropy over the non-[PAD] targets of a
  // [SOS]-wrapped token sequence.
  Tensor loss(const Tensor& image, const std::vector<int>& gold) const;

 private:
  struct Layer {
    LayerNorm self_norm, cross_norm, ffn_norm;
    Linear self_q, self_k, self_v, self_out;
    Linear cross_q, cross_k, cross_v, cross_out;
    Linear fc1, fc2;
  };

  void check_tokens(const std::vector<int>& tokens) const;

  CaptionConfig cfg_;
  std::array<Conv2d, 4> convs_;
  Linear visual_proj_;
  Tensor token_embed_;
  Tensor position_embed_;
  std::vector<Layer> layers_;
  LayerNorm final_norm_;
  Linear head_;
};

}  // namespace sdg
