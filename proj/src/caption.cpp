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

#include "sdg/caption.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "sdg/ops.hpp"

namespace sdg {

// --- vocabulary -----------------------------------------------------------

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
  const std::vector<std::string> reserved{"[PAD]", "[SOS]", "[EOS]", "[UNK]"};
  if (tokens.size() < reserved.size() || !std::equal(reserved.begin(), reserved.end(), tokens.begin())) {
    std::vector<std::string> merged = reserved;
    for (auto& t : tokens) {
      if (std::find(reserved.begin(), reserved.end(), t) == reserved.end()) merged.push_back(std::move(t));
    }
    tokens = std::move(merged);
  }
  tokens_ = std::move(tokens);
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!ids_.emplace(tokens_[i], static_cast<int>(i)).second) {
      throw FormatError("duplicate vocabulary token '" + tokens_[i] + "'");
    }
  }
}

std::vector<std::string> Vocabulary::tokenize(const std::string& caption) {
  std::istringstream is(caption);
  std::vector<std::string> words;
  std::string w;
  while (is >> w) {
    std::transform(w.begin(), w.end(), w.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    words.push_back(w);
  }
  return words;
}

Vocabulary Vocabulary::build(const std::vector<std::string>& captions, std::size_t max_size) {
  std::map<std::string, std::size_t> counts;
  for (const auto& c : captions)
    for (const auto& w : tokenize(c)) ++counts[w];
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens{"[PAD]", "[SOS]", "[EOS]", "[UNK]"};
  for (const auto& [word, n] : ranked) {
    if (tokens.size() >= max_size) break;
    tokens.push_back(word);
  }
  return Vocabulary(std::move(tokens));
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read vocabulary " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return Vocabulary(std::move(tokens));
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write vocabulary " + path.string());
  for (const auto& t : tokens_) os << t << '\n';
}

int Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw ContractError("token id " + std::to_string(id) + " outside vocabulary");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(const std::string& caption) const {
  const auto words = tokenize(caption);
  if (words.empty()) throw ContractError("empty caption");
  std::vector<int> ids{kSos};
  for (const auto& w : words) ids.push_back(id(w));
  ids.push_back(kEos);
  return ids;
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) {
    if (is_special(id)) continue;
    if (!out.empty()) out += ' ';
    out += token(id);
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> read_caption_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read captions " + path.string());
  std::vector<std::pair<std::string, std::string>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": missing tab separator");
    }
    rows.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  return rows;
}

// --- model ----------------------------------------------------------------

void CaptionConfig::validate() const {
  if (grid == 0 || d_model == 0 || heads == 0 || layers == 0 || ffn_dim == 0) {
    throw ConfigError("caption: grid, d_model, heads, layers and ffn_dim must be positive");
  }
  if (d_model % heads != 0) throw ConfigError("caption: d_model not divisible by heads");
  if (max_len < 2) throw ConfigError("caption: max_len must be at least 2");
  if (vocab_size < 4) throw ConfigError("caption: vocabulary must contain the reserved tokens");
  const auto n = static_cast<int>(layers);
  if (attention_layer < -n || attention_layer >= n) throw ConfigError("caption: attention_layer out of range");
  for (auto c : encoder_channels)
    if (c == 0) throw ConfigError("caption: encoder channels must be positive");
}

namespace {

// Multi-head scaled dot-product attention; `weights`, when given, receives
// each head's attention matrix.
Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads, bool causal,
              std::vector<Tensor>* weights) {
  const std::size_t dim = q.dim(1), head_dim = dim / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  std::vector<Tensor> outs;
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor qh = ops::slice(q, 1, h * head_dim, head_dim);
    const Tensor kh = ops::slice(k, 1, h * head_dim, head_dim);
    const Tensor vh = ops::slice(v, 1, h * head_dim, head_dim);
    const Tensor scores = ops::scale(ops::matmul(qh, ops::transpose(kh)), scale);
    const Tensor a = causal ? ops::softmax_causal(scores) : ops::softmax_last(scores);
    if (weights) weights->push_back(a);
    outs.push_back(ops::matmul(a, vh));
  }
  return heads == 1 ? outs[0] : ops::concat(outs, 1);
}

}  // namespace

CaptionModel::CaptionModel(const CaptionConfig& cfg, ParameterStore& store, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  std::size_t in = 3;
  for (std::size_t i = 0; i < 4; ++i) {
    const std::size_t stride = i < 3 ? 2 : 1;
    convs_[i] = Conv2d::make(store, "caption.encoder.conv" + std::to_string(i + 1), in, cfg_.encoder_channels[i], 3,
                             stride, 1, rng);
    in = cfg_.encoder_channels[i];
  }
  visual_proj_ = Linear::make(store, "caption.encoder.proj", in, cfg_.d_model, rng);
  token_embed_ = store.weight("caption.decoder.token_embed", {cfg_.vocab_size, cfg_.d_model}, 1, rng);
  position_embed_ = store.weight("caption.decoder.position_embed", {cfg_.max_len, cfg_.d_model}, 1, rng);
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    const std::string p = "caption.decoder.layer" + std::to_string(l);
    const std::size_t d = cfg_.d_model;
    Layer layer;
    layer.self_norm = LayerNorm::make(store, p + ".self_norm", d);
    layer.self_q = Linear::make(store, p + ".self.q", d, d, rng);
    layer.self_k = Linear::make(store, p + ".self.k", d, d, rng);
    layer.self_v = Linear::make(store, p + ".self.v", d, d, rng);
    layer.self_out = Linear::make(store, p + ".self.out", d, d, rng);
    layer.cross_norm = LayerNorm::make(store, p + ".cross_norm", d);
    layer.cross_q = Linear::make(store, p + ".cross.q", d, d, rng);
    layer.cross_k = Linear::make(store, p + ".cross.k", d, d, rng);
    layer.cross_v = Linear::make(store, p + ".cross.v", d, d, rng);
    layer.cross_out = Linear::make(store, p + ".cross.out", d, d, rng);
    layer.ffn_norm = LayerNorm::make(store, p + ".ffn_norm", d);
    layer.fc1 = Linear::make(store, p + ".ffn.fc1", d, cfg_.ffn_dim, rng);
    layer.fc2 = Linear::make(store, p + ".ffn.fc2", cfg_.ffn_dim, d, rng);
    layers_.push_back(std::move(layer));
  }
  final_norm_ = LayerNorm::make(store, "caption.decoder.final_norm", cfg_.d_model);
  head_ = Linear::make(store, "caption.decoder.head", cfg_.d_model, cfg_.vocab_size, rng);
}

GridFeatures CaptionModel::visual_encode(const Tensor& image) const {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw DimensionError("visual_encode: expected 3 x H x W image, got " + shape_str(image.shape()));
  }
  if (image.dim(1) % 8 != 0 || image.dim(2) % 8 != 0) {
    throw DimensionError("visual_encode: extents " + shape_str(image.shape()) + " not divisible by stride 8");
  }
  Tensor x = image;
  for (const auto& conv : convs_) x = ops::gelu(conv(x));
  x = ops::adaptive_avg_pool2d(x, cfg_.grid, cfg_.grid);
  return GridFeatures{visual_proj_(map_to_tokens(x)), cfg_.grid};
}

void CaptionModel::check_tokens(const std::vector<int>& tokens) const {
  if (tokens.empty() || tokens.front() != Vocabulary::kSos) {
    throw ContractError("decoder input must be non-empty and begin with [SOS]");
  }
  if (tokens.size() > cfg_.max_len) {
    throw ContractError("decoder input of " + std::to_string(tokens.size()) + " tokens exceeds max_len " +
                        std::to_string(cfg_.max_len));
  }
  for (int t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= cfg_.vocab_size) {
      throw ContractError("token id " + std::to_string(t) + " outside vocabulary of " +
                          std::to_string(cfg_.vocab_size));
    }
  }
}

DecoderPass CaptionModel::decode(const GridFeatures& grid, const std::vector<int>& tokens) const {
  check_tokens(tokens);
  if (grid.tokens.rank() != 2 || grid.tokens.dim(1) != cfg_.d_model || grid.tokens.dim(0) != grid.grid * grid.grid) {
    throw DimensionError("decode: grid features " + shape_str(grid.tokens.shape()) + " do not match config");
  }
  const std::size_t len = tokens.size();
  Tensor x = ops::add(ops::gather_rows(token_embed_, tokens), ops::slice(position_embed_, 0, 0, len));
  const auto n = static_cast<int>(layers_.size());
  const std::size_t map_layer = static_cast<std::size_t>(cfg_.attention_layer < 0 ? n + cfg_.attention_layer
                                                                                  : cfg_.attention_layer);
  DecoderPass pass;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    const Tensor hs = layer.self_norm(x);
    x = ops::add(x, layer.self_out(attend(layer.self_q(hs), layer.self_k(hs), layer.self_v(hs), cfg_.heads, true,
                                          nullptr)));
    const Tensor hc = layer.cross_norm(x);
    std::vector<Tensor> weights;
    x = ops::add(x, layer.cross_out(attend(layer.cross_q(hc), layer.cross_k(grid.tokens), layer.cross_v(grid.tokens),
                                           cfg_.heads, false, l == map_layer ? &weights : nullptr)));
    if (l == map_layer) {
      Tensor avg = weights[0];
      for (std::size_t h = 1; h < weights.size(); ++h) avg = ops::add(avg, weights[h]);
      pass.cross_attention = ops::scale(avg, 1.0 / static_cast<double>(weights.size()));
      pass.per_head = std::move(weights);
    }
    x = ops::add(x, layer.fc2(ops::gelu(layer.fc1(layer.ffn_norm(x)))));
  }
  pass.logits = head_(final_norm_(x));
  return pass;
}

DecodeStep CaptionModel::decode_step(const GridFeatures& grid, const std::vector<int>& prefix) const {
  DecoderPass pass = decode(grid, prefix);
  const std::size_t last = prefix.size() - 1, g = grid.grid;
  DecodeStep step;
  step.logits = ops::reshape(ops::slice(pass.logits, 0, last, 1), {cfg_.vocab_size});
  step.cross_attention = ops::reshape(ops::slice(pass.cross_attention, 0, last, 1), {g, g});
  for (const auto& h : pass.per_head) step.per_head.push_back(ops::reshape(ops::slice(h, 0, last, 1), {g, g}));
  return step;
}

CaptionOutput CaptionModel::generate(const GridFeatures& grid, std::size_t max_len) const {
  if (max_len < 2) throw ContractError("generate: max_len must be at least 2");
  if (max_len > cfg_.max_len) {
    throw ContractError("generate: max_len " + std::to_string(max_len) + " exceeds the decoder's " +
                        std::to_string(cfg_.max_len) + " positions");
  }
  CaptionOutput out;
  out.tokens = {Vocabulary::kSos};
  while (true) {
    if (out.attention_maps.size() == max_len - 2) {
      out.tokens.push_back(Vocabulary::kEos);
      out.truncated = true;
      break;
    }
    DecodeStep step = decode_step(grid, out.tokens);
    auto logits = step.logits.data();
    // [PAD] and [SOS] are never emitted.
    int best = Vocabulary::kEos;
    for (std::size_t i = Vocabulary::kEos + 1; i < logits.size(); ++i) {
      if (logits[i] > logits[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
    }
    out.tokens.push_back(best);
    if (best == Vocabulary::kEos) break;
    out.attention_maps.push_back(step.cross_attention);
  }
  return out;
}

Tensor CaptionModel::loss(const Tensor& image, const std::vector<int>& gold) const {
  if (gold.size() < 3 || gold.front() != Vocabulary::kSos) {
    throw ContractError("caption loss needs [SOS] word... [EOS]; got an empty caption");
  }
  const auto eos = std::find(gold.begin(), gold.end(), Vocabulary::kEos);
  if (eos == gold.end() || eos == gold.begin() + 1) {
    throw ContractError("caption loss needs at least one word followed by [EOS]");
  }
  std::vector<int> inputs(gold.begin(), gold.end() - 1);
  std::vector<int> targets(gold.begin() + 1, gold.end());
  for (int& t : targets)
    if (t == Vocabulary::kPad) t = -1;
  const DecoderPass pass = decode(visual_encode(image), inputs);
  return ops::cross_entropy(pass.logits, targets, -1);
}

}  // namespace sdg
