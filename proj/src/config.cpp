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

#include "sdg/config.hpp"

#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>
#include <type_traits>
#include <vector>

namespace sdg {

namespace {

using nlohmann::json;

// Walks one JSON object, remembering which keys were consumed so that the
// leftovers can be reported with their full path.
class Section {
 public:
  Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw ConfigError(where() + ": expected an object");
  }
  ~Section() = default;

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    const auto it = node_.find(key);
    if (it == node_.end()) return;
    if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
      if (!it->is_number_integer()) throw ConfigError(child(key) + ": expected an integer, got " + it->type_name());
    }
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw ConfigError(child(key) + ": expected " + type_name<T>() + ", got " + it->type_name());
    }
  }

  void read_path(const char* key, std::filesystem::path& out, const std::filesystem::path& base) {
    std::string s;
    read(key, s);
    if (node_.contains(key)) {
      out = s.empty() ? std::filesystem::path() : std::filesystem::path(s);
      if (!out.empty() && out.is_relative()) out = base / out;
    }
  }

  bool has(const char* key) {
    seen_.insert(key);
    return node_.contains(key);
  }
  Section sub(const char* key) { return Section(node_.at(key), child(key)); }
  const json& raw(const char* key) const { return node_.at(key); }
  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : node_.items()) {
      if (!seen_.count(key)) throw ConfigError(child(key) + ": unknown key");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "<root>" : path_; }
  template <typename T>
  static const char* type_name() {
    if constexpr (std::is_same_v<T, bool>) return "a boolean";
    if constexpr (std::is_same_v<T, std::string>) return "a string";
    if constexpr (std::is_integral_v<T>) return "an integer";
    if constexpr (std::is_floating_point_v<T>) return "a number";
    if constexpr (std::is_same_v<T, std::vector<bool>>) return "an array of booleans";
    return "a value of another type";
  }

  const json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename T>
void read_unsigned(Section& s, const char* key, T& out) {
  std::int64_t v = static_cast<std::int64_t>(out);
  s.read(key, v);
  if (v < 0) throw ConfigError(s.child(key) + ": must be nonnegative");
  out = static_cast<T>(v);
}

void parse_stage(Section s, StageConfig& st) {
  read_unsigned(s, "embed_dim", st.embed_dim);
  read_unsigned(s, "depth", st.depth);
  read_unsigned(s, "heads", st.heads);
  read_unsigned(s, "reduction", st.reduction);
  read_unsigned(s, "patch_size", st.patch_size);
  read_unsigned(s, "stride", st.stride);
  s.finish();
}

void parse_model(Section s, SdgSodConfig& m, std::size_t& vocab_max) {
  if (s.has("backbone")) {
    Section b = s.sub("backbone");
    if (b.has("stages")) {
      const json& stages = b.raw("stages");
      if (!stages.is_array() || stages.size() != 4) throw ConfigError(b.child("stages") + ": expected 4 stages");
      for (std::size_t i = 0; i < 4; ++i) {
        parse_stage(Section(stages[i], b.child("stages") + "[" + std::to_string(i) + "]"), m.backbone.stages[i]);
      }
    }
    read_unsigned(b, "mlp_ratio", m.backbone.mlp_ratio);
    b.read("position_embedding", m.backbone.position_embedding);
    b.finish();
  }
  if (s.has("caption")) {
    Section c = s.sub("caption");
    read_unsigned(c, "grid", m.caption.grid);
    read_unsigned(c, "d_model", m.caption.d_model);
    read_unsigned(c, "heads", m.caption.heads);
    read_unsigned(c, "layers", m.caption.layers);
    read_unsigned(c, "ffn_dim", m.caption.ffn_dim);
    read_unsigned(c, "max_len", m.caption.max_len);
    c.read("attention_layer", m.caption.attention_layer);
    read_unsigned(c, "vocab_max", vocab_max);
    if (c.has("encoder_channels")) {
      std::vector<std::size_t> ch;
      c.read("encoder_channels", ch);
      if (ch.size() != 4) throw ConfigError(c.child("encoder_channels") + ": expected 4 entries");
      std::copy(ch.begin(), ch.end(), m.caption.encoder_channels.begin());
    }
    c.finish();
  }
  read_unsigned(s, "decoder_dim", m.decoder_dim);
  if (s.has("guidance")) {
    std::vector<bool> g;
    s.read("guidance", g);
    if (g.size() != 4) throw ConfigError(s.child("guidance") + ": expected 4 booleans");
    for (std::size_t i = 0; i < 4; ++i) m.guidance[i] = g[i];
  }
  std::string norm = m.guidance_norm == GuidanceNorm::kMax ? "max" : "minmax";
  s.read("guidance_norm", norm);
  if (norm == "max") {
    m.guidance_norm = GuidanceNorm::kMax;
  } else if (norm == "minmax") {
    m.guidance_norm = GuidanceNorm::kMinMax;
  } else {
    throw ConfigError(s.child("guidance_norm") + ": expected \"max\" or \"minmax\"");
  }
  s.read("joint_caption", m.joint_caption);
  s.finish();
}

void parse_train(Section s, TrainConfig& t) {
  s.read("lr", t.lr);
  read_unsigned(s, "pretrain_epochs", t.pretrain_epochs);
  read_unsigned(s, "finetune_epochs", t.finetune_epochs);
  read_unsigned(s, "image_size", t.image_size);
  read_unsigned(s, "batch_size", t.batch_size);
  s.read("cosine_lr", t.cosine_lr);
  s.read("flip", t.flip);
  read_unsigned(s, "caption_epochs", t.caption_epochs);
  s.read("caption_lr", t.caption_lr);
  read_unsigned(s, "max_steps", t.max_steps);
  read_unsigned(s, "checkpoint_every", t.checkpoint_every);
  s.finish();
}

void parse_metrics(Section s, metrics::MetricsConfig& m) {
  s.read("beta2", m.beta2);
  s.read("alpha", m.alpha);
  read_unsigned(s, "thresholds", m.thresholds);
  s.read("eps", m.eps);
  s.read("adaptive_f", m.adaptive_f);
  s.read("pooled_curves", m.pooled_curves);
  read_unsigned(s, "workers", m.workers);
  s.finish();
}

void parse_data(Section s, DataPaths& d, const std::filesystem::path& base) {
  s.read_path("pretrain", d.pretrain, base);
  s.read_path("finetune", d.finetune, base);
  s.read_path("validation", d.validation, base);
  s.read_path("output", d.output, base);
  s.finish();
}

json to_json(const RunConfig& c) {
  json stages = json::array();
  for (const auto& st : c.model.backbone.stages) {
    stages.push_back({{"embed_dim", st.embed_dim}, {"depth", st.depth}, {"heads", st.heads},
                      {"reduction", st.reduction}, {"patch_size", st.patch_size}, {"stride", st.stride}});
  }
  const auto& cap = c.model.caption;
  json j;
  j["seed"] = c.seed;
  j["model"] = {
      {"backbone",
       {{"stages", stages},
        {"mlp_ratio", c.model.backbone.mlp_ratio},
        {"position_embedding", c.model.backbone.position_embedding}}},
      {"caption",
       {{"grid", cap.grid},
        {"d_model", cap.d_model},
        {"heads", cap.heads},
        {"layers", cap.layers},
        {"ffn_dim", cap.ffn_dim},
        {"max_len", cap.max_len},
        {"attention_layer", cap.attention_layer},
        {"vocab_max", c.vocab_max},
        {"encoder_channels", std::vector<std::size_t>(cap.encoder_channels.begin(), cap.encoder_channels.end())}}},
      {"decoder_dim", c.model.decoder_dim},
      {"guidance", std::vector<bool>(c.model.guidance.begin(), c.model.guidance.end())},
      {"guidance_norm", c.model.guidance_norm == GuidanceNorm::kMax ? "max" : "minmax"},
      {"joint_caption", c.model.joint_caption}};
  const auto& t = c.train;
  j["train"] = {{"lr", t.lr},
                {"pretrain_epochs", t.pretrain_epochs},
                {"finetune_epochs", t.finetune_epochs},
                {"image_size", t.image_size},
                {"batch_size", t.batch_size},
                {"cosine_lr", t.cosine_lr},
                {"flip", t.flip},
                {"caption_epochs", t.caption_epochs},
                {"caption_lr", t.caption_lr},
                {"max_steps", t.max_steps},
                {"checkpoint_every", t.checkpoint_every}};
  const auto& m = c.metrics;
  j["metrics"] = {{"beta2", m.beta2},           {"alpha", m.alpha},
                  {"thresholds", m.thresholds}, {"eps", m.eps},
                  {"adaptive_f", m.adaptive_f}, {"pooled_curves", m.pooled_curves},
                  {"workers", m.workers}};
  j["data"] = {{"pretrain", c.data.pretrain.generic_string()},
               {"finetune", c.data.finetune.generic_string()},
               {"validation", c.data.validation.generic_string()},
               {"output", c.data.output.generic_string()}};
  return j;
}

}  // namespace

void RunConfig::validate() const {
  model.backbone.validate();
  // The vocabulary is built from the data later; check against its ceiling.
  CaptionConfig caption = model.caption;
  caption.vocab_size = vocab_max;
  caption.validate();
  train.validate();
  metrics.validate();
  if (vocab_max < 5) throw ConfigError("model.caption.vocab_max: must leave room for words beyond the reserved tokens");
}

RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig cfg;
  Section root(doc, "");
  std::int64_t seed = static_cast<std::int64_t>(cfg.seed);
  root.read("seed", seed);
  if (seed < 0) throw ConfigError("seed: must be nonnegative");
  cfg.seed = static_cast<std::uint64_t>(seed);
  if (root.has("model")) parse_model(root.sub("model"), cfg.model, cfg.vocab_max);
  if (root.has("train")) parse_train(root.sub("train"), cfg.train);
  if (root.has("metrics")) parse_metrics(root.sub("metrics"), cfg.metrics);
  if (root.has("data")) parse_data(root.sub("data"), cfg.data, base_dir);
  root.finish();
  cfg.train.seed = cfg.seed;
  cfg.model.backbone.image_size = cfg.train.image_size;
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_run_config(ss.str(), path.parent_path());
}

std::string dump_run_config(const RunConfig& cfg) { return to_json(cfg).dump(2); }

std::string config_hash(const RunConfig& cfg) {
  // Paths are excluded so that relocating a dataset keeps the hash.
  json j = to_json(cfg);
  j.erase("data");
  const std::string text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace sdg
