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

#include "sdg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>

#include "sdg/checkpoint.hpp"
#include "sdg/ops.hpp"

namespace sdg {

namespace {

constexpr std::uint64_t kTrainerStream = 0x7A11EDULL;

bool any_guidance(const GuidanceFlags& flags) {
  return std::any_of(flags.begin(), flags.end(), [](bool f) { return f; });
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  return order;
}

std::string epoch_stem(std::size_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "epoch_%04zu", epoch);
  return buf;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr >= 0) || !(caption_lr >= 0)) throw ConfigError("train: learning rates must be nonnegative");
  if (image_size == 0 || image_size % 32 != 0) throw ConfigError("train: image_size must be a positive multiple of 32");
  if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
  if (checkpoint_every == 0) throw ConfigError("train: checkpoint_every must be positive");
}

std::vector<Sample> load_samples(const std::vector<data::SampleRecord>& records, std::size_t size,
                                 const Vocabulary& vocab, std::size_t max_len) {
  std::vector<Sample> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    Sample s;
    s.id = r.id();
    std::tie(s.image, s.mask) = data::load_pair(r, size);
    if (r.caption && !Vocabulary::tokenize(*r.caption).empty()) {
      s.caption = vocab.encode(*r.caption);
      if (s.caption.size() > max_len) {
        s.caption.resize(max_len - 1);
        s.caption.push_back(Vocabulary::kEos);
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

Tensor flip_horizontal(const Tensor& map) {
  if (map.rank() != 2 && map.rank() != 3) throw DimensionError("flip_horizontal: expected a 2-D or 3-D map");
  const std::size_t w = map.dim(map.rank() - 1);
  const std::size_t rows = map.numel() / w;
  std::vector<double> v(map.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t x = 0; x < w; ++x) v[r * w + x] = map[r * w + (w - 1 - x)];
  }
  return Tensor::from(map.shape(), std::move(v));
}

Trainer::Trainer(SdgSodModel& model, TrainConfig cfg) : model_(model), cfg_(cfg), rng_(cfg.seed ^ kTrainerStream) {
  cfg_.validate();
  sod_opt_ = std::make_unique<Adam>(model_.sod_parameters(), AdamConfig{cfg_.lr});
  const double caption_lr = model_.config().joint_caption ? cfg_.lr : cfg_.caption_lr;
  caption_opt_ = std::make_unique<Adam>(model_.caption_parameters(), AdamConfig{caption_lr});
}

std::vector<Tensor> Trainer::guidance_maps(const BatchItem& item, const Tensor& image) {
  const auto key = std::make_pair(item.sample->id, item.flipped);
  const auto it = caption_cache_.find(key);
  if (it != caption_cache_.end()) return it->second;
  std::vector<Tensor> maps = model_.caption_for(image).attention_maps;
  caption_cache_.emplace(key, maps);
  return maps;
}

StepLosses Trainer::train_step(const std::vector<BatchItem>& batch, std::uint64_t batch_id) {
  if (batch.empty()) throw ContractError("train_step: empty batch");
  model_.sod_parameters().zero_grad();
  model_.caption_parameters().zero_grad();
  const GuidanceFlags& flags = model_.config().guidance;
  const bool joint = model_.config().joint_caption && any_guidance(flags);

  auto describe = [&] {
    std::string ids;
    for (const auto& item : batch) ids += (ids.empty() ? "" : ", ") + item.sample->id + (item.flipped ? " (flipped)" : "");
    return "batch " + std::to_string(batch_id) + " [" + ids + "]";
  };

  StepLosses out;
  Tensor loss;
  try {
    Tensor sum;
    for (const auto& item : batch) {
      const Tensor image = item.flipped ? flip_horizontal(item.sample->image) : item.sample->image;
      const Tensor mask = item.flipped ? flip_horizontal(item.sample->mask) : item.sample->mask;
      Prediction pred;
      if (!any_guidance(flags)) {
        pred = model_.predict(image, flags);
      } else if (joint) {
        pred = model_.predict(image, flags);
      } else {
        pred = model_.predict_with_maps(image, guidance_maps(item, image), flags);
      }
      const LossTerms terms = structure_loss(pred.logits, mask);
      out.bce += terms.weighted_bce.item();
      out.iou += terms.weighted_iou.item();
      sum = sum.defined() ? ops::add(sum, terms.total) : terms.total;
    }
    loss = ops::scale(sum, 1.0 / static_cast<double>(batch.size()));
  } catch (const NumericError& e) {
    throw NumericError("non-finite value in " + describe() + ": " + e.what());
  }
  out.bce /= static_cast<double>(batch.size());
  out.iou /= static_cast<double>(batch.size());
  out.total = loss.item();
  if (!std::isfinite(out.total)) throw NumericError("non-finite loss in " + describe());

  backward(loss);
  sod_opt_->step();
  if (joint) caption_opt_->step();
  ++steps_;
  return out;
}

StepLosses Trainer::train_epoch(const std::vector<Sample>& samples, std::size_t epoch, std::uint64_t total_steps) {
  if (samples.empty()) throw ContractError("train_epoch: no samples");
  const auto order = shuffled(samples.size(), rng_);
  std::vector<BatchItem> items;
  for (std::size_t i : order) items.push_back({&samples[i], cfg_.flip && rng_.uniform() < 0.5});

  StepLosses mean;
  std::size_t count = 0;
  for (std::size_t start = 0; start < items.size(); start += cfg_.batch_size) {
    if (cfg_.max_steps && steps_ >= cfg_.max_steps) break;
    if (cfg_.cosine_lr) sod_opt_->set_lr(cosine_lr(cfg_.lr, steps_, total_steps));
    const std::vector<BatchItem> batch(items.begin() + static_cast<std::ptrdiff_t>(start),
                                       items.begin() + static_cast<std::ptrdiff_t>(std::min(items.size(), start + cfg_.batch_size)));
    const std::uint64_t batch_id = epoch * 1000000 + start / cfg_.batch_size;
    const StepLosses s = train_step(batch, batch_id);
    mean.bce += s.bce;
    mean.iou += s.iou;
    mean.total += s.total;
    ++count;
  }
  if (count > 0) {
    mean.bce /= static_cast<double>(count);
    mean.iou /= static_cast<double>(count);
    mean.total /= static_cast<double>(count);
  }
  return mean;
}

double Trainer::caption_epoch(const std::vector<Sample>& samples) {
  std::vector<const Sample*> captioned;
  for (const auto& s : samples) {
    if (!s.caption.empty()) captioned.push_back(&s);
  }
  if (captioned.empty()) throw ContractError("caption_epoch: no captioned samples");
  const auto order = shuffled(captioned.size(), rng_);
  double total = 0;
  std::size_t count = 0;
  for (std::size_t start = 0; start < order.size(); start += cfg_.batch_size) {
    model_.caption_parameters().zero_grad();
    const std::size_t end = std::min(order.size(), start + cfg_.batch_size);
    Tensor sum;
    for (std::size_t i = start; i < end; ++i) {
      const Sample& s = *captioned[order[i]];
      const Tensor l = model_.caption().loss(s.image, s.caption);
      sum = sum.defined() ? ops::add(sum, l) : l;
    }
    const Tensor loss = ops::scale(sum, 1.0 / static_cast<double>(end - start));
    backward(loss);
    caption_opt_->step();
    total += loss.item();
    ++count;
  }
  caption_cache_.clear();
  return total / static_cast<double>(count);
}

double Trainer::evaluate_mae(const std::vector<Sample>& samples) {
  if (samples.empty()) throw ContractError("evaluate_mae: no samples");
  NoGradGuard no_grad;
  const GuidanceFlags& flags = model_.config().guidance;
  double total = 0;
  for (const auto& s : samples) {
    const BatchItem item{&s, false};
    const Prediction pred = any_guidance(flags) ? model_.predict_with_maps(s.image, guidance_maps(item, s.image), flags)
                                                : model_.predict(s.image, flags);
    double err = 0;
    for (std::size_t i = 0; i < s.mask.numel(); ++i) err += std::abs(pred.saliency[i] - s.mask[i]);
    total += err / static_cast<double>(s.mask.numel());
  }
  return total / static_cast<double>(samples.size());
}

void save_checkpoint(const std::filesystem::path& stem, const SdgSodModel& model, const Adam* optimizer,
                     const CheckpointManifest& manifest) {
  std::vector<NamedTensor> tensors = model.sod_parameters().snapshot();
  for (auto& t : model.caption_parameters().snapshot()) tensors.push_back(std::move(t));
  if (optimizer) {
    for (auto& t : optimizer->state()) tensors.push_back(std::move(t));
  }
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
  save_tensors(stem.string() + ".sdgt", tensors);
  const nlohmann::json j = {{"config_hash", manifest.config_hash}, {"epoch", manifest.epoch},
                            {"step", manifest.step},               {"rng_state", manifest.rng_state},
                            {"tag", manifest.tag},                 {"caption_trained", manifest.caption_trained},
                            {"tensors", stem.filename().string() + ".sdgt"}};
  std::ofstream os(stem.string() + ".json", std::ios::trunc);
  if (!os) throw IoError("cannot write " + stem.string() + ".json");
  os << j.dump(1) << '\n';
}

CheckpointManifest read_manifest(const std::filesystem::path& stem) {
  const std::string path = stem.string() + ".json";
  std::ifstream is(path);
  if (!is) throw IoError("cannot read checkpoint manifest " + path);
  try {
    const auto j = nlohmann::json::parse(is);
    CheckpointManifest m;
    m.config_hash = j.at("config_hash").get<std::string>();
    m.epoch = j.at("epoch").get<std::size_t>();
    m.step = j.at("step").get<std::uint64_t>();
    m.rng_state = j.at("rng_state").get<std::string>();
    m.tag = j.at("tag").get<std::string>();
    m.caption_trained = j.at("caption_trained").get<bool>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

CheckpointManifest load_checkpoint(const std::filesystem::path& stem, SdgSodModel& model, Adam* optimizer) {
  const CheckpointManifest m = read_manifest(stem);
  const auto tensors = load_tensors(stem.string() + ".sdgt");
  model.sod_parameters().assign(tensors);
  model.caption_parameters().assign(tensors);
  if (optimizer) optimizer->load_state(tensors);
  return m;
}

ScheduleResult run_schedule(SdgSodModel& model, const TrainConfig& cfg, const ScheduleInputs& inputs,
                            const std::filesystem::path& out_dir, const std::string& config_hash, bool resume) {
  cfg.validate();
  if (cfg.pretrain_epochs > 0 && inputs.pretrain.empty()) throw ContractError("run_schedule: empty pretraining set");
  if (cfg.finetune_epochs > 0 && inputs.finetune.empty()) throw ContractError("run_schedule: empty fine-tuning set");
  const auto ckpt_dir = out_dir / "checkpoints";
  std::filesystem::create_directories(ckpt_dir);
  Trainer trainer(model, cfg);

  std::size_t start_epoch = 0;
  bool caption_trained = false;
  if (resume) {
    std::vector<std::string> stems;
    for (const auto& e : std::filesystem::directory_iterator(ckpt_dir)) {
      const std::string name = e.path().filename().string();
      if (name.rfind("epoch_", 0) == 0 && e.path().extension() == ".json") stems.push_back(e.path().stem().string());
    }
    if (stems.empty()) throw IoError("resume requested but no epoch checkpoint exists in " + ckpt_dir.string());
    std::sort(stems.begin(), stems.end());
    const auto stem = ckpt_dir / stems.back();
    const CheckpointManifest m = read_manifest(stem);
    if (m.config_hash != config_hash) {
      throw ConfigError("checkpoint " + stem.string() + " was written by config " + m.config_hash +
                        ", current config is " + config_hash);
    }
    load_checkpoint(stem, model, &trainer.optimizer());
    trainer.rng().restore(m.rng_state);
    trainer.set_steps(m.step);
    start_epoch = m.epoch;
    caption_trained = m.caption_trained;
  }

  if (!caption_trained && cfg.caption_epochs > 0) {
    std::vector<Sample> captioned = inputs.pretrain;
    captioned.insert(captioned.end(), inputs.finetune.begin(), inputs.finetune.end());
    for (std::size_t e = 0; e < cfg.caption_epochs; ++e) trainer.caption_epoch(captioned);
    caption_trained = true;
  }
  trainer.reset_caption_cache();

  const std::size_t total_epochs = cfg.pretrain_epochs + cfg.finetune_epochs;
  auto batches = [&](const std::vector<Sample>& s) { return (s.size() + cfg.batch_size - 1) / cfg.batch_size; };
  std::uint64_t total_steps = cfg.pretrain_epochs * batches(inputs.pretrain) + cfg.finetune_epochs * batches(inputs.finetune);
  if (cfg.max_steps) total_steps = std::min<std::uint64_t>(total_steps, cfg.max_steps);
  const std::vector<Sample>& validation = inputs.validation.empty() ? inputs.finetune : inputs.validation;

  const auto log_path = out_dir / "train_log.csv";
  std::ofstream log(log_path, resume ? std::ios::app : std::ios::trunc);
  if (!log) throw IoError("cannot write " + log_path.string());
  if (!resume) log << "epoch,step,bce,iou,total,val_mae\n";

  ScheduleResult result;
  std::size_t epoch = start_epoch;
  for (; epoch < total_epochs; ++epoch) {
    if (cfg.max_steps && trainer.steps() >= cfg.max_steps) break;
    const auto& set = epoch < cfg.pretrain_epochs ? inputs.pretrain : inputs.finetune;
    const StepLosses l = trainer.train_epoch(set, epoch, total_steps);
    result.last_val_mae = validation.empty() ? std::nan("") : trainer.evaluate_mae(validation);
    log << epoch + 1 << ',' << trainer.steps() << ',' << fmt(l.bce) << ',' << fmt(l.iou) << ',' << fmt(l.total) << ','
        << fmt(result.last_val_mae) << '\n';
    log.flush();
    if ((epoch + 1) % cfg.checkpoint_every == 0) {
      save_checkpoint(ckpt_dir / epoch_stem(epoch + 1), model, &trainer.optimizer(),
                      {config_hash, epoch + 1, trainer.steps(), trainer.rng().state(), "epoch", caption_trained});
    }
  }
  result.epochs = epoch;
  result.steps = trainer.steps();
  result.final_checkpoint = ckpt_dir / "final";
  save_checkpoint(result.final_checkpoint, model, &trainer.optimizer(),
                  {config_hash, epoch, trainer.steps(), trainer.rng().state(), "final", caption_trained});
  return result;
}

}  // namespace sdg
