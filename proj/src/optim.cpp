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

#include "sdg/optim.hpp"

#include <cmath>
#include <map>
#include <numbers>

namespace sdg {

Adam::Adam(const ParameterStore& params, AdamConfig cfg) : cfg_(cfg), params_(params.entries()) {
  if (!(cfg_.lr >= 0) || !(cfg_.beta1 >= 0 && cfg_.beta1 < 1) || !(cfg_.beta2 >= 0 && cfg_.beta2 < 1) ||
      !(cfg_.eps > 0)) {
    throw ConfigError("adam: invalid hyperparameters");
  }
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void Adam::step() {
  ++step_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& t = params_[i].tensor;
    if (!t.has_grad()) continue;
    const std::vector<double> g = t.grad();
    auto data = t.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < data.size(); ++k) {
      m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g[k];
      v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g[k] * g[k];
      const double update = cfg_.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg_.eps);
      if (!std::isfinite(update)) throw NumericError("adam: non-finite update for " + params_[i].name);
      if (update != 0.0) data[k] -= update;  // keeps signed zeros intact
    }
  }
}

std::vector<NamedTensor> Adam::state() const {
  std::vector<NamedTensor> out;
  out.push_back({"adam.step", Tensor::from({1}, {static_cast<double>(step_)})});
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Shape& shape = params_[i].tensor.shape();
    out.push_back({"adam.m." + params_[i].name, Tensor::from(shape, m_[i])});
    out.push_back({"adam.v." + params_[i].name, Tensor::from(shape, v_[i])});
  }
  return out;
}

void Adam::load_state(const std::vector<NamedTensor>& state) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& s : state) by_name[s.name] = &s.tensor;
  auto fetch = [&](const std::string& name, std::size_t numel) {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("optimizer state lacks " + name);
    if (it->second->numel() != numel) throw FormatError("optimizer state " + name + " has the wrong size");
    const auto d = it->second->data();
    return std::vector<double>(d.begin(), d.end());
  };
  step_ = static_cast<std::uint64_t>(fetch("adam.step", 1)[0]);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    m_[i] = fetch("adam.m." + params_[i].name, params_[i].tensor.numel());
    v_[i] = fetch("adam.v." + params_[i].name, params_[i].tensor.numel());
  }
}

double cosine_lr(double base, std::uint64_t step, std::uint64_t total) {
  if (total == 0 || step >= total) return total == 0 ? base : 0.0;
  const double t = static_cast<double>(step) / static_cast<double>(total);
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

}  // namespace sdg
