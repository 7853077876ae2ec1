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
#include <vector>

#include "sdg/nn.hpp"

namespace sdg {

struct AdamConfig {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction over the parameters of one store.
class Adam {
 public:
  Adam(const ParameterStore& params, AdamConfig cfg);

  const AdamConfig& config() const { return cfg_; }
  std::uint64_t steps() const { return step_; }
  void set_lr(double lr) { cfg_.lr = lr; }

  // Applies one update from the accumulated gradients. A zero learning rate
  // leaves every parameter bitwise unchanged.
  void step();

  // Moments and step counter as named tensors ("adam.m.<param>", ...).
  std::vector<NamedTensor> state() const;
  void load_state(const std::vector<NamedTensor>& state);

 private:
  AdamConfig cfg_;
  std::vector<NamedTensor> params_;
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t step_ = 0;
};

// lr * (1 + cos(pi * step / total)) / 2, clamped at the end of the schedule.
double cosine_lr(double base, std::uint64_t step, std::uint64_t total);

}  // namespace sdg
