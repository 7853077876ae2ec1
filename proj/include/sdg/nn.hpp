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
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "sdg/tensor.hpp"

namespace sdg {

// Seeded generator with platform-independent uniform draws.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }
  std::uint64_t next() { return engine_(); }

  std::string state() const;
  void restore(const std::string& state);

 private:
  std::mt19937_64 engine_;
};

Tensor uniform_tensor(const Shape& shape, double lo, double hi, Rng& rng, bool requires_grad = false);

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Ordered collection of trainable leaves, addressed by dotted names.
class ParameterStore {
 public:
  // Weights drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  Tensor weight(const std::string& name, Shape shape, std::size_t fan_in, Rng& rng);
  Tensor constant(const std::string& name, Shape shape, double value);

  const std::vector<NamedTensor>& entries() const { return entries_; }
  Tensor get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t scalar_count() const;
  void zero_grad();

  // Copies values from `source` by name; every parameter must be present
  // with an identical shape.
  void assign(const std::vector<NamedTensor>& source);
  std::vector<NamedTensor> snapshot() const;

 private:
  Tensor add(const std::string& name, Tensor t);

  std::vector<NamedTensor> entries_;
  std::map<std::string, std::size_t> index_;
};

struct Linear {
  Tensor weight;  // [in x out]
  Tensor bias;    // [out], undefined when bias-free

  static Linear make(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                     bool with_bias = true);
  Tensor operator()(const Tensor& x) const;
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;
  double eps = 1e-5;

  static LayerNorm make(ParameterStore& store, const std::string& name, std::size_t channels);
  Tensor operator()(const Tensor& x) const;
};

struct Conv2d {
  Tensor weight;  // [out x in x k x k]
  Tensor bias;
  std::size_t stride = 1;
  std::size_t pad = 0;

  static Conv2d make(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
                     std::size_t kernel, std::size_t stride, std::size_t pad, Rng& rng);
  Tensor operator()(const Tensor& x) const;
};

// Tokens [N x C] <-> channel-first maps [C x H x W].
Tensor tokens_to_map(const Tensor& tokens, std::size_t h, std::size_t w);
Tensor map_to_tokens(const Tensor& map);

}  // namespace sdg
