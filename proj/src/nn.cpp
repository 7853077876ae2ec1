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

#include "sdg/nn.hpp"

#include <cmath>
#include <sstream>

#include "sdg/ops.hpp"

namespace sdg {

std::string Rng::state() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::restore(const std::string& state) {
  std::istringstream is(state);
  is >> engine_;
  if (is.fail()) throw FormatError("rng state could not be parsed");
}

Tensor uniform_tensor(const Shape& shape, double lo, double hi, Rng& rng, bool requires_grad) {
  std::vector<double> values(shape_numel(shape));
  for (double& v : values) v = rng.uniform(lo, hi);
  return Tensor::from(shape, std::move(values), requires_grad);
}

Tensor ParameterStore::add(const std::string& name, Tensor t) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
  t.set_requires_grad(true);
  index_[name] = entries_.size();
  entries_.push_back({name, t});
  return t;
}

Tensor ParameterStore::weight(const std::string& name, Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return add(name, uniform_tensor(shape, -bound, bound, rng));
}

Tensor ParameterStore::constant(const std::string& name, Shape shape, double value) {
  return add(name, Tensor::full(std::move(shape), value));
}

Tensor ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return entries_[it->second].tensor;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

void ParameterStore::assign(const std::vector<NamedTensor>& source) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& s : source) by_name[s.name] = &s.tensor;
  for (auto& e : entries_) {
    auto it = by_name.find(e.name);
    if (it == by_name.end()) throw FormatError("checkpoint is missing parameter " + e.name);
    if (it->second->shape() != e.tensor.shape()) {
      throw FormatError("parameter " + e.name + " has shape " + shape_str(it->second->shape()) + ", expected " +
                        shape_str(e.tensor.shape()));
    }
    auto src = it->second->data();
    std::copy(src.begin(), src.end(), e.tensor.mutable_data().begin());
  }
}

std::vector<NamedTensor> ParameterStore::snapshot() const {
  std::vector<NamedTensor> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back({e.name, e.tensor.detach()});
  return out;
}

Linear Linear::make(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                    bool with_bias) {
  Linear l;
  l.weight = store.weight(name + ".weight", {in, out}, in, rng);
  if (with_bias) l.bias = store.constant(name + ".bias", {out}, 0.0);
  return l;
}

Tensor Linear::operator()(const Tensor& x) const { return ops::linear(x, weight, bias); }

LayerNorm LayerNorm::make(ParameterStore& store, const std::string& name, std::size_t channels) {
  LayerNorm n;
  n.gamma = store.constant(name + ".gamma", {channels}, 1.0);
  n.beta = store.constant(name + ".beta", {channels}, 0.0);
  return n;
}

Tensor LayerNorm::operator()(const Tensor& x) const { return ops::layer_norm(x, gamma, beta, eps); }

Conv2d Conv2d::make(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
                    std::size_t kernel, std::size_t stride, std::size_t pad, Rng& rng) {
  Conv2d c;
  c.weight = store.weight(name + ".weight", {out, in, kernel, kernel}, in * kernel * kernel, rng);
  c.bias = store.constant(name + ".bias", {out}, 0.0);
  c.stride = stride;
  c.pad = pad;
  return c;
}

Tensor Conv2d::operator()(const Tensor& x) const { return ops::conv2d(x, weight, bias, stride, pad); }

Tensor tokens_to_map(const Tensor& tokens, std::size_t h, std::size_t w) {
  if (tokens.rank() != 2 || tokens.dim(0) != h * w) {
    throw DimensionError("tokens_to_map: " + shape_str(tokens.shape()) + " is not " + std::to_string(h * w) +
                         " tokens");
  }
  const std::size_t c = tokens.dim(1);
  return ops::reshape(ops::transpose(tokens), {c, h, w});
}

Tensor map_to_tokens(const Tensor& map) {
  if (map.rank() != 3) throw DimensionError("map_to_tokens: expected C x H x W, got " + shape_str(map.shape()));
  const std::size_t c = map.dim(0), hw = map.dim(1) * map.dim(2);
  return ops::transpose(ops::reshape(map, {c, hw}));
}

}  // namespace sdg
