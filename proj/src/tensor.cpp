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

#include "sdg/tensor.hpp"

#include <cmath>
#include <sstream>

namespace sdg {

namespace {
thread_local std::uint64_t g_multiplies = 0;
}  // namespace

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto node = std::make_shared<detail::Node>();
  node->data.assign(shape_numel(shape), value);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_str(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError("tensor constructed with non-finite value");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({}, {value}, requires_grad); }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape()));
  }
  return node_->shape[axis];
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

std::vector<double> Tensor::grad() const {
  if (node_->grad.empty()) return std::vector<double>(node_->data.size(), 0.0);
  return node_->grad;
}

Tensor Tensor::detach() const {
  auto node = std::make_shared<detail::Node>();
  node->shape = node_->shape;
  node->data = node_->data;
  return Tensor(std::move(node));
}

GradTape& GradTape::current() {
  thread_local GradTape tape;
  return tape;
}

void GradTape::record(const std::shared_ptr<detail::Node>& output, const char* op, BackwardFn fn) {
  if (consumed_) {
    entries_.clear();
    ++generation_;
    consumed_ = false;
  }
  output->generation = generation_;
  output->tape_index = entries_.size();
  entries_.push_back(Entry{output, op, std::move(fn)});
}

void GradTape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  const auto& node = loss.node();
  if (node->generation == 0) {
    throw TapeError("backward on a detached loss: it was not produced by recorded primitives");
  }
  if (node->generation != generation_ || consumed_) {
    throw TapeError("backward already ran on this tape; re-run the forward pass to re-record");
  }
  if (node->tape_index >= entries_.size() || entries_[node->tape_index].output != node) {
    throw TapeError("loss is not on the active tape");
  }
  node->ensure_grad().assign(1, 1.0);
  last_replay_.clear();
  for (std::size_t i = node->tape_index + 1; i-- > 0;) {
    Entry& e = entries_[i];
    last_replay_.emplace_back(e.op);
    if (e.output->grad.empty()) continue;
    e.fn();
  }
  consumed_ = true;
  entries_.clear();
}

void GradTape::reset() {
  entries_.clear();
  ++generation_;
  consumed_ = false;
}

std::vector<std::string> GradTape::recorded_ops() const {
  std::vector<std::string> ops;
  ops.reserve(entries_.size());
  for (const auto& e : entries_) ops.emplace_back(e.op);
  return ops;
}

void backward(const Tensor& loss) { GradTape::current().backward(loss); }

std::uint64_t multiply_count() { return g_multiplies; }
void reset_multiply_count() { g_multiplies = 0; }
void add_multiplies(std::uint64_t n) { g_multiplies += n; }

}  // namespace sdg
