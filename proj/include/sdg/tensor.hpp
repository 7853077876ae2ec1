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

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sdg {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

// Error taxonomy shared by every module.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class DimensionError : public Error {
 public:
  using Error::Error;
};
class NumericError : public Error {
 public:
  using Error::Error;
};
class ContractError : public Error {
 public:
  using Error::Error;
};
class TapeError : public Error {
 public:
  using Error::Error;
};
class ConfigError : public Error {
 public:
  using Error::Error;
};
class FormatError : public Error {
 public:
  using Error::Error;
};
class IoError : public Error {
 public:
  using Error::Error;
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  // Tape generation that produced this node; 0 for leaves and constants.
  std::uint64_t generation = 0;
  std::size_t tape_index = 0;

  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

// Dense row-major tensor of 64-bit floats. Copies share the underlying node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return node_->data.size(); }

  std::span<const double> data() const { return node_->data; }
  // Mutation is reserved for leaves: parameters, optimizer updates, and
  // finite-difference probing.
  std::span<double> mutable_data() { return node_->data; }
  double item() const;
  double operator[](std::size_t i) const { return node_->data[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool value) { node_->requires_grad = value; }
  bool has_grad() const { return !node_->grad.empty(); }
  // Zero-filled view when no gradient has been accumulated yet.
  std::vector<double> grad() const;
  void zero_grad() { node_->grad.clear(); }

  bool is_leaf() const { return node_->generation == 0; }
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

// Ordered record of executed differentiable primitives for one thread.
class GradTape {
 public:
  using BackwardFn = std::function<void()>;

  static GradTape& current();

  void record(const std::shared_ptr<detail::Node>& output, const char* op, BackwardFn fn);
  void backward(const Tensor& loss);
  // Drops every recorded entry and starts a fresh generation.
  void reset();

  bool enabled() const { return enabled_ && !paused_; }
  std::size_t size() const { return entries_.size(); }
  std::vector<std::string> recorded_ops() const;
  const std::vector<std::string>& last_replay() const { return last_replay_; }

 private:
  friend class NoGradGuard;
  struct Entry {
    std::shared_ptr<detail::Node> output;
    const char* op;
    BackwardFn fn;
  };

  std::vector<Entry> entries_;
  std::uint64_t generation_ = 1;
  bool consumed_ = false;
  bool enabled_ = true;
  int paused_ = 0;
  std::vector<std::string> last_replay_;
};

class NoGradGuard {
 public:
  NoGradGuard() { ++GradTape::current().paused_; }
  ~NoGradGuard() { --GradTape::current().paused_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// Populates gradients of every requires_grad leaf reachable from `loss`.
void backward(const Tensor& loss);

// Multiply counter incremented by matmul-family kernels on this thread.
std::uint64_t multiply_count();
void reset_multiply_count();
void add_multiplies(std::uint64_t n);

}  // namespace sdg
