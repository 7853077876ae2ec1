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

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <unistd.h>

#include "sdg/gradcheck.hpp"
#include "sdg/nn.hpp"
#include "sdg/ops.hpp"
#include "sdg/tensor.hpp"

namespace sdg::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("sdg_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  return uniform_tensor(shape, lo, hi, rng, /*requires_grad=*/true);
}

// Max relative error between the tape gradient of f at x and central
// differences with the given step.
inline double gradient_error(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                             double step = 1e-6, double floor = 1e-7) {
  GradTape::current().reset();
  Tensor leaf = x.detach();
  leaf.set_requires_grad(true);
  backward(f(leaf));
  const std::vector<double> analytic = leaf.grad();
  const Tensor numeric = finite_diff_gradient(f, x, step);
  std::vector<double> num(numeric.data().begin(), numeric.data().end());
  return max_relative_error(analytic, num, floor);
}

// Weighted sum with fixed pseudo-random weights: turns any tensor into a
// scalar whose gradient exercises every output element differently.
inline Tensor probe_sum(const Tensor& y, std::uint64_t seed = 99) {
  Rng rng(seed);
  Tensor w = uniform_tensor(y.shape(), -1.0, 1.0, rng);
  return ops::sum(ops::mul(y, w));
}

}  // namespace sdg::testing
