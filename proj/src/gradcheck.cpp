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

#include "sdg/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace sdg {

namespace {

double eval_scalar(const ScalarFn& f, const Tensor& x) {
  Tensor out = f(x);
  if (!out.defined() || out.numel() != 1) {
    throw ContractError("finite_diff_gradient: objective returned shape " +
                        (out.defined() ? shape_str(out.shape()) : std::string("<undefined>")));
  }
  return out[0];
}

}  // namespace

Tensor finite_diff_gradient(const ScalarFn& f, const Tensor& x, double step) {
  if (!(step > 0)) throw ContractError("finite_diff_gradient: step must be positive");
  NoGradGuard no_grad;
  Tensor probe = x.detach();
  std::vector<double> grad(x.numel());
  eval_scalar(f, probe);
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const double orig = probe.mutable_data()[i];
    probe.mutable_data()[i] = orig + step;
    const double up = eval_scalar(f, probe);
    probe.mutable_data()[i] = orig - step;
    const double down = eval_scalar(f, probe);
    probe.mutable_data()[i] = orig;
    grad[i] = (up - down) / (2.0 * step);
  }
  return Tensor::from(x.shape(), std::move(grad));
}

double finite_diff_element(const std::function<double()>& objective, Tensor& leaf, std::size_t index,
                           double step) {
  if (!(step > 0)) throw ContractError("finite_diff_element: step must be positive");
  if (index >= leaf.numel()) throw DimensionError("finite_diff_element: index out of range");
  NoGradGuard no_grad;
  auto data = leaf.mutable_data();
  const double orig = data[index];
  data[index] = orig + step;
  const double up = objective();
  data[index] = orig - step;
  const double down = objective();
  data[index] = orig;
  return (up - down) / (2.0 * step);
}

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

double max_relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric, double floor) {
  if (analytic.size() != numeric.size()) throw DimensionError("max_relative_error: size mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    worst = std::max(worst, relative_error(analytic[i], numeric[i], floor));
  }
  return worst;
}

}  // namespace sdg
