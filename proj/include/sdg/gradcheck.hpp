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

#include <functional>

#include "sdg/tensor.hpp"

namespace sdg {

using ScalarFn = std::function<Tensor(const Tensor&)>;

// Central-difference estimate of d f / d x, one element at a time.
// Evaluated with the tape paused; f must return a single-element tensor.
Tensor finite_diff_gradient(const ScalarFn& f, const Tensor& x, double step);

// Central difference of a scalar objective with respect to element `index`
// of a leaf tensor that the objective reads in place.
double finite_diff_element(const std::function<double()>& objective, Tensor& leaf, std::size_t index,
                           double step);

// |a - b| / max(|a|, |b|, floor). The floor keeps gradients that are zero up
// to rounding noise from dominating a relative comparison.
double relative_error(double analytic, double numeric, double floor = 1e-8);

// Largest relative_error across two equally sized gradient buffers.
double max_relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric,
                          double floor = 1e-8);

}  // namespace sdg
