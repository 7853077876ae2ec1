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

#include <vector>

#include "sdg/tensor.hpp"

// Differentiable primitives. Each records its backward rule on the current
// thread's GradTape when any input requires a gradient, and rejects
// non-finite results with NumericError.
namespace sdg::ops {

// --- linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);  // rank-2 only
// x[..., in] · w[in, out] + b[out]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor linear(const Tensor& x, const Tensor& w);

// --- shape ----------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);
// Stacks `n` copies of x along a new leading axis.
Tensor repeat_leading(const Tensor& x, std::size_t n);
// Rows of table[V x D] selected by ids -> [ids.size() x D].
Tensor gather_rows(const Tensor& table, const std::vector<int>& ids);

// --- elementwise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double c);
Tensor add_scalar(const Tensor& x, double c);
// x * s and x / s for a scalar tensor s.
Tensor mul_by(const Tensor& x, const Tensor& s);
Tensor div_by(const Tensor& x, const Tensor& s);
Tensor neg(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor gelu(const Tensor& x);

// --- reductions -----------------------------------------------------------

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Global maximum; the gradient flows to the first maximal element.
Tensor max_all(const Tensor& x);

// --- normalization and attention ------------------------------------------

Tensor softmax_last(const Tensor& x);
// Rank-2 softmax where row i only sees columns j <= i.
Tensor softmax_causal(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);
// Mean token-level cross-entropy over rows whose target differs from
// ignore_index.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets, int ignore_index = -1);

// --- spatial (inputs are C x H x W) ---------------------------------------

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t pad);
// Align-corners-false (half-pixel centre) bilinear interpolation.
Tensor bilinear_resize(const Tensor& x, std::size_t out_h, std::size_t out_w);
Tensor avg_pool2d(const Tensor& x, std::size_t kernel, std::size_t stride, std::size_t pad,
                  bool count_include_pad = true);
Tensor adaptive_avg_pool2d(const Tensor& x, std::size_t out_h, std::size_t out_w);

}  // namespace sdg::ops
