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

#include "sdg/tensor.hpp"

namespace sdg {

struct LossTerms {
  Tensor weighted_bce;
  Tensor weighted_iou;
  Tensor total;  // weighted_bce + weighted_iou
};

// Pixel weights 1 + 5 |avgpool31(G) - G| (stride 1, zero padding 15, padded
// cells counted); constant, so no gradient flows through them.
Tensor boundary_weights(const Tensor& gt);

// Weighted BCE averaged by the weights, plus the smoothed weighted IoU
// 1 - (sum w p g + 1) / (sum w (p + g - p g) + 1) with p = sigmoid(logits).
LossTerms structure_loss(const Tensor& logits, const Tensor& gt);

}  // namespace sdg
