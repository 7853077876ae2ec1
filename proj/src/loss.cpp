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

#include "sdg/loss.hpp"

#include <cmath>

#include "sdg/ops.hpp"

namespace sdg {

namespace {

constexpr std::size_t kWindow = 31;
constexpr double kBoundaryGain = 5.0;

}  // namespace

Tensor boundary_weights(const Tensor& gt) {
  if (gt.rank() != 2) throw DimensionError("boundary_weights: expected H x W, got " + shape_str(gt.shape()));
  NoGradGuard no_grad;
  const std::size_t h = gt.dim(0), w = gt.dim(1);
  const Tensor pooled = ops::avg_pool2d(ops::reshape(gt, {1, h, w}), kWindow, 1, kWindow / 2, true);
  std::vector<double> v(h * w);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 1.0 + kBoundaryGain * std::abs(pooled[i] - gt[i]);
  return Tensor::from({h, w}, std::move(v));
}

LossTerms structure_loss(const Tensor& logits, const Tensor& gt) {
  if (logits.shape() != gt.shape() || logits.rank() != 2) {
    throw DimensionError("structure_loss: logits " + shape_str(logits.shape()) + " vs ground truth " +
                         shape_str(gt.shape()));
  }
  const Tensor g = gt.detach();
  const Tensor weights = boundary_weights(g);
  const Tensor weight_sum = ops::sum(weights);

  // softplus(x) - x g is the logit-space binary cross-entropy.
  const Tensor bce = ops::sub(ops::softplus(logits), ops::mul(logits, g));
  LossTerms out;
  out.weighted_bce = ops::div_by(ops::sum(ops::mul(weights, bce)), weight_sum);

  const Tensor p = ops::sigmoid(logits);
  const Tensor pg = ops::mul(p, g);
  const Tensor inter = ops::sum(ops::mul(weights, pg));
  const Tensor uni = ops::sum(ops::mul(weights, ops::sub(ops::add(p, g), pg)));
  out.weighted_iou = ops::scale(
      ops::add_scalar(ops::div_by(ops::add_scalar(inter, 1.0), ops::add_scalar(uni, 1.0)), -1.0), -1.0);
  out.total = ops::add(out.weighted_bce, out.weighted_iou);
  return out;
}

}  // namespace sdg
