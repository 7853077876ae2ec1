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

#include <gtest/gtest.h>

#include <cmath>

#include "sdg/backbone.hpp"
#include "sdg/ops.hpp"
#include "test_util.hpp"

namespace sdg {
namespace {

using testing::probe_sum;
using testing::random_tensor;

struct AttentionRun {
  AttentionStats stats;
  Tensor out;
};

AttentionRun run_attention(std::size_t reduction, std::size_t side, std::size_t dim, std::size_t heads) {
  ParameterStore store;
  Rng rng(21);
  EfficientSelfAttention attn(store, "attn", dim, heads, reduction, rng);
  Rng data_rng(22);
  Tensor tokens = uniform_tensor({side * side, dim}, -1, 1, data_rng);
  AttentionRun run;
  run.stats.keep_weights = true;
  run.out = attn(tokens, side, side, &run.stats);
  return run;
}

TEST(EfficientAttention, KeyValueLengthIsQueryLengthOverR) {
  for (std::size_t r : {1u, 4u, 16u, 64u}) {
    const AttentionRun run = run_attention(r, 16, 8, 2);
    EXPECT_EQ(run.stats.query_len, 256u);
    EXPECT_EQ(run.stats.kv_len * r, run.stats.query_len) << "R=" << r;
    ASSERT_EQ(run.stats.weights.size(), 2u);
    EXPECT_EQ(run.stats.weights[0].shape(), (Shape{256, 256 / r}));
  }
}

TEST(EfficientAttention, RowsAreDistributions) {
  for (std::size_t r : {4u, 16u, 64u}) {
    const AttentionRun run = run_attention(r, 16, 8, 2);
    for (const Tensor& w : run.stats.weights) {
      const std::size_t rows = w.dim(0), cols = w.dim(1);
      for (std::size_t i = 0; i < rows; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < cols; ++j) {
          EXPECT_GE(w[i * cols + j], 0.0);
          s += w[i * cols + j];
        }
        EXPECT_NEAR(s, 1.0, 1e-9);
      }
    }
  }
}

TEST(EfficientAttention, ScoreMultipliesScaleAsOneOverR) {
  const std::uint64_t base = run_attention(1, 16, 8, 2).stats.score_multiplies;
  EXPECT_EQ(base, 256u * 256u * 8u);  // N x N scores, head_dim 4, two heads
  for (std::size_t r : {4u, 16u, 64u}) {
    const std::uint64_t reduced = run_attention(r, 16, 8, 2).stats.score_multiplies;
    EXPECT_EQ(reduced * r, base) << "R=" << r;
  }
}

TEST(SpatialReduce, StacksBlocksRowMajorBeforeProjection) {
  // Projection that copies the stacked vector so the grouping is observable.
  const std::size_t h = 4, w = 4, c = 2, r = 4;
  Rng rng(23);
  Tensor tokens = uniform_tensor({h * w, c}, -1, 1, rng);
  std::vector<double> eye(c * r * c * r, 0.0);
  for (std::size_t i = 0; i < c * r; ++i) eye[i * c * r + i] = 1.0;
  Linear proj{Tensor::from({c * r, c * r}, eye), Tensor::zeros({c * r})};
  LayerNorm norm{Tensor::full({c * r}, 1.0), Tensor::zeros({c * r}), 1e-12};
  Tensor out = spatial_reduce(tokens, h, w, r, proj, norm);
  ASSERT_EQ(out.shape(), (Shape{4, c * r}));
  // Oracle: block (by, bx) collects tokens (2by+dy, 2bx+dx) in row-major order,
  // then each row is standardized.
  for (std::size_t by = 0; by < 2; ++by)
    for (std::size_t bx = 0; bx < 2; ++bx) {
      std::vector<double> row;
      for (std::size_t dy = 0; dy < 2; ++dy)
        for (std::size_t dx = 0; dx < 2; ++dx)
          for (std::size_t ch = 0; ch < c; ++ch) row.push_back(tokens[((2 * by + dy) * w + 2 * bx + dx) * c + ch]);
      double m = 0, v = 0;
      for (double x : row) m += x;
      m /= row.size();
      for (double x : row) v += (x - m) * (x - m);
      v /= row.size();
      const std::size_t b = by * 2 + bx;
      for (std::size_t k = 0; k < row.size(); ++k) {
        EXPECT_NEAR(out[b * c * r + k], (row[k] - m) / std::sqrt(v + 1e-12), 1e-9);
      }
    }
}

TEST(SpatialReduce, RejectsIndivisibleGrids) {
  ParameterStore store;
  Rng rng(24);
  EfficientSelfAttention attn(store, "a", 4, 1, 4, rng);
  EXPECT_THROW(attn(Tensor::zeros({15, 4}), 5, 3), DimensionError);
  EXPECT_THROW(EfficientSelfAttention(store, "b", 4, 1, 8, rng)(Tensor::zeros({16, 4}), 4, 4), ConfigError);
}

TEST(PvtBackbone, PyramidShapesAtStrides4To32) {
  ParameterStore store;
  Rng rng(25);
  BackboneConfig cfg = BackboneConfig::toy();
  PvtBackbone backbone(cfg, store, rng);
  Rng data_rng(26);
  std::vector<AttentionStats> stats;
  NoGradGuard no_grad;
  const FeaturePyramid p = backbone.forward(uniform_tensor({3, 64, 64}, -1, 1, data_rng), &stats);
  const std::array<Shape, 4> expected{Shape{8, 16, 16}, Shape{16, 8, 8}, Shape{32, 4, 4}, Shape{64, 2, 2}};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(p.levels[i].shape(), expected[i]) << "level " << i;
  ASSERT_EQ(stats.size(), 8u);  // depth 2 per stage
  const std::array<std::size_t, 4> queries{256, 64, 16, 4};
  for (std::size_t i = 0; i < 8; ++i) {
    const std::size_t stage = i / 2;
    EXPECT_EQ(stats[i].query_len, queries[stage]);
    EXPECT_EQ(stats[i].kv_len * cfg.stages[stage].reduction, queries[stage]);
  }
}

TEST(PvtBackbone, ToyConfigMatchesDocumentedSizes) {
  const BackboneConfig cfg = BackboneConfig::toy();
  const std::array<std::size_t, 4> dims{8, 16, 32, 64}, heads{1, 2, 4, 8}, red{64, 16, 4, 1};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(cfg.stages[i].embed_dim, dims[i]);
    EXPECT_EQ(cfg.stages[i].heads, heads[i]);
    EXPECT_EQ(cfg.stages[i].reduction, red[i]);
    EXPECT_EQ(cfg.stages[i].depth, 2u);
  }
}

TEST(PvtBackbone, ValidationRejectsBadStages) {
  BackboneConfig cfg = BackboneConfig::toy();
  cfg.stages[1].heads = 3;  // 16 channels do not split into 3 heads
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = BackboneConfig::toy();
  cfg.stages[2].reduction = 8;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = BackboneConfig::toy();
  cfg.stages[0].stride = 2;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(PvtBackbone, GradientReachesEveryParameter) {
  ParameterStore store;
  Rng rng(27);
  PvtBackbone backbone(BackboneConfig::toy().with_depths({1, 1, 1, 1}), store, rng);
  Rng data_rng(28);
  Tensor image = uniform_tensor({3, 64, 64}, -1, 1, data_rng);
  GradTape::current().reset();
  const FeaturePyramid p = backbone.forward(image);
  Tensor loss = probe_sum(p.levels[0]);
  for (std::size_t i = 1; i < 4; ++i) loss = ops::add(loss, probe_sum(p.levels[i], 100 + i));
  backward(loss);
  for (const auto& e : store.entries()) EXPECT_TRUE(e.tensor.has_grad()) << e.name;
}

TEST(PvtBackbone, SmallGradientCheck) {
  ParameterStore store;
  Rng rng(29);
  PvtBackbone backbone(BackboneConfig::toy().with_depths({1, 1, 1, 1}), store, rng);
  Rng data_rng(30);
  Tensor image = uniform_tensor({3, 64, 64}, -1, 1, data_rng);
  auto objective = [&] {
    const FeaturePyramid p = backbone.forward(image);
    Tensor loss = probe_sum(p.levels[3]);
    return ops::add(loss, probe_sum(p.levels[0], 7));
  };
  GradTape::current().reset();
  store.zero_grad();
  backward(objective());
  Rng pick(31);
  double worst = 0;
  for (int trial = 0; trial < 40; ++trial) {
    auto entry = store.entries()[pick.index(store.entries().size())];
    Tensor leaf = entry.tensor;
    const std::size_t idx = pick.index(leaf.numel());
    const double analytic = leaf.grad()[idx];
    const double numeric = finite_diff_element([&] { return objective().item(); }, leaf, idx, 1e-5);
    worst = std::max(worst, relative_error(analytic, numeric, 1e-5));
  }
  // Key biases have an exactly zero gradient (softmax is shift invariant);
  // the 1e-5 floor absorbs the ~1e-10 rounding noise of their differences.
  EXPECT_LT(worst, 1e-4);
}

}  // namespace
}  // namespace sdg
