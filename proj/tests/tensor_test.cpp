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

#include "sdg/ops.hpp"
#include "test_util.hpp"

namespace sdg {
namespace {

using testing::gradient_error;
using testing::probe_sum;
using testing::random_tensor;

constexpr double kGradTol = 1e-6;

// ---- forward oracles -------------------------------------------------------

TEST(TensorForward, MatmulMatchesTripleLoop) {
  Rng rng(1);
  Tensor a = random_tensor({3, 5}, rng), b = random_tensor({5, 4}, rng);
  Tensor c = ops::matmul(a, b);
  ASSERT_EQ(c.shape(), (Shape{3, 4}));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      double acc = 0;
      for (std::size_t k = 0; k < 5; ++k) acc += a[i * 5 + k] * b[k * 4 + j];
      EXPECT_NEAR(c[i * 4 + j], acc, 1e-14);
    }
}

TEST(TensorForward, MatmulCountsMultiplies) {
  Rng rng(2);
  Tensor a = random_tensor({3, 5}, rng), b = random_tensor({5, 7}, rng);
  reset_multiply_count();
  ops::matmul(a, b);
  EXPECT_EQ(multiply_count(), 3u * 5u * 7u);
}

TEST(TensorForward, Conv2dMatchesDirectSum) {
  Rng rng(3);
  const std::size_t cin = 2, cout = 3, h = 6, w = 5, k = 3, stride = 2, pad = 1;
  Tensor x = random_tensor({cin, h, w}, rng), wt = random_tensor({cout, cin, k, k}, rng),
         b = random_tensor({cout}, rng);
  Tensor y = ops::conv2d(x, wt, b, stride, pad);
  const std::size_t oh = (h + 2 * pad - k) / stride + 1, ow = (w + 2 * pad - k) / stride + 1;
  ASSERT_EQ(y.shape(), (Shape{cout, oh, ow}));
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double acc = b[o];
        for (std::size_t c = 0; c < cin; ++c)
          for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
              const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
              const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w)) continue;
              acc += wt[((o * cin + c) * k + ky) * k + kx] * x[(c * h + iy) * w + ix];
            }
        EXPECT_NEAR(y[(o * oh + oy) * ow + ox], acc, 1e-13);
      }
}

// Half-pixel-centre bilinear sampling with edge clamping.
double bilinear_oracle(const Tensor& x, std::size_t h, std::size_t w, std::size_t oh, std::size_t ow,
                       std::size_t oy, std::size_t ox) {
  auto source = [](std::size_t o, std::size_t in, std::size_t out) {
    return std::max(0.0, (o + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5);
  };
  const double sy = source(oy, h, oh), sx = source(ox, w, ow);
  const std::size_t y0 = std::min<std::size_t>(static_cast<std::size_t>(sy), h - 1);
  const std::size_t x0 = std::min<std::size_t>(static_cast<std::size_t>(sx), w - 1);
  const std::size_t y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
  const double fy = y1 == y0 ? 0 : sy - y0, fx = x1 == x0 ? 0 : sx - x0;
  return (1 - fy) * ((1 - fx) * x[y0 * w + x0] + fx * x[y0 * w + x1]) +
         fy * ((1 - fx) * x[y1 * w + x0] + fx * x[y1 * w + x1]);
}

TEST(TensorForward, BilinearResizeMatchesHalfPixelOracle) {
  Rng rng(4);
  for (auto [h, w, oh, ow] : std::vector<std::array<std::size_t, 4>>{{4, 4, 8, 8}, {7, 5, 3, 9}, {1, 3, 4, 2}}) {
    Tensor x = random_tensor({1, h, w}, rng);
    Tensor y = ops::bilinear_resize(x, oh, ow);
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox)
        EXPECT_NEAR(y[oy * ow + ox], bilinear_oracle(x, h, w, oh, ow, oy, ox), 1e-14);
  }
}

TEST(TensorForward, BilinearResizeSameSizeIsIdentity) {
  Rng rng(5);
  Tensor x = random_tensor({2, 5, 6}, rng);
  Tensor y = ops::bilinear_resize(x, 5, 6);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y[i], x[i]);
}

TEST(TensorForward, AvgPoolCountsPaddingWhenAsked) {
  Tensor x = Tensor::full({1, 3, 3}, 1.0);
  Tensor inc = ops::avg_pool2d(x, 3, 1, 1, true);
  Tensor exc = ops::avg_pool2d(x, 3, 1, 1, false);
  EXPECT_DOUBLE_EQ(inc[0], 4.0 / 9.0);  // corner sees 4 real pixels
  EXPECT_DOUBLE_EQ(inc[4], 1.0);
  for (double v : exc.data()) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(TensorForward, SoftmaxRowsSumToOne) {
  Rng rng(6);
  Tensor x = random_tensor({4, 9}, rng, -30, 30);
  Tensor y = ops::softmax_last(x);
  for (std::size_t r = 0; r < 4; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 9; ++c) s += y[r * 9 + c];
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(TensorForward, CausalSoftmaxMasksFuture) {
  Rng rng(7);
  Tensor y = ops::softmax_causal(random_tensor({3, 3}, rng));
  EXPECT_EQ(y[1], 0.0);
  EXPECT_EQ(y[2], 0.0);
  EXPECT_EQ(y[5], 0.0);
  EXPECT_DOUBLE_EQ(y[0], 1.0);
}

TEST(TensorForward, LayerNormStandardizesRows) {
  Rng rng(8);
  Tensor x = random_tensor({3, 6}, rng, -4, 4);
  Tensor y = ops::layer_norm(x, Tensor::full({6}, 1.0), Tensor::zeros({6}), 1e-12);
  for (std::size_t r = 0; r < 3; ++r) {
    double m = 0, v = 0;
    for (std::size_t c = 0; c < 6; ++c) m += y[r * 6 + c];
    m /= 6;
    for (std::size_t c = 0; c < 6; ++c) v += (y[r * 6 + c] - m) * (y[r * 6 + c] - m);
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v / 6, 1.0, 1e-9);
  }
}

TEST(TensorForward, CrossEntropyIsMeanNegativeLogSoftmax) {
  Tensor logits = Tensor::from({2, 3}, {1, 2, 3, 0, 0, 0});
  Tensor ce = ops::cross_entropy(logits, {2, 0});
  const double l0 = -(3 - std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0)));
  const double l1 = std::log(3.0);
  EXPECT_NEAR(ce.item(), (l0 + l1) / 2, 1e-14);
  Tensor ignored = ops::cross_entropy(logits, {2, -1}, -1);
  EXPECT_NEAR(ignored.item(), l0, 1e-14);
}

TEST(TensorForward, SoftplusIsStableForLargeInputs) {
  Tensor y = ops::softplus(Tensor::from({3}, {-800.0, 0.0, 800.0}));
  EXPECT_NEAR(y[0], 0.0, 1e-300);
  EXPECT_DOUBLE_EQ(y[1], std::log(2.0));
  EXPECT_DOUBLE_EQ(y[2], 800.0);
}

// ---- gradients -------------------------------------------------------------

struct UnaryCase {
  const char* name;
  std::function<Tensor(const Tensor&)> fn;
  double lo, hi;
};

void PrintTo(const UnaryCase& c, std::ostream* os) { *os << c.name; }

class UnaryGradient : public ::testing::TestWithParam<UnaryCase> {};

TEST_P(UnaryGradient, MatchesCentralDifferences) {
  const UnaryCase& c = GetParam();
  Rng rng(11);
  Tensor x = random_tensor({3, 4}, rng, c.lo, c.hi);
  EXPECT_LT(gradient_error([&](const Tensor& t) { return probe_sum(c.fn(t)); }, x), kGradTol) << c.name;
}

INSTANTIATE_TEST_SUITE_P(
    Ops, UnaryGradient,
    ::testing::Values(
        UnaryCase{"exp", [](const Tensor& t) { return ops::exp(t); }, -2, 2},
        UnaryCase{"log", [](const Tensor& t) { return ops::log(t); }, 0.5, 3},
        UnaryCase{"sigmoid", [](const Tensor& t) { return ops::sigmoid(t); }, -4, 4},
        UnaryCase{"softplus", [](const Tensor& t) { return ops::softplus(t); }, -4, 4},
        UnaryCase{"gelu", [](const Tensor& t) { return ops::gelu(t); }, -3, 3},
        UnaryCase{"scale", [](const Tensor& t) { return ops::scale(t, -2.5); }, -1, 1},
        UnaryCase{"transpose", [](const Tensor& t) { return ops::transpose(t); }, -1, 1},
        UnaryCase{"softmax", [](const Tensor& t) { return ops::softmax_last(t); }, -3, 3},
        UnaryCase{"softmax_causal", [](const Tensor& t) { return ops::softmax_causal(ops::slice(t, 1, 0, 3)); }, -3,
                  3},
        UnaryCase{"max_all", [](const Tensor& t) { return ops::max_all(t); }, -1, 1},
        UnaryCase{"mean", [](const Tensor& t) { return ops::mean(t); }, -1, 1},
        UnaryCase{"reshape", [](const Tensor& t) { return ops::reshape(t, {2, 6}); }, -1, 1},
        UnaryCase{"slice", [](const Tensor& t) { return ops::slice(t, 1, 1, 2); }, -1, 1},
        UnaryCase{"repeat", [](const Tensor& t) { return ops::repeat_leading(t, 3); }, -1, 1},
        UnaryCase{"gather", [](const Tensor& t) { return ops::gather_rows(t, {2, 0, 2}); }, -1, 1},
        UnaryCase{"concat",
                  [](const Tensor& t) { return ops::concat({t, ops::scale(t, 2.0)}, 1); }, -1, 1},
        UnaryCase{"div_by_self_max", [](const Tensor& t) { return ops::div_by(t, ops::max_all(t)); }, 0.5, 2},
        UnaryCase{"mul_by_mean", [](const Tensor& t) { return ops::mul_by(t, ops::mean(t)); }, -1, 1},
        UnaryCase{"cross_entropy", [](const Tensor& t) { return ops::cross_entropy(t, {1, 3, 0}); }, -2, 2}),
    [](const ::testing::TestParamInfo<UnaryCase>& info) { return std::string(info.param.name); });

TEST(TensorGradient, BinaryElementwise) {
  Rng rng(12);
  Tensor other = random_tensor({2, 3}, rng, 0.5, 2.0);
  Tensor x = random_tensor({2, 3}, rng, 0.5, 2.0);
  for (auto op : {ops::add, ops::sub, ops::mul, ops::div}) {
    EXPECT_LT(gradient_error([&](const Tensor& t) { return probe_sum(op(t, other)); }, x), kGradTol);
    EXPECT_LT(gradient_error([&](const Tensor& t) { return probe_sum(op(other, t)); }, x), kGradTol);
  }
}

TEST(TensorGradient, MatmulAndLinear) {
  Rng rng(13);
  Tensor a = random_tensor({3, 4}, rng), w = random_tensor({4, 2}, rng), b = random_tensor({2}, rng);
  EXPECT_LT(gradient_error([&](const Tensor& t) { return probe_sum(ops::matmul(t, w)); }, a), kGradTol);
  EXPECT_LT(gradient_error([&](const Tensor& t) { return probe_sum(ops::matmul(a, t)); }, w), kGradTol);
  EXPECT_LT(gradient_error([&](const Tensor& t) { return probe_sum(ops::linear(a, t, b)); }, w), kGradTol);
  EXPECT_LT(gradient_error([&](const Tensor& t) { return probe_sum(ops::linear(a, w, t)); }, b), kGradTol);
}

TEST(TensorGradient, LayerNormAllInputs) {
  Rng rng(14);
  Tensor x = random_tensor({3, 5}, rng, -2, 2), g = random_tensor({5}, rng), b = random_tensor({5}, rng);
  EXPECT_LT(gradient_error([&](const Tensor& t) { return probe_sum(ops::layer_norm(t, g, b, 1e-5)); }, x), kGradTol);
  EXPECT_LT(gradient_error([&](const Tensor& t) { return probe_sum(ops::layer_norm(x, t, b, 1e-5)); }, g), kGradTol);
  EXPECT_LT(gradient_error([&](const Tensor& t) { return probe_sum(ops::layer_norm(x, g, t, 1e-5)); }, b), kGradTol);
}

TEST(TensorGradient, SpatialOps) {
  Rng rng(15);
  Tensor x = random_tensor({2, 5, 6}, rng), w = random_tensor({3, 2, 3, 3}, rng), b = random_tensor({3}, rng);
  EXPECT_LT(gradient_error([&](const Tensor& t) { return probe_sum(ops::conv2d(t, w, b, 2, 1)); }, x), kGradTol);
  EXPECT_LT(gradient_error([&](const Tensor& t) { return probe_sum(ops::conv2d(x, t, b, 2, 1)); }, w), kGradTol);
  EXPECT_LT(gradient_error([&](const Tensor& t) { return probe_sum(ops::conv2d(x, w, t, 2, 1)); }, b), kGradTol);
  EXPECT_LT(gradient_error([&](const Tensor& t) { return probe_sum(ops::bilinear_resize(t, 9, 4)); }, x), kGradTol);
  EXPECT_LT(gradient_error([&](const Tensor& t) { return probe_sum(ops::avg_pool2d(t, 3, 1, 1, true)); }, x),
            kGradTol);
  EXPECT_LT(gradient_error([&](const Tensor& t) { return probe_sum(ops::adaptive_avg_pool2d(t, 2, 4)); }, x),
            kGradTol);
}

TEST(TensorGradient, SharedInputAccumulates) {
  Tensor x = Tensor::from({2}, {1.5, -2.0}, true);
  backward(ops::sum(ops::mul(x, x)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 3.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], -4.0);
}

// ---- tape contracts --------------------------------------------------------

TEST(TensorTape, SecondBackwardIsRejected) {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  Tensor loss = ops::sum(ops::mul(x, x));
  backward(loss);
  EXPECT_THROW(backward(loss), TapeError);
}

TEST(TensorTape, DetachedLossIsRejected) {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  EXPECT_THROW(backward(ops::sum(x).detach()), TapeError);
}

TEST(TensorTape, NoGradGuardRecordsNothing) {
  GradTape::current().reset();
  Tensor x = Tensor::from({2}, {1, 2}, true);
  {
    NoGradGuard guard;
    Tensor y = ops::exp(x);
    EXPECT_FALSE(y.requires_grad());
  }
  EXPECT_EQ(GradTape::current().size(), 0u);
}

TEST(TensorTape, ReplayVisitsOpsInReverse) {
  GradTape::current().reset();
  Tensor x = Tensor::from({2}, {1, 2}, true);
  backward(ops::sum(ops::exp(x)));
  const auto& replay = GradTape::current().last_replay();
  ASSERT_EQ(replay.size(), 2u);
  EXPECT_EQ(replay[0], "sum");
  EXPECT_EQ(replay[1], "exp");
}

// ---- errors ----------------------------------------------------------------

TEST(TensorErrors, ShapeMismatchNamesShapes) {
  Tensor a = Tensor::zeros({2, 3}), b = Tensor::zeros({3, 2});
  try {
    ops::add(a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("[2x3]"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("[3x2]"), std::string::npos) << e.what();
  }
  EXPECT_THROW(ops::matmul(a, a), DimensionError);
  EXPECT_THROW(ops::reshape(a, {4}), DimensionError);
  EXPECT_THROW(ops::slice(a, 1, 2, 2), DimensionError);
}

TEST(TensorErrors, NonFiniteResultsRaise) {
  EXPECT_THROW(ops::log(Tensor::from({1}, {-1.0})), NumericError);
  EXPECT_THROW(ops::div(Tensor::from({1}, {1.0}), Tensor::from({1}, {0.0})), NumericError);
  // An overflowing variance must not silently normalize to zero.
  EXPECT_THROW(ops::layer_norm(Tensor::from({1, 2}, {1e300, -1e300}), Tensor::full({2}, 1.0), Tensor::zeros({2}), 1e-5),
               NumericError);
}

TEST(TensorErrors, GatherOutsideTable) {
  EXPECT_THROW(ops::gather_rows(Tensor::zeros({3, 2}), {3}), ContractError);
}

}  // namespace
}  // namespace sdg
