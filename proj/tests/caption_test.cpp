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

#include "sdg/caption.hpp"
#include "sdg/ops.hpp"
#include "sdg/optim.hpp"
#include "test_util.hpp"

namespace sdg {
namespace {

using testing::TempDir;

CaptionConfig small_config(std::size_t vocab_size) {
  CaptionConfig cfg;
  cfg.vocab_size = vocab_size;
  return cfg;
}

// ---- vocabulary ------------------------------------------------------------

TEST(Vocabulary, ReservedTokensComeFirst) {
  const Vocabulary v = Vocabulary::build({"a red circle", "a blue circle"}, 64);
  EXPECT_EQ(v.token(Vocabulary::kPad), "[PAD]");
  EXPECT_EQ(v.token(Vocabulary::kSos), "[SOS]");
  EXPECT_EQ(v.token(Vocabulary::kEos), "[EOS]");
  EXPECT_EQ(v.token(Vocabulary::kUnk), "[UNK]");
  // Most frequent first, ties alphabetical.
  EXPECT_EQ(v.token(4), "a");
  EXPECT_EQ(v.token(5), "circle");
  EXPECT_EQ(v.token(6), "blue");
  EXPECT_EQ(v.token(7), "red");
}

TEST(Vocabulary, CapacityAndUnknownWords) {
  const Vocabulary v = Vocabulary::build({"x x x y y z"}, 6);
  EXPECT_EQ(v.size(), 6u);
  EXPECT_EQ(v.id("z"), Vocabulary::kUnk);
  EXPECT_EQ(v.encode("X z"), (std::vector<int>{Vocabulary::kSos, v.id("x"), Vocabulary::kUnk, Vocabulary::kEos}));
  EXPECT_THROW(v.encode("   "), ContractError);
}

TEST(Vocabulary, DecodeDropsSpecialTokens) {
  const Vocabulary v = Vocabulary::build({"a red circle"}, 64);
  EXPECT_EQ(v.decode(v.encode("A  Red circle")), "a red circle");
}

TEST(Vocabulary, SaveLoadRoundTrip) {
  TempDir dir("vocab");
  const Vocabulary v = Vocabulary::build({"one two two three three three"}, 64);
  v.save(dir / "vocab.txt");
  const Vocabulary w = Vocabulary::load(dir / "vocab.txt");
  ASSERT_EQ(w.size(), v.size());
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(w.token(static_cast<int>(i)), v.token(static_cast<int>(i)));
}

TEST(Vocabulary, CaptionFileParsesTabSeparatedLines) {
  TempDir dir("captions");
  {
    std::ofstream os(dir / "captions.tsv");
    os << "img_a.png\ta red circle\n\nimg_b.png\ta blue square\r\n";
  }
  const auto rows = read_caption_file(dir / "captions.tsv");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].first, "img_a.png");
  EXPECT_EQ(rows[1].second, "a blue square");
}

// ---- decoding contract -----------------------------------------------------

TEST(CaptionModel, GreedyDecodingTerminatesWithinMaxLen) {
  const Vocabulary vocab = Vocabulary::build({"a red blue green circle square triangle and"}, 64);
  Rng data_rng(41);
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    ParameterStore store;
    Rng rng(seed);
    CaptionModel model(small_config(vocab.size()), store, rng);
    NoGradGuard no_grad;
    const CaptionOutput out = model.generate(uniform_tensor({3, 64, 64}, -2, 2, data_rng));
    ASSERT_LE(out.tokens.size(), model.config().max_len);
    EXPECT_EQ(out.tokens.front(), Vocabulary::kSos);
    EXPECT_EQ(out.tokens.back(), Vocabulary::kEos);
    EXPECT_EQ(out.word_count() + 2, out.tokens.size());
    for (const Tensor& map : out.attention_maps) {
      ASSERT_EQ(map.shape(), (Shape{7, 7}));
      double s = 0;
      for (double v : map.data()) s += v;
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
  }
}

TEST(CaptionModel, ShorterBudgetTruncatesWithEos) {
  const Vocabulary vocab = Vocabulary::build({"a b c d e f"}, 64);
  ParameterStore store;
  Rng rng(42);
  CaptionModel model(small_config(vocab.size()), store, rng);
  NoGradGuard no_grad;
  Rng data_rng(43);
  const GridFeatures grid = model.visual_encode(uniform_tensor({3, 32, 32}, -1, 1, data_rng));
  const CaptionOutput out = model.generate(grid, 3);
  EXPECT_LE(out.tokens.size(), 3u);
  EXPECT_EQ(out.tokens.back(), Vocabulary::kEos);
  EXPECT_THROW(model.generate(grid, 13), ContractError);
  EXPECT_THROW(model.generate(grid, 1), ContractError);
}

TEST(CaptionModel, StepwiseAndTeacherForcedPassesAgree) {
  const Vocabulary vocab = Vocabulary::build({"a red circle"}, 64);
  ParameterStore store;
  Rng rng(44);
  CaptionModel model(small_config(vocab.size()), store, rng);
  NoGradGuard no_grad;
  Rng data_rng(45);
  const GridFeatures grid = model.visual_encode(uniform_tensor({3, 64, 64}, -1, 1, data_rng));
  const std::vector<int> tokens = vocab.encode("a red circle");
  const DecoderPass pass = model.decode(grid, tokens);
  const std::size_t v = vocab.size(), n = 49;
  for (std::size_t t = 1; t <= tokens.size(); ++t) {
    const DecodeStep step = model.decode_step(grid, std::vector<int>(tokens.begin(), tokens.begin() + t));
    for (std::size_t k = 0; k < v; ++k) EXPECT_NEAR(step.logits[k], pass.logits[(t - 1) * v + k], 1e-10);
    for (std::size_t k = 0; k < n; ++k) {
      EXPECT_NEAR(step.cross_attention[k], pass.cross_attention[(t - 1) * n + k], 1e-12);
    }
  }
}

TEST(CaptionModel, HeadAverageIsMeanOfHeads) {
  const Vocabulary vocab = Vocabulary::build({"a red circle"}, 64);
  ParameterStore store;
  Rng rng(46);
  CaptionModel model(small_config(vocab.size()), store, rng);
  NoGradGuard no_grad;
  Rng data_rng(47);
  const DecodeStep step = model.decode_step(model.visual_encode(uniform_tensor({3, 64, 64}, -1, 1, data_rng)),
                                            {Vocabulary::kSos, vocab.id("a")});
  ASSERT_EQ(step.per_head.size(), 2u);
  for (std::size_t k = 0; k < 49; ++k) {
    EXPECT_NEAR(step.cross_attention[k], 0.5 * (step.per_head[0][k] + step.per_head[1][k]), 1e-15);
  }
}

TEST(CaptionModel, LossRejectsMalformedGold) {
  const Vocabulary vocab = Vocabulary::build({"a red circle"}, 64);
  ParameterStore store;
  Rng rng(48);
  CaptionModel model(small_config(vocab.size()), store, rng);
  Tensor image = Tensor::zeros({3, 32, 32});
  EXPECT_THROW(model.loss(image, {Vocabulary::kSos, Vocabulary::kEos}), ContractError);
  EXPECT_THROW(model.loss(image, {Vocabulary::kSos, 4, 5}), ContractError);
  EXPECT_THROW(model.loss(image, {Vocabulary::kSos, 999, Vocabulary::kEos}), ContractError);
}

TEST(CaptionModel, LossGradientMatchesFiniteDifferences) {
  const Vocabulary vocab = Vocabulary::build({"a red circle"}, 64);
  ParameterStore store;
  Rng rng(49);
  CaptionConfig cfg = small_config(vocab.size());
  cfg.layers = 1;
  CaptionModel model(cfg, store, rng);
  Rng data_rng(50);
  Tensor image = uniform_tensor({3, 32, 32}, -1, 1, data_rng);
  const std::vector<int> gold = vocab.encode("a red circle");
  GradTape::current().reset();
  store.zero_grad();
  backward(model.loss(image, gold));
  Rng pick(51);
  double worst = 0;
  for (int trial = 0; trial < 40; ++trial) {
    Tensor leaf = store.entries()[pick.index(store.entries().size())].tensor;
    const std::size_t idx = pick.index(leaf.numel());
    const double numeric =
        finite_diff_element([&] { return model.loss(image, gold).item(); }, leaf, idx, 1e-5);
    worst = std::max(worst, relative_error(leaf.grad()[idx], numeric, 1e-6));
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(CaptionModel, OverfitsSinglePair) {
  const std::string caption = "a red circle and a blue square";
  const Vocabulary vocab = Vocabulary::build({caption, "a green triangle"}, 64);
  ParameterStore store;
  Rng rng(52);
  CaptionModel model(small_config(vocab.size()), store, rng);
  Adam adam(store, AdamConfig{.lr = 3e-3});
  Rng data_rng(53);
  Tensor image = uniform_tensor({3, 32, 32}, -1, 1, data_rng);
  const std::vector<int> gold = vocab.encode(caption);
  double last = 0;
  for (int step = 0; step < 150; ++step) {
    GradTape::current().reset();
    store.zero_grad();
    Tensor loss = model.loss(image, gold);
    last = loss.item();
    backward(loss);
    adam.step();
  }
  EXPECT_LT(last, 0.05);
  NoGradGuard no_grad;
  EXPECT_EQ(vocab.decode(model.generate(image).tokens), caption);
}

}  // namespace
}  // namespace sdg
