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

#include <random>

#include "metrics_oracle.hpp"
#include "sdg/fixtures.hpp"
#include "sdg/image_io.hpp"
#include "sdg/metrics.hpp"
#include "test_util.hpp"

namespace sdg::metrics {
namespace {

using testing::TempDir;

Map to_map(const oracle::Grid& g) {
  return Map(static_cast<std::size_t>(g.h), static_cast<std::size_t>(g.w), g.v);
}

oracle::Grid to_grid(const Map& m) {
  return {static_cast<int>(m.height), static_cast<int>(m.width), m.values};
}

Map load(const std::filesystem::path& path, bool binarize) {
  const io::Image8 img = io::read_gray(path);
  std::vector<double> v(img.pixels.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = binarize ? (img.pixels[i] >= 128) : img.pixels[i] / 255.0;
  return Map(img.height, img.width, v);
}

// ---- MAE and F -------------------------------------------------------------

TEST(Mae, HandArithmetic) {
  const Map p(2, 2, {0.5, 0.0, 1.0, 0.25}), g(2, 2, {1, 0, 1, 0});
  EXPECT_DOUBLE_EQ(mae(p, g), 0.1875);
  EXPECT_EQ(mae(g, g), 0.0);
  EXPECT_EQ(mae(Map::filled(3, 3, 1.0), Map::filled(3, 3, 0.0)), 1.0);
}

TEST(Mae, IsSymmetric) {
  Rng rng(91);
  for (int i = 0; i < 20; ++i) {
    const auto in = oracle::random_instance(rng);
    EXPECT_EQ(mae(to_map(in.p), to_map(in.g)), mae(to_map(in.g), to_map(in.p)));
  }
}

TEST(FMeasure, HandArithmetic) {
  EXPECT_NEAR(f_measure(0.8, 0.5, 0.3), 1.3 * 0.4 / (0.24 + 0.5), 1e-8);
  EXPECT_NEAR(f_measure(0.8, 0.5, 0.3), 0.7027027, 1e-7);
  EXPECT_NEAR(f_measure(1, 1, 0.3), 1.0, 1e-8);
  EXPECT_EQ(f_measure(1, 0, 0.3), 0.0);
}

TEST(PrCurve, MatchesBruteForceCountsOn100RandomInstances) {
  Rng rng(92);
  const MetricsConfig cfg;
  for (int trial = 0; trial < 100; ++trial) {
    const auto in = oracle::random_instance(rng);
    const Map p = to_map(in.p), g = to_map(in.g);
    const ConfusionCounts counts = confusion_counts(p, g, 256);
    const auto curve = pr_curve(p, g, cfg);
    ASSERT_EQ(curve.size(), 256u);
    EXPECT_NEAR(mae(p, g), oracle::mae(in.p, in.g), 1e-9);
    for (std::size_t k = 0; k < 256; ++k) {
      const double t = static_cast<double>(k) / 255.0;
      const oracle::Counts c = oracle::count_at(in.p, in.g, t);
      ASSERT_EQ(counts.tp[k], c.tp) << "trial " << trial << " k " << k;
      ASSERT_EQ(counts.fp[k], c.fp);
      ASSERT_EQ(counts.fn[k], c.fn);
      const double precision = c.tp / (c.tp + c.fp + 1e-8);
      const double recall = c.tp / (c.tp + c.fn + 1e-8);
      const double f = 1.3 * precision * recall / (0.3 * precision + recall + 1e-8);
      EXPECT_EQ(curve[k].threshold, t);
      EXPECT_NEAR(curve[k].precision, precision, 1e-9);
      EXPECT_NEAR(curve[k].recall, recall, 1e-9);
      EXPECT_NEAR(curve[k].f, f, 1e-9);
    }
  }
}

TEST(PrCurve, ThresholdsLandExactlyOnEightBitValues) {
  // P = k/255 must count as salient at threshold k/255.
  for (std::size_t k = 0; k < 256; ++k) {
    const double v = static_cast<double>(k) / 255.0;
    const ConfusionCounts c = confusion_counts(Map(1, 1, {v}), Map(1, 1, {1.0}), 256);
    EXPECT_EQ(c.tp[k], 1.0);
    if (k + 1 < 256) {
      EXPECT_EQ(c.tp[k + 1], 0.0);
    }
  }
}

TEST(PrCurve, IdenticalBinaryMapsArePerfectAboveZero) {
  const Map g(2, 3, {1, 0, 1, 0, 0, 1});
  const auto curve = pr_curve(g, g, MetricsConfig{});
  for (std::size_t k = 1; k < 256; ++k) {
    EXPECT_NEAR(curve[k].precision, 1.0, 1e-8);
    EXPECT_NEAR(curve[k].recall, 1.0, 1e-8);
  }
}

TEST(PrCurve, RecallIsNonIncreasing) {
  Rng rng(93);
  for (int trial = 0; trial < 30; ++trial) {
    const auto in = oracle::random_instance(rng);
    const auto curve = pr_curve(to_map(in.p), to_map(in.g), MetricsConfig{});
    for (std::size_t k = 1; k < curve.size(); ++k) EXPECT_LE(curve[k].recall, curve[k - 1].recall);
  }
}

TEST(FMeasure, MeanAndMaxOverThresholds) {
  Rng rng(94);
  const auto in = oracle::random_instance(rng);
  const auto curve = pr_curve(to_map(in.p), to_map(in.g), MetricsConfig{});
  double sum = 0, best = 0;
  for (const auto& pt : curve) {
    sum += pt.f;
    best = std::max(best, pt.f);
  }
  EXPECT_NEAR(mean_f(curve), sum / 256, 1e-12);
  EXPECT_EQ(max_f(curve), best);
}

// ---- S-measure and E-measure -----------------------------------------------

TEST(SMeasure, MatchesStraightLineReference) {
  Rng rng(95);
  const MetricsConfig cfg;
  for (int trial = 0; trial < 50; ++trial) {
    const auto in = oracle::random_instance(rng, 8 + static_cast<int>(rng.index(9)), 8 + static_cast<int>(rng.index(9)));
    const SMeasure s = s_measure(to_map(in.p), to_map(in.g), cfg);
    EXPECT_NEAR(s.score, oracle::s_measure(in.p, in.g), 1e-6) << "trial " << trial;
    EXPECT_GE(s.score, 0.0);
    EXPECT_LE(s.score, 1.0);
  }
}

TEST(SMeasure, AlphaEndpointsIsolateTerms) {
  Rng rng(96);
  for (int trial = 0; trial < 10; ++trial) {
    auto in = oracle::random_instance(rng);
    if (oracle::mean(in.g.v) == 0 || oracle::mean(in.g.v) == 1) continue;
    MetricsConfig cfg;
    cfg.alpha = 0.0;
    const SMeasure r = s_measure(to_map(in.p), to_map(in.g), cfg);
    EXPECT_EQ(r.score, std::max(0.0, r.region));
    EXPECT_NEAR(r.region, oracle::s_region(in.p, in.g, oracle::kMachineEps), 1e-6);
    cfg.alpha = 1.0;
    const SMeasure o = s_measure(to_map(in.p), to_map(in.g), cfg);
    EXPECT_EQ(o.score, std::max(0.0, o.object));
    EXPECT_NEAR(o.object, oracle::s_object(in.p, in.g, oracle::kMachineEps), 1e-6);
  }
}

TEST(SMeasure, DegenerateGroundTruthConvention) {
  const Map p(2, 2, {0.1, 0.2, 0.3, 0.4});
  EXPECT_DOUBLE_EQ(s_measure(p, Map::filled(2, 2, 0.0), MetricsConfig{}).score, 0.75);
  EXPECT_DOUBLE_EQ(s_measure(p, Map::filled(2, 2, 1.0), MetricsConfig{}).score, 0.25);
}

TEST(EMeasure, MatchesStraightLineReference) {
  Rng rng(97);
  const MetricsConfig cfg;
  for (int trial = 0; trial < 50; ++trial) {
    const auto in = oracle::random_instance(rng, 8 + static_cast<int>(rng.index(9)), 8 + static_cast<int>(rng.index(9)));
    const double e = e_measure(to_map(in.p), to_map(in.g), cfg);
    EXPECT_NEAR(e, oracle::e_measure(in.p, in.g), 1e-6) << "trial " << trial;
    EXPECT_GE(e, 0.0);
    EXPECT_LE(e, 1.0);
  }
}

TEST(EMeasure, ConstantPredictionAtGroundTruthMean) {
  // Constant P = mean(G) never reaches the 2x-mean threshold, so every
  // bias-free alignment term is zero and each pixel scores exactly 1/4.
  const Map g(4, 4, {1, 1, 0, 0, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0});
  const Map p = Map::filled(4, 4, 0.25);
  EXPECT_EQ(e_measure(p, g, MetricsConfig{}), 0.25);
  EXPECT_EQ(e_measure(p, g, MetricsConfig{}), oracle::e_measure(to_grid(p), to_grid(g)));
}

TEST(StructureMeasures, IdenticalMapsScoreOne) {
  Rng rng(98);
  const MetricsConfig cfg;
  for (int trial = 0; trial < 30; ++trial) {
    const auto in = oracle::random_instance(rng, 16, 16);
    const Map g = to_map(in.g);
    EXPECT_NEAR(s_measure(g, g, cfg).score, 1.0, 1e-6);
    EXPECT_NEAR(e_measure(g, g, cfg), 1.0, 1e-6);
  }
  // A single foreground pixel in a large map still scores one.
  std::vector<double> v(64 * 64, 0.0);
  v[64 * 40 + 17] = 1.0;
  const Map lone(64, 64, v);
  EXPECT_NEAR(s_measure(lone, lone, cfg).score, 1.0, 1e-6);
}

TEST(StructureMeasures, InvertedFixturePredictionsScoreLow) {
  const std::filesystem::path gt_dir = std::filesystem::path(SDG_SOURCE_DIR) / "fixtures/eval20/gt";
  ASSERT_TRUE(std::filesystem::is_directory(gt_dir));
  const MetricsConfig cfg;
  double s_total = 0, e_total = 0;
  int n = 0;
  for (const auto& entry : std::filesystem::directory_iterator(gt_dir)) {
    const Map g = load(entry.path(), true);
    std::vector<double> inv(g.values.size());
    for (std::size_t i = 0; i < inv.size(); ++i) inv[i] = 1.0 - g.values[i];
    const Map p(g.height, g.width, inv);
    const double s = s_measure(p, g, cfg).score, e = e_measure(p, g, cfg);
    EXPECT_NEAR(s, oracle::s_measure(to_grid(p), to_grid(g)), 1e-6);
    EXPECT_NEAR(e, oracle::e_measure(to_grid(p), to_grid(g)), 1e-6);
    EXPECT_LE(s, 0.2) << entry.path();
    s_total += s;
    e_total += e;
    ++n;
  }
  EXPECT_LT(e_total / n, 0.25);
}

TEST(Metrics, InputContracts) {
  const Map g(2, 2, {1, 0, 0, 1});
  EXPECT_THROW(mae(Map::filled(2, 3, 0), g), DimensionError);
  EXPECT_THROW(s_measure(Map(2, 2, {0, 1.5, 0, 0}), g, MetricsConfig{}), ContractError);
  EXPECT_THROW(e_measure(Map::filled(2, 2, 0.5), Map(2, 2, {0.5, 0, 0, 1}), MetricsConfig{}), ContractError);
  EXPECT_THROW(Map(2, 2, {1, 2, 3}), DimensionError);
  MetricsConfig bad;
  bad.thresholds = 1;
  EXPECT_THROW(bad.validate(), ConfigError);
}

// ---- dataset evaluation ----------------------------------------------------

void write_map(const std::filesystem::path& path, const Map& m) {
  io::write_png(path, io::gray_from_unit(m.height, m.width, m.values));
}

TEST(EvaluateDataset, SinglePairEqualsSingleImageReport) {
  TempDir dir("eval_single");
  Rng rng(99);
  const auto in = oracle::random_instance(rng, 16, 16);
  const Map g = to_map(in.g);
  // Round-trip the prediction through 8 bits so both paths see the same values.
  std::vector<double> q(in.p.v.size());
  for (std::size_t i = 0; i < q.size(); ++i) q[i] = std::lround(255 * in.p.v[i]) / 255.0;
  const Map p(16, 16, q);
  write_map(dir / "pred/a.png", p);
  write_map(dir / "gt/a.png", g);
  const MetricsConfig cfg;
  const auto result = evaluate_dataset(dir / "pred", dir / "gt", cfg);
  const EvalReport single = evaluate(p, g, cfg);
  EXPECT_EQ(format_report(result.report), format_report(aggregate({single}, cfg)));
  EXPECT_EQ(result.report.mae, single.mae);
  EXPECT_EQ(result.report.s_measure.score, single.s_measure.score);

  // Averaging is idempotent: a duplicated pair reports the same numbers.
  write_map(dir / "pred/b.png", p);
  write_map(dir / "gt/b.png", g);
  const auto doubled = evaluate_dataset(dir / "pred", dir / "gt", cfg);
  EXPECT_EQ(doubled.report.mae, single.mae);
  EXPECT_EQ(doubled.report.e_measure, single.e_measure);
  EXPECT_EQ(doubled.report.mean_f, single.mean_f);
  for (std::size_t k = 0; k < 256; ++k) EXPECT_EQ(doubled.report.curve[k].precision, single.curve[k].precision);
}

TEST(EvaluateDataset, FixtureEqualsMeanOfIndividualReports) {
  const std::filesystem::path root = std::filesystem::path(SDG_SOURCE_DIR) / "fixtures/eval20";
  const MetricsConfig cfg;
  const auto result = evaluate_dataset(root / "pred", root / "gt", cfg);
  ASSERT_EQ(result.evaluated.size(), 20u);
  EXPECT_TRUE(result.skipped.empty());
  double mae_sum = 0, s_sum = 0, e_sum = 0, f_sum = 0;
  std::vector<std::vector<CurvePoint>> defined;
  for (const auto& name : result.evaluated) {
    const Map p = load(root / "pred" / name, false), g = load(root / "gt" / name, true);
    const EvalReport r = evaluate(p, g, cfg);
    mae_sum += r.mae;
    s_sum += r.s_measure.score;
    e_sum += r.e_measure;
    f_sum += r.mean_f;
    if (r.recall_defined) defined.push_back(r.curve);
  }
  EXPECT_NEAR(result.report.mae, mae_sum / 20, 1e-12);
  EXPECT_NEAR(result.report.s_measure.score, s_sum / 20, 1e-12);
  EXPECT_NEAR(result.report.e_measure, e_sum / 20, 1e-12);
  EXPECT_NEAR(result.report.mean_f, f_sum / 20, 1e-12);
  EXPECT_EQ(result.report.max_f, max_f(result.report.curve));
  ASSERT_LT(defined.size(), 20u) << "fixture should contain empty ground truths";
  for (std::size_t k = 0; k < 256; k += 17) {
    double pr = 0;
    for (const auto& c : defined) pr += c[k].precision;
    EXPECT_NEAR(result.report.curve[k].precision, pr / defined.size(), 1e-12);
  }
}

TEST(EvaluateDataset, ReportIsIndependentOfWorkersAndFileOrder) {
  const std::filesystem::path root = std::filesystem::path(SDG_SOURCE_DIR) / "fixtures/eval20";
  MetricsConfig one;
  MetricsConfig many;
  many.workers = 4;
  const std::string a = format_report(evaluate_dataset(root / "pred", root / "gt", one).report);
  const std::string b = format_report(evaluate_dataset(root / "pred", root / "gt", many).report);
  EXPECT_EQ(a, b);

  // Copy the files in reverse order into fresh directories.
  TempDir dir("eval_order");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(root / "gt")) files.push_back(e.path().filename());
  std::shuffle(files.begin(), files.end(), std::mt19937(7));
  std::filesystem::create_directories(dir / "pred");
  std::filesystem::create_directories(dir / "gt");
  for (const auto& f : files) {
    std::filesystem::copy_file(root / "pred" / f, dir.path() / "pred" / f);
    std::filesystem::copy_file(root / "gt" / f, dir.path() / "gt" / f);
  }
  EXPECT_EQ(format_report(evaluate_dataset(dir / "pred", dir / "gt", many).report), a);
}

TEST(EvaluateDataset, IdenticalMapsReportPerfectScores) {
  const std::filesystem::path root = std::filesystem::path(SDG_SOURCE_DIR) / "fixtures/eval20";
  const auto result = evaluate_dataset(root / "identical", root / "gt", MetricsConfig{});
  EXPECT_EQ(result.report.mae, 0.0);
  EXPECT_NEAR(result.report.s_measure.score, 1.0, 1e-6);
  EXPECT_NEAR(result.report.e_measure, 1.0, 1e-6);
  EXPECT_NEAR(result.report.max_f, 1.0, 1e-6);
}

TEST(EvaluateDataset, MissingCounterpartsAreListed) {
  TempDir dir("eval_missing");
  const Map g(4, 4, std::vector<double>(16, 1.0));
  write_map(dir / "pred/a.png", g);
  write_map(dir / "gt/a.png", g);
  write_map(dir / "pred/b.png", g);
  write_map(dir / "gt/c.png", g);
  const auto result = evaluate_dataset(dir / "pred", dir / "gt", MetricsConfig{});
  EXPECT_EQ(result.evaluated, std::vector<std::string>{"a.png"});
  EXPECT_EQ(result.skipped, (std::vector<std::string>{"b.png: missing ground truth", "c.png: missing prediction"}));
  std::filesystem::remove(dir / "pred/a.png");
  std::filesystem::remove(dir / "gt/a.png");
  EXPECT_THROW(evaluate_dataset(dir / "pred", dir / "gt", MetricsConfig{}), ContractError);
}

TEST(EvaluateDataset, PooledCurvesUseSummedCounts) {
  const std::filesystem::path root = std::filesystem::path(SDG_SOURCE_DIR) / "fixtures/eval20";
  MetricsConfig cfg;
  cfg.pooled_curves = true;
  const auto result = evaluate_dataset(root / "pred", root / "gt", cfg);
  const auto expected = curve_from_counts(result.report.counts, cfg);
  for (std::size_t k = 0; k < 256; ++k) EXPECT_EQ(result.report.curve[k].recall, expected[k].recall);
}

TEST(Report, CurveCsvRoundTripsExactly) {
  TempDir dir("report");
  const std::filesystem::path root = std::filesystem::path(SDG_SOURCE_DIR) / "fixtures/eval20";
  MetricsConfig cfg;
  cfg.adaptive_f = true;
  const auto result = evaluate_dataset(root / "pred", root / "gt", cfg);
  write_report(result.report, dir.path());
  const auto pr = read_curve_csv(dir / "pr_curve.csv");
  ASSERT_EQ(pr.size(), 256u);
  for (std::size_t k = 0; k < 256; ++k) {
    EXPECT_EQ(pr[k].threshold, result.report.curve[k].threshold);
    EXPECT_EQ(pr[k].precision, result.report.curve[k].precision);
    EXPECT_EQ(pr[k].recall, result.report.curve[k].recall);
    EXPECT_EQ(pr[k].f, result.report.curve[k].f);
  }
  const std::string text = testing::slurp(dir / "report.txt");
  for (const char* key : {"mae = ", "mean_f = ", "max_f = ", "adaptive_f = ", "e_measure = ", "s_measure = "}) {
    EXPECT_NE(text.find(key), std::string::npos) << key;
  }
  EXPECT_EQ(testing::slurp(dir / "f_curve.csv").substr(0, 27), "threshold,precision,recall,");
}

TEST(PairwiseSum, MatchesCompensatedReference) {
  std::vector<double> v(1000);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 1.0 / static_cast<double>(i + 1);
  long double exact = 0;
  for (double x : v) exact += x;
  EXPECT_NEAR(pairwise_sum(v), static_cast<double>(exact), 1e-14);
}

}  // namespace
}  // namespace sdg::metrics
