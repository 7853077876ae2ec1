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

#include <cstddef>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace sdg::metrics {

// Single-channel map stored row-major.
struct Map {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  Map() = default;
  Map(std::size_t h, std::size_t w, std::vector<double> v);
  static Map filled(std::size_t h, std::size_t w, double value);
  double at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
  std::size_t size() const { return values.size(); }
};

struct MetricsConfig {
  double beta2 = 0.3;
  double alpha = 0.5;
  std::size_t thresholds = 256;
  double eps = 1e-8;
  // S-/E-measure guard, as in their reference definitions.
  double structure_eps = std::numeric_limits<double>::epsilon();
  bool adaptive_f = false;     // also report F at threshold min(2 mean(P), 1)
  bool pooled_curves = false;  // dataset curves from pooled pixel counts
  std::size_t workers = 1;

  void validate() const;
};

struct CurvePoint {
  double threshold = 0;
  double precision = 0;
  double recall = 0;
  double f = 0;
};

struct ConfusionCounts {
  std::vector<double> tp, fp, fn;  // one entry per threshold
};

struct SMeasure {
  double score = 0;
  double region = 0;  // S_r
  double object = 0;  // S_o
};

struct EvalReport {
  std::size_t images = 0;
  double mae = 0;
  double mean_f = 0;
  double max_f = 0;  // best F over the thresholds (of the averaged curve for a dataset)
  double adaptive_f = 0;
  double e_measure = 0;
  SMeasure s_measure;
  std::vector<CurvePoint> curve;
  // False when G has no foreground, leaving recall undefined.
  bool recall_defined = true;
  ConfusionCounts counts;
};

double mae(const Map& pred, const Map& gt);
double threshold_at(std::size_t k, std::size_t count);
ConfusionCounts confusion_counts(const Map& pred, const Map& gt, std::size_t thresholds);
std::vector<CurvePoint> curve_from_counts(const ConfusionCounts& counts, const MetricsConfig& cfg);
std::vector<CurvePoint> pr_curve(const Map& pred, const Map& gt, const MetricsConfig& cfg);
double f_measure(double precision, double recall, double beta2, double eps = 1e-8);
double mean_f(const std::vector<CurvePoint>& curve);
double max_f(const std::vector<CurvePoint>& curve);
SMeasure s_measure(const Map& pred, const Map& gt, const MetricsConfig& cfg);
double e_measure(const Map& pred, const Map& gt, const MetricsConfig& cfg);

EvalReport evaluate(const Map& pred, const Map& gt, const MetricsConfig& cfg);
// Order-independent aggregation: per-image reports are combined in the
// given order with pairwise summation; callers sort by key first.
EvalReport aggregate(const std::vector<EvalReport>& reports, const MetricsConfig& cfg);
double pairwise_sum(std::span<const double> values);

struct DatasetEvaluation {
  EvalReport report;
  std::vector<std::string> evaluated;
  std::vector<std::string> skipped;  // "name: reason"
};

// Pairs PNGs by filename; ground truth is binarized at 128/255.
DatasetEvaluation evaluate_dataset(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                                   const MetricsConfig& cfg);

// Report text (key = value lines then curve tables) plus pr_curve.csv and
// f_curve.csv, both with threshold,precision,recall,f columns.
void write_report(const EvalReport& report, const std::filesystem::path& out_dir);
std::string format_report(const EvalReport& report);
std::vector<CurvePoint> read_curve_csv(const std::filesystem::path& path);

}  // namespace sdg::metrics
