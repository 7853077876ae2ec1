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

#include "sdg/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "sdg/image_io.hpp"
#include "sdg/tensor.hpp"

namespace sdg::metrics {

namespace {

void check_pair(const Map& pred, const Map& gt, const char* op) {
  if (pred.height != gt.height || pred.width != gt.width) {
    throw DimensionError(std::string(op) + ": prediction " + std::to_string(pred.height) + "x" +
                         std::to_string(pred.width) + " vs ground truth " + std::to_string(gt.height) + "x" +
                         std::to_string(gt.width));
  }
  if (pred.size() == 0) throw DimensionError(std::string(op) + ": empty map");
}

void check_unit(const Map& pred, const char* op) {
  for (double v : pred.values) {
    if (!(v >= 0.0 && v <= 1.0)) throw ContractError(std::string(op) + ": prediction value outside [0, 1]");
  }
}

void check_binary(const Map& gt, const char* op) {
  for (double v : gt.values) {
    if (v != 0.0 && v != 1.0) throw ContractError(std::string(op) + ": ground truth is not binary");
  }
}

double mean_of(std::span<const double> values) {
  return values.empty() ? 0.0 : pairwise_sum(values) / static_cast<double>(values.size());
}

// Index of the highest threshold not exceeding p, so that p >= t_k exactly
// when bin(p) >= k. The float estimate is corrected against threshold_at.
std::size_t bin_of(double p, std::size_t count) {
  const double scale = static_cast<double>(count - 1);
  auto b = static_cast<std::size_t>(std::clamp(std::floor(p * scale), 0.0, scale));
  while (b + 1 < count && threshold_at(b + 1, count) <= p) ++b;
  while (b > 0 && threshold_at(b, count) > p) --b;
  return b;
}

// Object-level similarity of one region: 2 mu / (mu^2 + 1 + sigma + eps).
double s_object(const std::vector<double>& x, double eps) {
  if (x.empty()) return 0.0;
  const double mu = mean_of(x);
  double var = 0.0;
  if (x.size() > 1) {
    std::vector<double> sq(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) sq[i] = (x[i] - mu) * (x[i] - mu);
    var = pairwise_sum(sq) / static_cast<double>(x.size() - 1);
  }
  return 2.0 * mu / (mu * mu + 1.0 + std::sqrt(var) + eps);
}

double object_term(const Map& pred, const Map& gt, double eps) {
  std::vector<double> fg, bg;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (gt.values[i] == 1.0) {
      fg.push_back(pred.values[i]);
    } else {
      bg.push_back(1.0 - pred.values[i]);
    }
  }
  const double u = static_cast<double>(fg.size()) / static_cast<double>(pred.size());
  return u * s_object(fg, eps) + (1.0 - u) * s_object(bg, eps);
}

// SSIM-style score of one block with (N - 1) normalized moments.
double block_ssim(const Map& pred, const Map& gt, std::size_t y0, std::size_t y1, std::size_t x0, std::size_t x1,
                  double eps) {
  const std::size_t n = (y1 - y0) * (x1 - x0);
  std::vector<double> p, g;
  p.reserve(n);
  g.reserve(n);
  for (std::size_t y = y0; y < y1; ++y) {
    for (std::size_t x = x0; x < x1; ++x) {
      p.push_back(pred.at(y, x));
      g.push_back(gt.at(y, x));
    }
  }
  const double mx = mean_of(p), my = mean_of(g);
  double sxx = 0, syy = 0, sxy = 0;
  if (n > 1) {
    std::vector<double> a(n), b(n), c(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = (p[i] - mx) * (p[i] - mx);
      b[i] = (g[i] - my) * (g[i] - my);
      c[i] = (p[i] - mx) * (g[i] - my);
    }
    const double d = static_cast<double>(n - 1);
    sxx = pairwise_sum(a) / d;
    syy = pairwise_sum(b) / d;
    sxy = pairwise_sum(c) / d;
  }
  const double alpha = 4.0 * mx * my * sxy;
  const double beta = (mx * mx + my * my) * (sxx + syy);
  if (alpha != 0.0) return alpha / (beta + eps);
  if (beta == 0.0) return 1.0;
  return 0.0;
}

double region_term(const Map& pred, const Map& gt, double eps) {
  const std::size_t h = gt.height, w = gt.width;
  // Foreground centroid, rounded half-to-even, then shifted by one so that
  // the split lines sit just past the centroid pixel.
  double sy = 0, sx = 0, n = 0;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (gt.at(y, x) == 1.0) {
        sy += static_cast<double>(y);
        sx += static_cast<double>(x);
        n += 1;
      }
    }
  }
  double cy, cx;
  if (n == 0) {
    cy = std::nearbyint(static_cast<double>(h) / 2.0);
    cx = std::nearbyint(static_cast<double>(w) / 2.0);
  } else {
    cy = std::nearbyint(sy / n);
    cx = std::nearbyint(sx / n);
  }
  const auto yc = std::min(h, static_cast<std::size_t>(cy) + 1);
  const auto xc = std::min(w, static_cast<std::size_t>(cx) + 1);
  const double area = static_cast<double>(h * w);
  const double w1 = static_cast<double>(xc * yc) / area;
  const double w2 = static_cast<double>(yc * (w - xc)) / area;
  const double w3 = static_cast<double>((h - yc) * xc) / area;
  const double w4 = 1.0 - w1 - w2 - w3;
  // Empty quadrants carry zero weight and are skipped rather than scored.
  auto part = [&](double weight, std::size_t y0, std::size_t y1, std::size_t x0, std::size_t x1) {
    if (y1 <= y0 || x1 <= x0) return 0.0;
    return weight * block_ssim(pred, gt, y0, y1, x0, x1, eps);
  };
  return part(w1, 0, yc, 0, xc) + part(w2, 0, yc, xc, w) + part(w3, yc, h, 0, xc) + part(w4, yc, h, xc, w);
}

double adaptive_threshold(const Map& pred) { return std::min(2.0 * mean_of(pred.values), 1.0); }

// Adaptive binarization: at or above the threshold, and never a zero pixel, so
// an all-zero prediction (threshold 0) stays entirely background.
bool adaptive_on(double v, double thr) { return v >= thr && v > 0.0; }

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_curve_csv(const std::filesystem::path& path, const std::vector<CurvePoint>& curve) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << "threshold,precision,recall,f\n";
  for (const auto& p : curve) {
    os << fmt(p.threshold) << ',' << fmt(p.precision) << ',' << fmt(p.recall) << ',' << fmt(p.f) << '\n';
  }
  if (!os) throw IoError("failed writing " + path.string());
}

Map load_map(const std::filesystem::path& path, bool binarize) {
  const io::Image8 img = io::read_gray(path);
  std::vector<double> v(img.pixels.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = binarize ? (img.pixels[i] >= 128 ? 1.0 : 0.0) : img.pixels[i] / 255.0;
  }
  return Map(img.height, img.width, std::move(v));
}

}  // namespace

Map::Map(std::size_t h, std::size_t w, std::vector<double> v) : height(h), width(w), values(std::move(v)) {
  if (values.size() != h * w) throw DimensionError("Map: buffer does not match " + std::to_string(h) + "x" + std::to_string(w));
}

Map Map::filled(std::size_t h, std::size_t w, double value) { return Map(h, w, std::vector<double>(h * w, value)); }

void MetricsConfig::validate() const {
  if (!(beta2 > 0)) throw ConfigError("metrics: beta2 must be positive");
  if (!(alpha >= 0 && alpha <= 1)) throw ConfigError("metrics: alpha must lie in [0, 1]");
  if (thresholds < 2) throw ConfigError("metrics: threshold count must be at least 2");
  if (!(eps > 0) || !(structure_eps > 0)) throw ConfigError("metrics: epsilon guards must be positive");
  if (workers == 0) throw ConfigError("metrics: worker count must be at least 1");
}

double pairwise_sum(std::span<const double> values) {
  if (values.size() <= 8) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.subspan(0, half)) + pairwise_sum(values.subspan(half));
}

double mae(const Map& pred, const Map& gt) {
  check_pair(pred, gt, "mae");
  std::vector<double> diff(pred.size());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = std::abs(pred.values[i] - gt.values[i]);
  return mean_of(diff);
}

double threshold_at(std::size_t k, std::size_t count) {
  return static_cast<double>(k) / static_cast<double>(count - 1);
}

ConfusionCounts confusion_counts(const Map& pred, const Map& gt, std::size_t thresholds) {
  check_pair(pred, gt, "confusion_counts");
  check_unit(pred, "confusion_counts");
  check_binary(gt, "confusion_counts");
  if (thresholds < 2) throw ContractError("confusion_counts: threshold count must be at least 2");
  std::vector<std::size_t> fg_hist(thresholds, 0), bg_hist(thresholds, 0);
  std::size_t fg_total = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const std::size_t b = bin_of(pred.values[i], thresholds);
    if (gt.values[i] == 1.0) {
      ++fg_hist[b];
      ++fg_total;
    } else {
      ++bg_hist[b];
    }
  }
  ConfusionCounts c;
  c.tp.assign(thresholds, 0);
  c.fp.assign(thresholds, 0);
  c.fn.assign(thresholds, 0);
  std::size_t tp = 0, fp = 0;
  for (std::size_t k = thresholds; k-- > 0;) {
    tp += fg_hist[k];
    fp += bg_hist[k];
    c.tp[k] = static_cast<double>(tp);
    c.fp[k] = static_cast<double>(fp);
    c.fn[k] = static_cast<double>(fg_total - tp);
  }
  return c;
}

double f_measure(double precision, double recall, double beta2, double eps) {
  return (1.0 + beta2) * precision * recall / (beta2 * precision + recall + eps);
}

std::vector<CurvePoint> curve_from_counts(const ConfusionCounts& counts, const MetricsConfig& cfg) {
  const std::size_t n = counts.tp.size();
  if (counts.fp.size() != n || counts.fn.size() != n) throw DimensionError("curve_from_counts: ragged counts");
  std::vector<CurvePoint> curve(n);
  for (std::size_t k = 0; k < n; ++k) {
    CurvePoint& p = curve[k];
    p.threshold = threshold_at(k, n);
    p.precision = counts.tp[k] / (counts.tp[k] + counts.fp[k] + cfg.eps);
    p.recall = counts.tp[k] / (counts.tp[k] + counts.fn[k] + cfg.eps);
    p.f = f_measure(p.precision, p.recall, cfg.beta2, cfg.eps);
  }
  return curve;
}

std::vector<CurvePoint> pr_curve(const Map& pred, const Map& gt, const MetricsConfig& cfg) {
  return curve_from_counts(confusion_counts(pred, gt, cfg.thresholds), cfg);
}

double mean_f(const std::vector<CurvePoint>& curve) {
  std::vector<double> f(curve.size());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = curve[i].f;
  return mean_of(f);
}

double max_f(const std::vector<CurvePoint>& curve) {
  double best = 0.0;
  for (const auto& p : curve) best = std::max(best, p.f);
  return best;
}

SMeasure s_measure(const Map& pred, const Map& gt, const MetricsConfig& cfg) {
  check_pair(pred, gt, "s_measure");
  check_unit(pred, "s_measure");
  check_binary(gt, "s_measure");
  const double y = mean_of(gt.values);
  SMeasure s;
  if (y == 0.0) {
    s.score = s.region = s.object = 1.0 - mean_of(pred.values);
    return s;
  }
  if (y == 1.0) {
    s.score = s.region = s.object = mean_of(pred.values);
    return s;
  }
  s.object = object_term(pred, gt, cfg.structure_eps);
  s.region = region_term(pred, gt, cfg.structure_eps);
  s.score = std::max(0.0, cfg.alpha * s.object + (1.0 - cfg.alpha) * s.region);
  return s;
}

double e_measure(const Map& pred, const Map& gt, const MetricsConfig& cfg) {
  check_pair(pred, gt, "e_measure");
  check_unit(pred, "e_measure");
  check_binary(gt, "e_measure");
  const double thr = adaptive_threshold(pred);
  const std::size_t n = pred.size();
  std::vector<double> fm(n);
  for (std::size_t i = 0; i < n; ++i) fm[i] = adaptive_on(pred.values[i], thr) ? 1.0 : 0.0;
  const double g_mean = mean_of(gt.values);
  std::vector<double> enhanced(n);
  if (g_mean == 0.0) {
    for (std::size_t i = 0; i < n; ++i) enhanced[i] = 1.0 - fm[i];
  } else if (g_mean == 1.0) {
    enhanced = fm;
  } else {
    const double f_mean = mean_of(fm);
    for (std::size_t i = 0; i < n; ++i) {
      const double a = fm[i] - f_mean, b = gt.values[i] - g_mean;
      const double align = 2.0 * a * b / (a * a + b * b + cfg.structure_eps);
      enhanced[i] = (align + 1.0) * (align + 1.0) / 4.0;
    }
  }
  return mean_of(enhanced);
}

EvalReport evaluate(const Map& pred, const Map& gt, const MetricsConfig& cfg) {
  cfg.validate();
  EvalReport r;
  r.images = 1;
  r.mae = mae(pred, gt);
  r.counts = confusion_counts(pred, gt, cfg.thresholds);
  r.curve = curve_from_counts(r.counts, cfg);
  r.mean_f = mean_f(r.curve);
  r.max_f = max_f(r.curve);
  r.recall_defined = std::any_of(gt.values.begin(), gt.values.end(), [](double v) { return v == 1.0; });
  if (cfg.adaptive_f) {
    const double thr = adaptive_threshold(pred);
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const bool on = adaptive_on(pred.values[i], thr);
      const bool fg = gt.values[i] == 1.0;
      tp += on && fg;
      fp += on && !fg;
      fn += !on && fg;
    }
    r.adaptive_f = f_measure(tp / (tp + fp + cfg.eps), tp / (tp + fn + cfg.eps), cfg.beta2, cfg.eps);
  }
  r.e_measure = e_measure(pred, gt, cfg);
  r.s_measure = s_measure(pred, gt, cfg);
  return r;
}

EvalReport aggregate(const std::vector<EvalReport>& reports, const MetricsConfig& cfg) {
  if (reports.empty()) throw ContractError("aggregate: no reports");
  const std::size_t n = reports.size();
  const std::size_t t = reports.front().curve.size();
  auto mean_field = [&](auto get) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = get(reports[i]);
    return mean_of(v);
  };
  EvalReport out;
  out.images = 0;
  for (const auto& r : reports) {
    if (r.curve.size() != t || r.counts.tp.size() != t) throw DimensionError("aggregate: curve length mismatch");
    out.images += r.images;
  }
  out.mae = mean_field([](const EvalReport& r) { return r.mae; });
  out.mean_f = mean_field([](const EvalReport& r) { return r.mean_f; });
  out.adaptive_f = mean_field([](const EvalReport& r) { return r.adaptive_f; });
  out.e_measure = mean_field([](const EvalReport& r) { return r.e_measure; });
  out.s_measure.score = mean_field([](const EvalReport& r) { return r.s_measure.score; });
  out.s_measure.region = mean_field([](const EvalReport& r) { return r.s_measure.region; });
  out.s_measure.object = mean_field([](const EvalReport& r) { return r.s_measure.object; });

  out.counts.tp.assign(t, 0);
  out.counts.fp.assign(t, 0);
  out.counts.fn.assign(t, 0);
  std::vector<double> column(n);
  auto pooled = [&](auto member) {
    for (std::size_t k = 0; k < t; ++k) {
      for (std::size_t i = 0; i < n; ++i) column[i] = (reports[i].counts.*member)[k];
      (out.counts.*member)[k] = pairwise_sum(column);
    }
  };
  pooled(&ConfusionCounts::tp);
  pooled(&ConfusionCounts::fp);
  pooled(&ConfusionCounts::fn);

  std::vector<const EvalReport*> defined;
  for (const auto& r : reports) {
    if (r.recall_defined) defined.push_back(&r);
  }
  out.recall_defined = !defined.empty();
  if (cfg.pooled_curves) {
    out.curve = curve_from_counts(out.counts, cfg);
    out.max_f = max_f(out.curve);
    return out;
  }
  // Curves with undefined recall are left out; with none defined the
  // average falls back to every image so the table is still populated.
  if (defined.empty()) {
    for (const auto& r : reports) defined.push_back(&r);
  }
  out.curve.resize(t);
  std::vector<double> col(defined.size());
  auto average = [&](double CurvePoint::*member, std::size_t k) {
    for (std::size_t i = 0; i < defined.size(); ++i) col[i] = defined[i]->curve[k].*member;
    return mean_of(col);
  };
  for (std::size_t k = 0; k < t; ++k) {
    out.curve[k].threshold = reports.front().curve[k].threshold;
    out.curve[k].precision = average(&CurvePoint::precision, k);
    out.curve[k].recall = average(&CurvePoint::recall, k);
    out.curve[k].f = average(&CurvePoint::f, k);
  }
  out.max_f = max_f(out.curve);
  return out;
}

DatasetEvaluation evaluate_dataset(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                                   const MetricsConfig& cfg) {
  cfg.validate();
  for (const auto& dir : {pred_dir, gt_dir}) {
    if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  }
  auto png_names = [](const std::filesystem::path& dir) {
    std::set<std::string> names;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
      if (e.is_regular_file() && e.path().extension() == ".png") names.insert(e.path().filename().string());
    }
    return names;
  };
  const auto preds = png_names(pred_dir);
  const auto gts = png_names(gt_dir);

  DatasetEvaluation out;
  std::vector<std::string> pairs;
  for (const auto& name : gts) {
    if (preds.count(name)) {
      pairs.push_back(name);
    } else {
      out.skipped.push_back(name + ": missing prediction");
    }
  }
  for (const auto& name : preds) {
    if (!gts.count(name)) out.skipped.push_back(name + ": missing ground truth");
  }
  std::sort(out.skipped.begin(), out.skipped.end());

  std::vector<EvalReport> reports(pairs.size());
  std::vector<std::string> errors(pairs.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < pairs.size(); i = next++) {
      try {
        const Map pred = load_map(pred_dir / pairs[i], false);
        const Map gt = load_map(gt_dir / pairs[i], true);
        reports[i] = evaluate(pred, gt, cfg);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const std::size_t workers = std::min<std::size_t>(cfg.workers, std::max<std::size_t>(pairs.size(), 1));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();

  std::vector<EvalReport> kept;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (errors[i].empty()) {
      kept.push_back(std::move(reports[i]));
      out.evaluated.push_back(pairs[i]);
    } else {
      out.skipped.push_back(pairs[i] + ": " + errors[i]);
    }
  }
  if (kept.empty()) throw ContractError("evaluate_dataset: no matching prediction/ground-truth pairs");
  out.report = aggregate(kept, cfg);
  return out;
}

std::string format_report(const EvalReport& report) {
  std::ostringstream os;
  os << "images = " << report.images << '\n';
  os << "mae = " << fmt(report.mae) << '\n';
  os << "mean_f = " << fmt(report.mean_f) << '\n';
  os << "max_f = " << fmt(report.max_f) << '\n';
  os << "adaptive_f = " << fmt(report.adaptive_f) << '\n';
  os << "e_measure = " << fmt(report.e_measure) << '\n';
  os << "s_measure = " << fmt(report.s_measure.score) << '\n';
  os << "s_region = " << fmt(report.s_measure.region) << '\n';
  os << "s_object = " << fmt(report.s_measure.object) << '\n';
  os << "recall_defined = " << (report.recall_defined ? "true" : "false") << '\n';
  os << "\n[pr_curve]\nthreshold precision recall\n";
  for (const auto& p : report.curve) os << fmt(p.threshold) << ' ' << fmt(p.precision) << ' ' << fmt(p.recall) << '\n';
  os << "\n[f_curve]\nthreshold f\n";
  for (const auto& p : report.curve) os << fmt(p.threshold) << ' ' << fmt(p.f) << '\n';
  return os.str();
}

void write_report(const EvalReport& report, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream os(out_dir / "report.txt", std::ios::trunc);
    if (!os) throw IoError("cannot write " + (out_dir / "report.txt").string());
    os << format_report(report);
  }
  write_curve_csv(out_dir / "pr_curve.csv", report.curve);
  write_curve_csv(out_dir / "f_curve.csv", report.curve);
}

std::vector<CurvePoint> read_curve_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read " + path.string());
  std::string line;
  if (!std::getline(is, line) || line != "threshold,precision,recall,f") {
    throw FormatError(path.string() + ": unexpected curve header");
  }
  std::vector<CurvePoint> curve;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty()) continue;
    CurvePoint p;
    char c1, c2, c3;
    std::istringstream ls(line);
    if (!(ls >> p.threshold >> c1 >> p.precision >> c2 >> p.recall >> c3 >> p.f) || c1 != ',' || c2 != ',' ||
        c3 != ',') {
      throw FormatError(path.string() + ": malformed row " + std::to_string(row));
    }
    curve.push_back(p);
  }
  return curve;
}

}  // namespace sdg::metrics
