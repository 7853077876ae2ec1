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

// Straight-line reference implementations of the saliency metrics, written
// from the published definitions with plain loops and naive summation. They
// share no code with the library and exist only as test oracles.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "sdg/nn.hpp"

namespace sdg::oracle {

struct Grid {
  int h = 0, w = 0;
  std::vector<double> v;
  double operator()(int y, int x) const { return v[static_cast<std::size_t>(y * w + x)]; }
};

inline constexpr double kMachineEps = std::numeric_limits<double>::epsilon();

inline double mean(const std::vector<double>& x) {
  double s = 0;
  for (double v : x) s += v;
  return x.empty() ? 0.0 : s / static_cast<double>(x.size());
}

// ---- pixel counting ---------------------------------------------------------

struct Counts {
  double tp = 0, fp = 0, fn = 0;
};

// Pixels with P >= t are predicted salient.
inline Counts count_at(const Grid& p, const Grid& g, double t) {
  Counts c;
  for (std::size_t i = 0; i < p.v.size(); ++i) {
    const bool on = p.v[i] >= t;
    const bool fg = g.v[i] > 0.5;
    if (on && fg) c.tp += 1;
    if (on && !fg) c.fp += 1;
    if (!on && fg) c.fn += 1;
  }
  return c;
}

inline double mae(const Grid& p, const Grid& g) {
  double s = 0;
  for (std::size_t i = 0; i < p.v.size(); ++i) s += std::abs(p.v[i] - g.v[i]);
  return s / static_cast<double>(p.v.size());
}

// ---- S-measure -------------------------------------------------------------

// 2 mu / (mu^2 + 1 + sigma + eps), sigma the sample standard deviation
// (taken as 0 for a single pixel).
inline double object_similarity(const std::vector<double>& x, double eps) {
  if (x.empty()) return 0;
  const double mu = mean(x);
  double ss = 0;
  for (double v : x) ss += (v - mu) * (v - mu);
  const double sigma = x.size() > 1 ? std::sqrt(ss / static_cast<double>(x.size() - 1)) : 0.0;
  return 2 * mu / (mu * mu + 1 + sigma + eps);
}

inline double s_object(const Grid& p, const Grid& g, double eps) {
  std::vector<double> fg, bg;
  for (std::size_t i = 0; i < p.v.size(); ++i) {
    if (g.v[i] > 0.5) {
      fg.push_back(p.v[i]);
    } else {
      bg.push_back(1 - p.v[i]);
    }
  }
  const double u = static_cast<double>(fg.size()) / static_cast<double>(p.v.size());
  return u * object_similarity(fg, eps) + (1 - u) * object_similarity(bg, eps);
}

inline double ssim(const Grid& p, const Grid& g, int y0, int y1, int x0, int x1, double eps) {
  const int n = (y1 - y0) * (x1 - x0);
  double mx = 0, my = 0;
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      mx += p(y, x);
      my += g(y, x);
    }
  mx /= n;
  my /= n;
  double sx = 0, sy = 0, sxy = 0;
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      sx += (p(y, x) - mx) * (p(y, x) - mx);
      sy += (g(y, x) - my) * (g(y, x) - my);
      sxy += (p(y, x) - mx) * (g(y, x) - my);
    }
  if (n > 1) {
    sx /= n - 1;
    sy /= n - 1;
    sxy /= n - 1;
  } else {
    sx = sy = sxy = 0;
  }
  const double a = 4 * mx * my * sxy;
  const double b = (mx * mx + my * my) * (sx + sy);
  if (a != 0) return a / (b + eps);
  return b == 0 ? 1.0 : 0.0;
}

inline double s_region(const Grid& p, const Grid& g, double eps) {
  double sy = 0, sx = 0, n = 0;
  for (int y = 0; y < g.h; ++y)
    for (int x = 0; x < g.w; ++x)
      if (g(y, x) > 0.5) {
        sy += y;
        sx += x;
        n += 1;
      }
  // Centroid rounded half-to-even, split just past it.
  const int cy = std::min(g.h, static_cast<int>(std::nearbyint(sy / n)) + 1);
  const int cx = std::min(g.w, static_cast<int>(std::nearbyint(sx / n)) + 1);
  const double area = static_cast<double>(g.h) * g.w;
  const double w1 = cx * cy / area, w2 = (g.w - cx) * cy / area, w3 = cx * (g.h - cy) / area;
  const double w4 = 1 - w1 - w2 - w3;
  double s = 0;
  if (cy > 0 && cx > 0) s += w1 * ssim(p, g, 0, cy, 0, cx, eps);
  if (cy > 0 && cx < g.w) s += w2 * ssim(p, g, 0, cy, cx, g.w, eps);
  if (cy < g.h && cx > 0) s += w3 * ssim(p, g, cy, g.h, 0, cx, eps);
  if (cy < g.h && cx < g.w) s += w4 * ssim(p, g, cy, g.h, cx, g.w, eps);
  return s;
}

inline double s_measure(const Grid& p, const Grid& g, double alpha = 0.5, double eps = kMachineEps) {
  const double y = mean(g.v);
  if (y == 0) return 1 - mean(p.v);
  if (y == 1) return mean(p.v);
  return std::max(0.0, alpha * s_object(p, g, eps) + (1 - alpha) * s_region(p, g, eps));
}

// ---- E-measure -------------------------------------------------------------

// Adaptive binarization keeps zero pixels as background so that an all-zero
// prediction of an empty ground truth scores one.
inline double e_measure(const Grid& p, const Grid& g, double eps = kMachineEps) {
  const std::size_t n = p.v.size();
  const double threshold = std::min(2 * mean(p.v), 1.0);
  std::vector<double> fm(n);
  for (std::size_t i = 0; i < n; ++i) fm[i] = (p.v[i] >= threshold && p.v[i] > 0) ? 1 : 0;
  const double gm = mean(g.v);
  double total = 0;
  if (gm == 0) {
    for (double f : fm) total += 1 - f;
  } else if (gm == 1) {
    for (double f : fm) total += f;
  } else {
    const double fmean = mean(fm);
    for (std::size_t i = 0; i < n; ++i) {
      const double a = fm[i] - fmean, b = g.v[i] - gm;
      const double align = 2 * a * b / (a * a + b * b + eps);
      total += (align + 1) * (align + 1) / 4;
    }
  }
  return total / static_cast<double>(n);
}

// ---- instance generator ----------------------------------------------------

struct Instance {
  Grid p, g;
};

// Ground truth of one or two random rectangles (occasionally empty or full)
// and a prediction mixing a noisy copy, flipped pixels, and 8-bit quantized values
// so that some pixels sit exactly on thresholds.
inline Instance random_instance(Rng& rng, int h = 8, int w = 8) {
  Instance in;
  in.g = {h, w, std::vector<double>(static_cast<std::size_t>(h * w), 0.0)};
  in.p = in.g;
  const double kind = rng.uniform();
  if (kind < 0.05) {
    // all background
  } else if (kind < 0.1) {
    std::fill(in.g.v.begin(), in.g.v.end(), 1.0);
  } else {
    const int rects = 1 + static_cast<int>(rng.index(2));
    for (int r = 0; r < rects; ++r) {
      const int y0 = static_cast<int>(rng.index(static_cast<std::size_t>(h)));
      const int x0 = static_cast<int>(rng.index(static_cast<std::size_t>(w)));
      const int y1 = y0 + 1 + static_cast<int>(rng.index(static_cast<std::size_t>(h - y0)));
      const int x1 = x0 + 1 + static_cast<int>(rng.index(static_cast<std::size_t>(w - x0)));
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) in.g.v[static_cast<std::size_t>(y * w + x)] = 1.0;
    }
  }
  const double noise = rng.uniform(0.0, 0.6);
  const bool quantize = rng.uniform() < 0.5;
  for (std::size_t i = 0; i < in.p.v.size(); ++i) {
    double v = (1 - noise) * in.g.v[i] + noise * rng.uniform();
    if (rng.uniform() < 0.1) v = 1 - v;
    if (quantize) v = std::nearbyint(v * 255) / 255;
    in.p.v[i] = std::clamp(v, 0.0, 1.0);
  }
  return in;
}

}  // namespace sdg::oracle
