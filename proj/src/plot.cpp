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

#include "sdg/plot.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <sstream>

#include "sdg/tensor.hpp"

namespace sdg::plot {

namespace {

constexpr double kWidth = 480, kHeight = 400;
constexpr double kLeft = 60, kRight = 130, kTop = 30, kBottom = 50;
constexpr std::array<const char*, 6> kPalette{"#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string render_svg(const std::vector<Series>& series, CurveKind kind) {
  if (series.empty()) throw ContractError("render_svg: no series");
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto sx = [&](double x) { return kLeft + std::clamp(x, 0.0, 1.0) * pw; };
  auto sy = [&](double y) { return kTop + (1.0 - std::clamp(y, 0.0, 1.0)) * ph; };
  const bool pr = kind == CurveKind::kPrecisionRecall;

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";
  os << "<g stroke=\"#dddddd\" stroke-width=\"1\">\n";
  for (int i = 0; i <= 10; ++i) {
    const double t = i / 10.0;
    os << "<line x1=\"" << num(sx(t)) << "\" y1=\"" << num(sy(0)) << "\" x2=\"" << num(sx(t)) << "\" y2=\""
       << num(sy(1)) << "\"/>\n";
    os << "<line x1=\"" << num(sx(0)) << "\" y1=\"" << num(sy(t)) << "\" x2=\"" << num(sx(1)) << "\" y2=\""
       << num(sy(t)) << "\"/>\n";
  }
  os << "</g>\n";
  os << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  os << "<g font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">\n";
  for (int i = 0; i <= 5; ++i) {
    const double t = i / 5.0;
    os << "<text x=\"" << num(sx(t)) << "\" y=\"" << num(sy(0) + 16) << "\">" << num(t) << "</text>\n";
    os << "<text x=\"" << num(sx(0) - 20) << "\" y=\"" << num(sy(t) + 4) << "\">" << num(t) << "</text>\n";
  }
  os << "<text x=\"" << num(kLeft + pw / 2) << "\" y=\"" << num(kHeight - 12) << "\">"
     << (pr ? "Recall" : "Threshold") << "</text>\n";
  os << "<text x=\"16\" y=\"" << num(kTop + ph / 2) << "\" transform=\"rotate(-90 16 " << num(kTop + ph / 2)
     << ")\">" << (pr ? "Precision" : "F-measure") << "</text>\n";
  os << "</g>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % kPalette.size()];
    os << "<polyline class=\"curve\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < series[s].points.size(); ++i) {
      const auto& p = series[s].points[i];
      const double x = pr ? p.recall : p.threshold;
      const double y = pr ? p.precision : p.f;
      os << (i ? " " : "") << num(sx(x)) << ',' << num(sy(y));
    }
    os << "\"/>\n";
    const double ly = kTop + 14 + 16.0 * static_cast<double>(s);
    os << "<line x1=\"" << num(kLeft + pw + 10) << "\" y1=\"" << num(ly - 4) << "\" x2=\"" << num(kLeft + pw + 30)
       << "\" y2=\"" << num(ly - 4) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << num(kLeft + pw + 34) << "\" y=\"" << num(ly)
       << "\" font-family=\"sans-serif\" font-size=\"11\">" << escape(series[s].label) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace sdg::plot
