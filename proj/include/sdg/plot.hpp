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

#include <string>
#include <vector>

#include "sdg/metrics.hpp"

namespace sdg::plot {

enum class CurveKind {
  kPrecisionRecall,  // precision against recall
  kFMeasure,         // F against threshold
};

struct Series {
  std::string label;
  std::vector<metrics::CurvePoint> points;
};

// Line chart on the unit square with one polyline per series, one vertex
// per curve point.
std::string render_svg(const std::vector<Series>& series, CurveKind kind);

}  // namespace sdg::plot
