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

#include "sdg/fixtures.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "sdg/image_io.hpp"
#include "sdg/nn.hpp"
#include "sdg/panoptic.hpp"

namespace sdg::fixtures {

namespace {

constexpr std::size_t kSize = 64;

struct Color {
  const char* name;
  std::array<std::uint8_t, 3> rgb;
};

constexpr std::array<Color, 6> kColors{{
    {"red", {210, 40, 40}},
    {"green", {40, 170, 60}},
    {"blue", {40, 70, 220}},
    {"yellow", {235, 205, 35}},
    {"purple", {140, 50, 180}},
    {"orange", {240, 130, 25}},
}};

enum class ShapeKind { kCircle, kSquare, kTriangle };
constexpr std::array<const char*, 3> kShapeNames{"circle", "square", "triangle"};

struct Shape {
  ShapeKind kind;
  double cy, cx, r;
  std::size_t color;

  bool contains(double y, double x) const {
    const double dy = y - cy, dx = x - cx;
    switch (kind) {
      case ShapeKind::kCircle:
        return dy * dy + dx * dx <= r * r;
      case ShapeKind::kSquare:
        return std::abs(dy) <= r * 0.85 && std::abs(dx) <= r * 0.85;
      case ShapeKind::kTriangle:
        // Apex up; the half-width grows linearly toward the base.
        return dy >= -r && dy <= r && std::abs(dx) <= (dy + r) * 0.5;
    }
    return false;
  }
};

std::string stem(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "img_%03zu", i);
  return buf;
}

std::string article(const Shape& s) {
  return std::string("a ") + kColors[s.color].name + " " + kShapeNames[static_cast<int>(s.kind)];
}

std::string caption_of(const std::vector<Shape>& shapes) {
  std::string c;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (i > 0) c += " and ";
    c += article(shapes[i]);
  }
  return c;
}

std::uint8_t noisy(std::uint8_t v, Rng& rng, double amplitude) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v + rng.uniform(-amplitude, amplitude)), 0L, 255L));
}

void put(io::Image8& img, std::size_t y, std::size_t x, const std::array<std::uint8_t, 3>& rgb) {
  for (std::size_t c = 0; c < 3; ++c) img.pixels[(y * img.width + x) * 3 + c] = rgb[c];
}

Shape random_shape(Rng& rng, double lo_y, double hi_y, double lo_x, double hi_x, double rmin, double rmax) {
  Shape s;
  s.kind = static_cast<ShapeKind>(rng.index(3));
  s.r = rng.uniform(rmin, rmax);
  s.cy = rng.uniform(lo_y + s.r, hi_y - s.r);
  s.cx = rng.uniform(lo_x + s.r, hi_x - s.r);
  s.color = rng.index(kColors.size());
  return s;
}

void write_captions(const std::filesystem::path& path, const std::vector<std::pair<std::string, std::string>>& rows) {
  std::ofstream os(path, std::ios::trunc);
  for (const auto& [file, text] : rows) os << file << '\t' << text << '\n';
}

}  // namespace

void make_mini_coco(const std::filesystem::path& dir, std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  for (const char* sub : {"images", "masks", "panoptic"}) std::filesystem::create_directories(dir / sub);
  panoptic::PanopticIndex index(dir);
  index.add_category(1, "circle", true);
  index.add_category(2, "square", true);
  index.add_category(3, "triangle", true);
  index.add_category(101, "wall", false);
  index.add_category(102, "floor", false);
  const std::array<std::uint8_t, 3> wall{205, 200, 185}, floor{115, 95, 75}, stripe{30, 30, 30};

  std::vector<std::pair<std::string, std::string>> captions;
  for (std::size_t i = 0; i < count; ++i) {
    const std::string id = stem(i);
    // Unique random ids exercise all three color channels of the encoding.
    std::set<std::uint32_t> used;
    auto fresh_id = [&] {
      std::uint32_t v;
      do {
        v = 1 + static_cast<std::uint32_t>(rng.index((1u << 24) - 1));
      } while (used.count(v));
      used.insert(v);
      return v;
    };
    const std::size_t horizon = 24 + rng.index(16);
    const std::size_t things = 1 + rng.index(3);
    std::vector<Shape> shapes;
    while (shapes.size() < things) {
      const Shape s = random_shape(rng, 2, kSize - 2, 2, kSize - 2, 6, 11);
      const bool apart = std::all_of(shapes.begin(), shapes.end(), [&](const Shape& o) {
        return std::hypot(o.cy - s.cy, o.cx - s.cx) > o.r + s.r + 2;
      });
      if (apart) shapes.push_back(s);
    }

    panoptic::ImageEntry entry;
    entry.id = id;
    entry.file_name = id + ".png";
    entry.segmentation = id + ".png";
    entry.width = entry.height = kSize;
    const std::uint32_t wall_id = fresh_id(), floor_id = fresh_id();
    entry.segments[wall_id] = {wall_id, 101, "wall", false};
    entry.segments[floor_id] = {floor_id, 102, "floor", false};
    std::vector<std::uint32_t> thing_ids;
    for (const auto& s : shapes) {
      const std::uint32_t sid = fresh_id();
      const int cat = 1 + static_cast<int>(s.kind);
      entry.segments[sid] = {sid, cat, kShapeNames[static_cast<int>(s.kind)], true};
      thing_ids.push_back(sid);
    }

    io::Image8 image{kSize, kSize, 3, std::vector<std::uint8_t>(kSize * kSize * 3)};
    io::Image8 mask{kSize, kSize, 1, std::vector<std::uint8_t>(kSize * kSize, 0)};
    panoptic::PanopticSegmentMap seg;
    seg.height = seg.width = kSize;
    seg.ids.assign(kSize * kSize, panoptic::kVoid);
    for (std::size_t y = 0; y < kSize; ++y) {
      for (std::size_t x = 0; x < kSize; ++x) {
        std::array<std::uint8_t, 3> rgb;
        std::uint32_t sid;
        if (y == horizon || y == horizon + 1) {
          rgb = stripe;
          sid = panoptic::kVoid;
        } else if (y < horizon) {
          rgb = wall;
          sid = wall_id;
        } else {
          rgb = floor;
          sid = floor_id;
        }
        for (std::size_t k = 0; k < shapes.size(); ++k) {
          if (shapes[k].contains(y + 0.5, x + 0.5)) {
            rgb = kColors[shapes[k].color].rgb;
            sid = thing_ids[k];
            mask.pixels[y * kSize + x] = 255;
          }
        }
        for (auto& c : rgb) c = noisy(c, rng, 6);
        put(image, y, x, rgb);
        seg.ids[y * kSize + x] = sid;
      }
    }
    // Drop segments fully hidden by shapes so every table id is visible.
    const auto counts = seg.pixel_counts();
    for (auto it = entry.segments.begin(); it != entry.segments.end();) {
      it = counts.count(it->first) ? std::next(it) : entry.segments.erase(it);
    }
    io::write_png(dir / "images" / entry.file_name, image);
    io::write_png(dir / "masks" / (id + ".png"), mask);
    io::write_png(dir / "panoptic" / entry.segmentation, panoptic::encode_panoptic(seg));
    captions.emplace_back(entry.file_name, caption_of(shapes));
    index.add(std::move(entry));
  }
  index.save(dir / "panoptic.json");
  write_captions(dir / "captions.tsv", captions);
}

void make_overfit(const std::filesystem::path& dir, std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  for (const char* sub : {"images", "masks"}) std::filesystem::create_directories(dir / sub);
  std::vector<std::pair<std::string, std::string>> captions;
  const double half = kSize / 2.0;
  for (std::size_t i = 0; i < count; ++i) {
    const std::string id = stem(i);
    // Opposite quadrants keep the two objects far apart.
    const bool flip = rng.index(2) == 1;
    std::vector<Shape> shapes;
    shapes.push_back(flip ? random_shape(rng, 2, half - 4, half + 4, kSize - 2, 7, 10)
                          : random_shape(rng, 2, half - 4, 2, half - 4, 7, 10));
    Shape second = flip ? random_shape(rng, half + 4, kSize - 2, 2, half - 4, 7, 10)
                        : random_shape(rng, half + 4, kSize - 2, half + 4, kSize - 2, 7, 10);
    if (second.color == shapes[0].color) second.color = (second.color + 1) % kColors.size();
    shapes.push_back(second);
    const auto base = static_cast<std::uint8_t>(150 + rng.index(60));
    const std::array<std::uint8_t, 3> background{base, base, static_cast<std::uint8_t>(base - 10)};

    io::Image8 image{kSize, kSize, 3, std::vector<std::uint8_t>(kSize * kSize * 3)};
    io::Image8 mask{kSize, kSize, 1, std::vector<std::uint8_t>(kSize * kSize, 0)};
    for (std::size_t y = 0; y < kSize; ++y) {
      for (std::size_t x = 0; x < kSize; ++x) {
        std::array<std::uint8_t, 3> rgb = background;
        for (const auto& s : shapes) {
          if (s.contains(y + 0.5, x + 0.5)) {
            rgb = kColors[s.color].rgb;
            mask.pixels[y * kSize + x] = 255;
          }
        }
        for (auto& c : rgb) c = noisy(c, rng, 4);
        put(image, y, x, rgb);
      }
    }
    io::write_png(dir / "images" / (id + ".png"), image);
    io::write_png(dir / "masks" / (id + ".png"), mask);
    captions.emplace_back(id + ".png", caption_of(shapes));
  }
  write_captions(dir / "captions.tsv", captions);
}

void make_eval_set(const std::filesystem::path& dir, std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  for (const char* sub : {"gt", "pred", "identical"}) std::filesystem::create_directories(dir / sub);
  for (std::size_t i = 0; i < count; ++i) {
    const std::string name = stem(i) + ".png";
    const std::size_t shapes = rng.index(3);  // zero shapes gives an empty ground truth
    std::vector<Shape> list;
    for (std::size_t k = 0; k < shapes; ++k) list.push_back(random_shape(rng, 2, 30, 2, 30, 4, 8));
    const double shift = rng.uniform(-2, 2);
    io::Image8 gt{32, 32, 1, std::vector<std::uint8_t>(32 * 32, 0)};
    io::Image8 pred = gt;
    for (std::size_t y = 0; y < 32; ++y) {
      for (std::size_t x = 0; x < 32; ++x) {
        bool in = false, near = false;
        for (const auto& s : list) {
          in = in || s.contains(y + 0.5, x + 0.5);
          near = near || s.contains(y + 0.5 + shift, x + 0.5 - shift);
        }
        gt.pixels[y * 32 + x] = in ? 255 : 0;
        const double p = (near ? 0.75 : 0.1) + rng.uniform(-0.1, 0.25);
        pred.pixels[y * 32 + x] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(p, 0.0, 1.0)));
      }
    }
    io::write_png(dir / "gt" / name, gt);
    io::write_png(dir / "pred" / name, pred);
    io::write_png(dir / "identical" / name, gt);
  }
}

}  // namespace sdg::fixtures
