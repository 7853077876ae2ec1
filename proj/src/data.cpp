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

#include "sdg/data.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "sdg/caption.hpp"
#include "sdg/ops.hpp"

namespace sdg::data {

namespace {

Tensor planes(const io::Image8& image) {
  const std::size_t c = image.channels, h = image.height, w = image.width;
  std::vector<double> v(c * h * w);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) v[(ch * h + y) * w + x] = image.at(y, x, ch) / 255.0;
    }
  }
  return Tensor::from({c, h, w}, std::move(v));
}

bool is_image_file(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

}  // namespace

Tensor image_tensor(const io::Image8& image, std::size_t size) {
  if (image.channels != 3) throw FormatError("expected a 3-channel image");
  if (size == 0) throw DimensionError("image_tensor: zero target size");
  NoGradGuard no_grad;
  const Tensor resized = ops::bilinear_resize(planes(image), size, size);
  std::vector<double> v(resized.data().begin(), resized.data().end());
  const std::size_t plane = size * size;
  for (std::size_t ch = 0; ch < 3; ++ch) {
    for (std::size_t i = 0; i < plane; ++i) {
      double& x = v[ch * plane + i];
      x = (x - kChannelMean[ch]) / kChannelStd[ch];
    }
  }
  return Tensor::from({3, size, size}, std::move(v));
}

Tensor mask_tensor(const io::Image8& mask, std::size_t size) {
  if (mask.channels != 1) throw FormatError("expected a single-channel mask");
  if (size == 0) throw DimensionError("mask_tensor: zero target size");
  NoGradGuard no_grad;
  const Tensor resized = ops::bilinear_resize(planes(mask), size, size);
  std::vector<double> v(resized.data().begin(), resized.data().end());
  for (double& x : v) x = x >= 0.5 ? 1.0 : 0.0;
  return Tensor::from({size, size}, std::move(v));
}

std::pair<Tensor, Tensor> load_pair(const SampleRecord& record, std::size_t size) {
  const std::string where = " (image " + record.image.string() + ", mask " + record.mask.string() + ")";
  io::Image8 image, mask;
  try {
    image = io::read_rgb(record.image);
    mask = io::read_gray(record.mask);
  } catch (const Error& e) {
    throw FormatError(std::string(e.what()) + where);
  }
  if (image.height != mask.height || image.width != mask.width) {
    throw FormatError("image is " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                      " but mask is " + std::to_string(mask.height) + "x" + std::to_string(mask.width) + where);
  }
  return {image_tensor(image, size), mask_tensor(mask, size)};
}

std::vector<SampleRecord> list_dataset(const std::filesystem::path& root, const std::string& split) {
  const auto images = root / "images";
  const auto masks = root / "masks";
  for (const auto& dir : {images, masks}) {
    if (!std::filesystem::is_directory(dir)) throw IoError("dataset directory missing: " + dir.string());
  }
  std::map<std::string, std::string> captions;
  if (std::filesystem::exists(root / "captions.tsv")) {
    for (auto& [name, text] : read_caption_file(root / "captions.tsv")) captions[name] = text;
  }
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(images)) {
    if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end(),
            [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });
  std::vector<SampleRecord> out;
  for (const auto& f : files) {
    SampleRecord r;
    r.image = f;
    r.mask = masks / (f.stem().string() + ".png");
    r.split = split;
    if (!std::filesystem::exists(r.mask)) throw IoError("no mask for " + f.string() + ": expected " + r.mask.string());
    const auto it = captions.find(f.filename().string());
    if (it != captions.end()) r.caption = it->second;
    out.push_back(std::move(r));
  }
  return out;
}

io::Image8 denormalize(const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) throw DimensionError("denormalize: expected 3 x H x W");
  const std::size_t h = image.dim(1), w = image.dim(2);
  io::Image8 out{h, w, 3, std::vector<std::uint8_t>(h * w * 3)};
  for (std::size_t ch = 0; ch < 3; ++ch) {
    for (std::size_t i = 0; i < h * w; ++i) {
      const double v = image[ch * h * w + i] * kChannelStd[ch] + kChannelMean[ch];
      out.pixels[i * 3 + ch] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
    }
  }
  return out;
}

}  // namespace sdg::data
