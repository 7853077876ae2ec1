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

#include "sdg/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "sdg/tensor.hpp"

namespace sdg::io {

namespace {

Image8 from_mat(const cv::Mat& mat, std::size_t channels) {
  Image8 img;
  img.height = static_cast<std::size_t>(mat.rows);
  img.width = static_cast<std::size_t>(mat.cols);
  img.channels = channels;
  img.pixels.resize(img.height * img.width * channels);
  for (int y = 0; y < mat.rows; ++y) {
    const auto* row = mat.ptr<std::uint8_t>(y);
    std::copy_n(row, img.width * channels, img.pixels.begin() + static_cast<std::ptrdiff_t>(y * img.width * channels));
  }
  return img;
}

cv::Mat to_mat(const Image8& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw FormatError("only 1- and 3-channel images can be encoded");
  }
  if (image.pixels.size() != image.height * image.width * image.channels) {
    throw DimensionError("image buffer does not match its extents");
  }
  cv::Mat mat(static_cast<int>(image.height), static_cast<int>(image.width), image.channels == 1 ? CV_8UC1 : CV_8UC3);
  for (std::size_t y = 0; y < image.height; ++y) {
    std::copy_n(image.pixels.begin() + static_cast<std::ptrdiff_t>(y * image.width * image.channels),
                image.width * image.channels, mat.ptr<std::uint8_t>(static_cast<int>(y)));
  }
  if (image.channels == 3) cv::cvtColor(mat, mat, cv::COLOR_RGB2BGR);
  return mat;
}

cv::Mat decode(const std::filesystem::path& path, int flags) {
  if (!std::filesystem::exists(path)) throw IoError("no such image: " + path.string());
  cv::Mat mat = cv::imread(path.string(), flags);
  if (mat.empty()) throw FormatError("cannot decode image " + path.string());
  if (mat.depth() != CV_8U) throw FormatError("image is not 8-bit: " + path.string());
  return mat;
}

}  // namespace

Image8 read_rgb(const std::filesystem::path& path) {
  cv::Mat mat = decode(path, cv::IMREAD_COLOR);
  cv::cvtColor(mat, mat, cv::COLOR_BGR2RGB);
  return from_mat(mat, 3);
}

Image8 read_gray(const std::filesystem::path& path) { return from_mat(decode(path, cv::IMREAD_GRAYSCALE), 1); }

std::vector<std::uint8_t> encode_png(const Image8& image) {
  std::vector<std::uint8_t> bytes;
  if (!cv::imencode(".png", to_mat(image), bytes)) throw IoError("PNG encoding failed");
  return bytes;
}

void write_png(const std::filesystem::path& path, const Image8& image) {
  const auto bytes = encode_png(image);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("failed writing " + path.string());
}

Image8 gray_from_unit(std::size_t height, std::size_t width, const std::vector<double>& values) {
  if (values.size() != height * width) throw DimensionError("gray_from_unit: buffer does not match extents");
  Image8 img{height, width, 1, std::vector<std::uint8_t>(values.size())};
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = std::clamp(values[i], 0.0, 1.0);
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * v));
  }
  return img;
}

}  // namespace sdg::io
