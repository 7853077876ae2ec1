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

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "sdg/image_io.hpp"
#include "sdg/tensor.hpp"

namespace sdg::panoptic {

// COCO panoptic color encoding: id = R + 256 G + 65536 B; id 0 is void.
inline constexpr std::uint32_t kVoid = 0;
std::uint32_t color_to_id(std::uint8_t r, std::uint8_t g, std::uint8_t b);
std::array<std::uint8_t, 3> id_to_color(std::uint32_t id);

struct Segment {
  std::uint32_t id = 0;
  int category_id = 0;
  std::string category;
  bool isthing = false;  // foreground hint
};

using SegmentTable = std::map<std::uint32_t, Segment>;

struct PanopticSegmentMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint32_t> ids;  // row-major
  SegmentTable table;

  std::uint32_t at(std::size_t y, std::size_t x) const { return ids[y * width + x]; }
  // Pixel count per nonvoid id present in the raster.
  std::map<std::uint32_t, std::size_t> pixel_counts() const;
};

// Raises FormatError naming the first unknown id and a pixel where it occurs.
PanopticSegmentMap decode_panoptic(const io::Image8& raster, const SegmentTable& table);
io::Image8 encode_panoptic(const PanopticSegmentMap& seg);

struct ImageEntry {
  std::string id;  // file stem
  std::string file_name;
  std::string segmentation;  // raster file name under panoptic/
  std::size_t width = 0;
  std::size_t height = 0;
  SegmentTable segments;
};

// COCO-panoptic-style panoptic.json: images, annotations with segments_info,
// and categories. Entries are ordered by image id.
class PanopticIndex {
 public:
  PanopticIndex() = default;
  explicit PanopticIndex(std::filesystem::path root) : root_(std::move(root)) {}

  static PanopticIndex load(const std::filesystem::path& dataset_root);
  void save(const std::filesystem::path& path) const;

  const std::filesystem::path& root() const { return root_; }
  const std::vector<ImageEntry>& images() const { return images_; }
  const ImageEntry* find(const std::string& id) const;
  std::filesystem::path image_path(const ImageEntry& e) const { return root_ / "images" / e.file_name; }
  std::filesystem::path raster_path(const ImageEntry& e) const { return root_ / "panoptic" / e.segmentation; }
  PanopticSegmentMap load_segments(const ImageEntry& e) const;

  void add_category(int id, const std::string& name, bool isthing);
  void add(ImageEntry entry);

 private:
  std::filesystem::path root_;
  std::vector<ImageEntry> images_;
  std::map<int, std::pair<std::string, bool>> categories_;  // id -> (name, isthing)
};

struct RelabelSelection {
  std::string image;
  std::vector<std::uint32_t> segments;  // sorted, unique
  std::string annotator;
  std::string ts;  // ISO 8601 UTC
};

// Throws ContractError listing the ids absent from the table.
void validate_selection(const RelabelSelection& sel, const SegmentTable& table);
// Union of the selected segments -> 1, everything else -> 0; H x W.
Tensor selection_to_mask(const PanopticSegmentMap& seg, const RelabelSelection& sel);

// One JSON object per line: {"image", "segments", "annotator", "ts"}.
std::string selection_to_json_line(const RelabelSelection& sel);
RelabelSelection selection_from_json_line(const std::string& line);
std::vector<RelabelSelection> read_selections(const std::filesystem::path& path);
void append_selection(const std::filesystem::path& path, const RelabelSelection& sel);
std::string utc_timestamp();
bool valid_annotator(const std::string& name);

enum class MergeMode {
  kPerAnnotator,  // masks/<annotator>/<id>.png for the latest selection of each pair
  kMajority,      // masks/majority/<id>.png from segments chosen by a strict majority
};

struct ManifestRow {
  std::string image;
  std::string mask;  // relative to the export directory
  std::string annotator;
  std::vector<std::uint32_t> segments;
};

struct ExportResult {
  std::vector<ManifestRow> rows;
  std::vector<std::string> unresolved;  // "image/annotator: reason"
};

// Writes binary PNG masks (0/255) and manifest.csv under out_dir. Later
// selections for the same (image, annotator) replace earlier ones; the
// output is a pure function of the inputs.
ExportResult export_relabeled_dataset(const std::vector<RelabelSelection>& selections, const PanopticIndex& index,
                                      const std::filesystem::path& out_dir, MergeMode mode = MergeMode::kPerAnnotator);

}  // namespace sdg::panoptic
