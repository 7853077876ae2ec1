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

#include "sdg/panoptic.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

namespace sdg::panoptic {

using nlohmann::json;

std::uint32_t color_to_id(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  return static_cast<std::uint32_t>(r) + 256u * g + 65536u * b;
}

std::array<std::uint8_t, 3> id_to_color(std::uint32_t id) {
  if (id >= (1u << 24)) throw ContractError("segment id " + std::to_string(id) + " does not fit in 24 bits");
  return {static_cast<std::uint8_t>(id & 0xFF), static_cast<std::uint8_t>((id >> 8) & 0xFF),
          static_cast<std::uint8_t>((id >> 16) & 0xFF)};
}

std::map<std::uint32_t, std::size_t> PanopticSegmentMap::pixel_counts() const {
  std::map<std::uint32_t, std::size_t> counts;
  for (std::uint32_t id : ids) {
    if (id != kVoid) ++counts[id];
  }
  return counts;
}

PanopticSegmentMap decode_panoptic(const io::Image8& raster, const SegmentTable& table) {
  if (raster.channels != 3) throw FormatError("panoptic raster must have 3 channels");
  PanopticSegmentMap seg;
  seg.height = raster.height;
  seg.width = raster.width;
  seg.table = table;
  seg.ids.resize(raster.height * raster.width);
  for (std::size_t y = 0; y < raster.height; ++y) {
    for (std::size_t x = 0; x < raster.width; ++x) {
      const std::uint32_t id = color_to_id(raster.at(y, x, 0), raster.at(y, x, 1), raster.at(y, x, 2));
      if (id != kVoid && !table.count(id)) {
        throw FormatError("segment id " + std::to_string(id) + " at (y=" + std::to_string(y) +
                          ", x=" + std::to_string(x) + ") is missing from the segment table");
      }
      seg.ids[y * raster.width + x] = id;
    }
  }
  return seg;
}

io::Image8 encode_panoptic(const PanopticSegmentMap& seg) {
  io::Image8 img{seg.height, seg.width, 3, std::vector<std::uint8_t>(seg.ids.size() * 3)};
  for (std::size_t i = 0; i < seg.ids.size(); ++i) {
    const auto c = id_to_color(seg.ids[i]);
    std::copy(c.begin(), c.end(), img.pixels.begin() + static_cast<std::ptrdiff_t>(3 * i));
  }
  return img;
}

PanopticIndex PanopticIndex::load(const std::filesystem::path& dataset_root) {
  const auto path = dataset_root / "panoptic.json";
  std::ifstream is(path);
  if (!is) throw IoError("cannot read " + path.string());
  PanopticIndex index(dataset_root);
  try {
    const json doc = json::parse(is);
    for (const auto& c : doc.at("categories")) {
      index.add_category(c.at("id").get<int>(), c.at("name").get<std::string>(), c.at("isthing").get<int>() != 0);
    }
    std::map<std::string, const json*> annotations;
    for (const auto& a : doc.at("annotations")) annotations[a.at("image_id").get<std::string>()] = &a;
    for (const auto& im : doc.at("images")) {
      ImageEntry e;
      e.id = im.at("id").get<std::string>();
      e.file_name = im.at("file_name").get<std::string>();
      e.width = im.at("width").get<std::size_t>();
      e.height = im.at("height").get<std::size_t>();
      const auto it = annotations.find(e.id);
      if (it == annotations.end()) throw FormatError("no annotation for image " + e.id);
      const json& a = *it->second;
      e.segmentation = a.at("file_name").get<std::string>();
      for (const auto& s : a.at("segments_info")) {
        Segment seg;
        seg.id = s.at("id").get<std::uint32_t>();
        seg.category_id = s.at("category_id").get<int>();
        const auto cat = index.categories_.find(seg.category_id);
        if (cat == index.categories_.end()) {
          throw FormatError("segment " + std::to_string(seg.id) + " of " + e.id + " has unknown category " +
                            std::to_string(seg.category_id));
        }
        if (seg.id == kVoid) throw FormatError("segment id 0 is reserved for void in " + e.id);
        seg.category = cat->second.first;
        seg.isthing = cat->second.second;
        e.segments[seg.id] = seg;
      }
      index.add(std::move(e));
    }
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return index;
}

void PanopticIndex::save(const std::filesystem::path& path) const {
  json doc;
  doc["images"] = json::array();
  doc["annotations"] = json::array();
  doc["categories"] = json::array();
  for (const auto& e : images_) {
    doc["images"].push_back({{"id", e.id}, {"file_name", e.file_name}, {"width", e.width}, {"height", e.height}});
    json info = json::array();
    for (const auto& [id, s] : e.segments) {
      info.push_back({{"id", id}, {"category_id", s.category_id}, {"iscrowd", 0}});
    }
    doc["annotations"].push_back({{"image_id", e.id}, {"file_name", e.segmentation}, {"segments_info", info}});
  }
  for (const auto& [id, c] : categories_) {
    doc["categories"].push_back({{"id", id}, {"name", c.first}, {"isthing", c.second ? 1 : 0}});
  }
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << doc.dump(1) << '\n';
}

const ImageEntry* PanopticIndex::find(const std::string& id) const {
  const auto it = std::lower_bound(images_.begin(), images_.end(), id,
                                   [](const ImageEntry& e, const std::string& key) { return e.id < key; });
  return it != images_.end() && it->id == id ? &*it : nullptr;
}

PanopticSegmentMap PanopticIndex::load_segments(const ImageEntry& e) const {
  const PanopticSegmentMap seg = decode_panoptic(io::read_rgb(raster_path(e)), e.segments);
  if (seg.height != e.height || seg.width != e.width) {
    throw FormatError("panoptic raster of " + e.id + " does not match its recorded extents");
  }
  return seg;
}

void PanopticIndex::add_category(int id, const std::string& name, bool isthing) {
  categories_[id] = {name, isthing};
}

void PanopticIndex::add(ImageEntry entry) {
  const auto it = std::lower_bound(images_.begin(), images_.end(), entry.id,
                                   [](const ImageEntry& e, const std::string& key) { return e.id < key; });
  if (it != images_.end() && it->id == entry.id) throw FormatError("duplicate image id " + entry.id);
  images_.insert(it, std::move(entry));
}

void validate_selection(const RelabelSelection& sel, const SegmentTable& table) {
  std::string missing;
  for (std::uint32_t id : sel.segments) {
    if (!table.count(id)) missing += (missing.empty() ? "" : ", ") + std::to_string(id);
  }
  if (!missing.empty()) throw ContractError("segments not in the table of " + sel.image + ": " + missing);
}

Tensor selection_to_mask(const PanopticSegmentMap& seg, const RelabelSelection& sel) {
  validate_selection(sel, seg.table);
  const std::set<std::uint32_t> chosen(sel.segments.begin(), sel.segments.end());
  std::vector<double> v(seg.ids.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = chosen.count(seg.ids[i]) ? 1.0 : 0.0;
  return Tensor::from({seg.height, seg.width}, std::move(v));
}

std::string selection_to_json_line(const RelabelSelection& sel) {
  const json j = {{"image", sel.image}, {"segments", sel.segments}, {"annotator", sel.annotator}, {"ts", sel.ts}};
  return j.dump();
}

RelabelSelection selection_from_json_line(const std::string& line) {
  try {
    const json j = json::parse(line);
    RelabelSelection sel;
    sel.image = j.at("image").get<std::string>();
    sel.segments = j.at("segments").get<std::vector<std::uint32_t>>();
    sel.annotator = j.at("annotator").get<std::string>();
    sel.ts = j.at("ts").get<std::string>();
    std::sort(sel.segments.begin(), sel.segments.end());
    sel.segments.erase(std::unique(sel.segments.begin(), sel.segments.end()), sel.segments.end());
    return sel;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed selection record: ") + e.what());
  }
}

std::vector<RelabelSelection> read_selections(const std::filesystem::path& path) {
  std::vector<RelabelSelection> out;
  if (!std::filesystem::exists(path)) return out;
  std::ifstream is(path);
  if (!is) throw IoError("cannot read " + path.string());
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(selection_from_json_line(line));
    } catch (const FormatError& e) {
      throw FormatError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

void append_selection(const std::filesystem::path& path, const RelabelSelection& sel) {
  // A single write of the complete line keeps records whole.
  const std::string line = selection_to_json_line(sel) + "\n";
  std::ofstream os(path, std::ios::app | std::ios::binary);
  if (!os) throw IoError("cannot append to " + path.string());
  os.write(line.data(), static_cast<std::streamsize>(line.size()));
  os.flush();
  if (!os) throw IoError("failed appending to " + path.string());
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

bool valid_annotator(const std::string& name) {
  if (name.empty() || name.size() > 64 || name == "." || name == ".." || name == "majority") return false;
  return std::all_of(name.begin(), name.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '_' || c == '-' || c == '.';
  });
}

namespace {

std::string join_ids(const std::vector<std::uint32_t>& ids) {
  std::string s;
  for (std::size_t i = 0; i < ids.size(); ++i) s += (i ? " " : "") + std::to_string(ids[i]);
  return s;
}

void write_mask(const std::filesystem::path& path, const Tensor& mask) {
  io::Image8 img{mask.dim(0), mask.dim(1), 1, std::vector<std::uint8_t>(mask.numel())};
  for (std::size_t i = 0; i < mask.numel(); ++i) img.pixels[i] = mask[i] != 0.0 ? 255 : 0;
  io::write_png(path, img);
}

}  // namespace

ExportResult export_relabeled_dataset(const std::vector<RelabelSelection>& selections, const PanopticIndex& index,
                                      const std::filesystem::path& out_dir, MergeMode mode) {
  // Latest selection per (image, annotator), in file order.
  std::map<std::pair<std::string, std::string>, RelabelSelection> latest;
  for (const auto& s : selections) latest[{s.image, s.annotator}] = s;

  ExportResult result;
  std::map<std::string, std::vector<const RelabelSelection*>> by_image;
  for (const auto& [key, sel] : latest) {
    const std::string tag = key.first + "/" + key.second;
    if (!valid_annotator(sel.annotator)) {
      result.unresolved.push_back(tag + ": invalid annotator name");
      continue;
    }
    const ImageEntry* entry = index.find(sel.image);
    if (!entry) {
      result.unresolved.push_back(tag + ": unknown image");
      continue;
    }
    try {
      validate_selection(sel, entry->segments);
    } catch (const ContractError& e) {
      result.unresolved.push_back(tag + ": " + e.what());
      continue;
    }
    by_image[sel.image].push_back(&sel);
  }

  std::filesystem::create_directories(out_dir);
  for (const auto& [image, sels] : by_image) {
    const ImageEntry& entry = *index.find(image);
    PanopticSegmentMap seg;
    try {
      seg = index.load_segments(entry);
    } catch (const Error& e) {
      result.unresolved.push_back(image + ": " + e.what());
      continue;
    }
    if (mode == MergeMode::kPerAnnotator) {
      for (const RelabelSelection* sel : sels) {
        const std::string rel = "masks/" + sel->annotator + "/" + entry.id + ".png";
        write_mask(out_dir / rel, selection_to_mask(seg, *sel));
        result.rows.push_back({image, rel, sel->annotator, sel->segments});
      }
    } else {
      std::map<std::uint32_t, std::size_t> votes;
      for (const RelabelSelection* sel : sels) {
        for (std::uint32_t id : sel->segments) ++votes[id];
      }
      RelabelSelection merged{image, {}, "majority", ""};
      for (const auto& [id, n] : votes) {
        if (2 * n > sels.size()) merged.segments.push_back(id);
      }
      const std::string rel = "masks/majority/" + entry.id + ".png";
      write_mask(out_dir / rel, selection_to_mask(seg, merged));
      result.rows.push_back({image, rel, "majority", merged.segments});
    }
  }

  std::ofstream os(out_dir / "manifest.csv", std::ios::trunc);
  if (!os) throw IoError("cannot write " + (out_dir / "manifest.csv").string());
  os << "image,mask,annotator,segments\n";
  for (const auto& r : result.rows) os << r.image << ',' << r.mask << ',' << r.annotator << ',' << join_ids(r.segments) << '\n';
  if (!os) throw IoError("failed writing manifest");
  return result;
}

}  // namespace sdg::panoptic
