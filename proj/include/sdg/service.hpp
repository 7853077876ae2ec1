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

#include <filesystem>
#include <map>
#include <mutex>
#include <string>

#include "sdg/panoptic.hpp"

namespace httplib {
class Server;
}

namespace sdg::service {

struct ServiceConfig {
  std::filesystem::path dataset;     // images/, panoptic/, panoptic.json
  std::filesystem::path selections;  // defaults to <dataset>/selections.jsonl
  std::filesystem::path export_dir;  // defaults to <dataset>/export
};

// JSON API backing the annotation tool:
//   GET  /api/images                      [{id, width, height, done}]
//   GET  /api/images/{id}                 original image bytes
//   GET  /api/images/{id}/panoptic        {segments: [...], raster_url}
//   GET  /api/images/{id}/panoptic.png    id raster
//   GET  /api/images/{id}/selection       {segments: [int]} (?annotator=)
//   POST /api/images/{id}/selection       {segments, annotator} -> 204
//   GET  /api/export                      runs the relabel export (?mode=majority)
// Selections are appended to the JSONL file through one serialized writer.
class AnnotationService {
 public:
  explicit AnnotationService(ServiceConfig cfg);

  void mount(httplib::Server& server);
  const panoptic::PanopticIndex& index() const { return index_; }
  const ServiceConfig& config() const { return cfg_; }

 private:
  const std::map<std::uint32_t, std::size_t>& pixel_counts(const panoptic::ImageEntry& entry);

  ServiceConfig cfg_;
  panoptic::PanopticIndex index_;
  std::mutex selections_mutex_;
  std::map<std::string, panoptic::RelabelSelection> latest_;  // by image
  std::map<std::pair<std::string, std::string>, panoptic::RelabelSelection> latest_by_annotator_;
  std::mutex counts_mutex_;
  std::map<std::string, std::map<std::uint32_t, std::size_t>> counts_;
};

// Blocks serving on host:port until the process is interrupted.
void serve(const ServiceConfig& cfg, const std::string& host, int port);

}  // namespace sdg::service
