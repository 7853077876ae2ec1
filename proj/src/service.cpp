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

#include "sdg/service.hpp"

#include <algorithm>
#include <fstream>
#include <httplib.h>
#include <json.hpp>
#include <set>
#include <sstream>

namespace sdg::service {

namespace {

using nlohmann::json;

constexpr const char* kJson = "application/json";

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), kJson);
}

void send_error(httplib::Response& res, int status, const json& errors) {
  send_json(res, status, {{"errors", errors}});
}

std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string content_type(const std::filesystem::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".jpg" || ext == ".jpeg" || ext == ".JPG") return "image/jpeg";
  return "image/png";
}

}  // namespace

AnnotationService::AnnotationService(ServiceConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.selections.empty()) cfg_.selections = cfg_.dataset / "selections.jsonl";
  if (cfg_.export_dir.empty()) cfg_.export_dir = cfg_.dataset / "export";
  for (const char* sub : {"images", "panoptic"}) {
    if (!std::filesystem::is_directory(cfg_.dataset / sub)) {
      throw IoError("dataset lacks " + (cfg_.dataset / sub).string());
    }
  }
  index_ = panoptic::PanopticIndex::load(cfg_.dataset);
  for (const auto& sel : panoptic::read_selections(cfg_.selections)) {
    latest_[sel.image] = sel;
    latest_by_annotator_[{sel.image, sel.annotator}] = sel;
  }
}

const std::map<std::uint32_t, std::size_t>& AnnotationService::pixel_counts(const panoptic::ImageEntry& entry) {
  std::lock_guard lock(counts_mutex_);
  auto it = counts_.find(entry.id);
  if (it == counts_.end()) it = counts_.emplace(entry.id, index_.load_segments(entry).pixel_counts()).first;
  return it->second;
}

void AnnotationService::mount(httplib::Server& server) {
  server.Get("/api/images", [this](const httplib::Request&, httplib::Response& res) {
    json list = json::array();
    std::lock_guard lock(selections_mutex_);
    for (const auto& e : index_.images()) {
      list.push_back({{"id", e.id}, {"width", e.width}, {"height", e.height}, {"done", latest_.count(e.id) > 0}});
    }
    send_json(res, 200, list);
  });

  server.Get(R"(/api/images/([A-Za-z0-9_.\-]+))", [this](const httplib::Request& req, httplib::Response& res) {
    const auto* entry = index_.find(req.matches[1]);
    if (!entry) return send_error(res, 404, {{"image", "unknown image"}});
    const auto path = index_.image_path(*entry);
    res.set_content(read_bytes(path), content_type(path));
  });

  server.Get(R"(/api/images/([A-Za-z0-9_.\-]+)/panoptic)", [this](const httplib::Request& req,
                                                                   httplib::Response& res) {
    const auto* entry = index_.find(req.matches[1]);
    if (!entry) return send_error(res, 404, {{"image", "unknown image"}});
    const auto& counts = pixel_counts(*entry);
    json segments = json::array();
    for (const auto& [id, seg] : entry->segments) {
      const auto c = panoptic::id_to_color(id);
      const auto n = counts.find(id);
      segments.push_back({{"id", id},
                          {"category", seg.category},
                          {"isthing", seg.isthing},
                          {"pixel_count", n == counts.end() ? 0 : n->second},
                          {"color", {c[0], c[1], c[2]}}});
    }
    send_json(res, 200, {{"segments", segments}, {"raster_url", "/api/images/" + entry->id + "/panoptic.png"}});
  });

  server.Get(R"(/api/images/([A-Za-z0-9_.\-]+)/panoptic\.png)", [this](const httplib::Request& req,
                                                                         httplib::Response& res) {
    const auto* entry = index_.find(req.matches[1]);
    if (!entry) return send_error(res, 404, {{"image", "unknown image"}});
    res.set_content(read_bytes(index_.raster_path(*entry)), "image/png");
  });

  server.Get(R"(/api/images/([A-Za-z0-9_.\-]+)/selection)", [this](const httplib::Request& req,
                                                                    httplib::Response& res) {
    const auto* entry = index_.find(req.matches[1]);
    if (!entry) return send_error(res, 404, {{"image", "unknown image"}});
    std::lock_guard lock(selections_mutex_);
    const panoptic::RelabelSelection* sel = nullptr;
    if (req.has_param("annotator")) {
      const auto it = latest_by_annotator_.find({entry->id, req.get_param_value("annotator")});
      if (it != latest_by_annotator_.end()) sel = &it->second;
    } else {
      const auto it = latest_.find(entry->id);
      if (it != latest_.end()) sel = &it->second;
    }
    json body = {{"segments", sel ? sel->segments : std::vector<std::uint32_t>{}}};
    if (sel) {
      body["annotator"] = sel->annotator;
      body["ts"] = sel->ts;
    }
    send_json(res, 200, body);
  });

  server.Post(R"(/api/images/([A-Za-z0-9_.\-]+)/selection)", [this](const httplib::Request& req,
                                                                     httplib::Response& res) {
    const auto* entry = index_.find(req.matches[1]);
    if (!entry) return send_error(res, 404, {{"image", "unknown image"}});
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::parse_error&) {
      return send_error(res, 400, {{"body", "not valid JSON"}});
    }
    if (!body.is_object()) return send_error(res, 400, {{"body", "expected a JSON object"}});
    json errors = json::object();
    for (const auto& [key, value] : body.items()) {
      if (key != "segments" && key != "annotator") errors[key] = "unknown field";
    }
    panoptic::RelabelSelection sel;
    sel.image = entry->id;
    const auto segs = body.find("segments");
    if (segs == body.end()) {
      errors["segments"] = "required";
    } else if (!segs->is_array()) {
      errors["segments"] = "expected an array of segment ids";
    } else {
      std::vector<std::string> unknown;
      for (const auto& v : *segs) {
        if (!v.is_number_unsigned() || v.get<std::uint64_t>() >= (1ULL << 24)) {
          errors["segments"] = "segment ids must be integers in [1, 2^24)";
          break;
        }
        const auto id = v.get<std::uint32_t>();
        if (!entry->segments.count(id)) unknown.push_back(std::to_string(id));
        sel.segments.push_back(id);
      }
      if (!errors.contains("segments") && !unknown.empty()) {
        std::string list;
        for (const auto& u : unknown) list += (list.empty() ? "" : ", ") + u;
        errors["segments"] = "unknown segment ids: " + list;
      }
    }
    const auto ann = body.find("annotator");
    if (ann == body.end()) {
      errors["annotator"] = "required";
    } else if (!ann->is_string() || !panoptic::valid_annotator(ann->get<std::string>())) {
      errors["annotator"] = "expected a name of letters, digits, '_', '-' or '.'";
    } else {
      sel.annotator = ann->get<std::string>();
    }
    if (!errors.empty()) return send_error(res, 400, errors);

    std::sort(sel.segments.begin(), sel.segments.end());
    sel.segments.erase(std::unique(sel.segments.begin(), sel.segments.end()), sel.segments.end());
    sel.ts = panoptic::utc_timestamp();
    std::lock_guard lock(selections_mutex_);
    panoptic::append_selection(cfg_.selections, sel);
    latest_[sel.image] = sel;
    latest_by_annotator_[{sel.image, sel.annotator}] = sel;
    res.status = 204;
  });

  server.Get("/api/export", [this](const httplib::Request& req, httplib::Response& res) {
    const bool majority = req.has_param("mode") && req.get_param_value("mode") == "majority";
    std::vector<panoptic::RelabelSelection> selections;
    {
      std::lock_guard lock(selections_mutex_);
      selections = panoptic::read_selections(cfg_.selections);
    }
    const auto result = panoptic::export_relabeled_dataset(
        selections, index_, cfg_.export_dir, majority ? panoptic::MergeMode::kMajority : panoptic::MergeMode::kPerAnnotator);
    send_json(res, 200,
              {{"ok", result.unresolved.empty()},
               {"rows", result.rows.size()},
               {"unresolved", result.unresolved},
               {"manifest", (cfg_.export_dir / "manifest.csv").string()}});
  });

  server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    send_error(res, 500, {{"server", what}});
  });
}

void serve(const ServiceConfig& cfg, const std::string& host, int port) {
  AnnotationService service(cfg);
  httplib::Server server;
  service.mount(server);
  if (!server.listen(host, port)) throw IoError("cannot listen on " + host + ":" + std::to_string(port));
}

}  // namespace sdg::service
