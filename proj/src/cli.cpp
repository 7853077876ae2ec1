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

#include "sdg/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>

#include "sdg/config.hpp"
#include "sdg/data.hpp"
#include "sdg/fixtures.hpp"
#include "sdg/ops.hpp"
#include "sdg/panoptic.hpp"
#include "sdg/plot.hpp"
#include "sdg/service.hpp"

namespace sdg::cli {

namespace {

namespace fs = std::filesystem;

GuidanceFlags parse_flags(const std::string& text) {
  if (text.size() != 4 || text.find_first_not_of("01") != std::string::npos) {
    throw ConfigError("--guidance: expected four 0/1 digits, one per level, got \"" + text + "\"");
  }
  GuidanceFlags flags{};
  for (std::size_t i = 0; i < 4; ++i) flags[i] = text[i] == '1';
  return flags;
}

RunConfig config_or_default(const std::string& path) {
  if (path.empty()) {
    RunConfig cfg;
    cfg.model.backbone.image_size = cfg.train.image_size;
    return cfg;
  }
  return load_run_config(path);
}

void require_dir(const fs::path& p, const std::string& what) {
  if (p.empty()) throw ConfigError(what + ": path not set");
  if (!fs::is_directory(p)) throw ConfigError(what + ": no such directory " + p.string());
}

std::vector<fs::path> image_files(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string ext = e.path().extension().string();
    if (e.is_regular_file() && (ext == ".png" || ext == ".jpg" || ext == ".jpeg")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

// ---- train -----------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> max_steps;
  std::string guidance;
  bool resume = false;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  if (a.config.empty()) throw ConfigError("train: --config is required");
  RunConfig cfg = load_run_config(a.config);
  if (!a.out.empty()) cfg.data.output = a.out;
  if (a.seed) cfg.seed = cfg.train.seed = *a.seed;
  if (a.max_steps) cfg.train.max_steps = *a.max_steps;
  if (!a.guidance.empty()) cfg.model.guidance = parse_flags(a.guidance);
  // Every input is checked before any compute starts.
  if (cfg.train.pretrain_epochs > 0) require_dir(cfg.data.pretrain, "data.pretrain");
  if (cfg.train.finetune_epochs > 0) require_dir(cfg.data.finetune, "data.finetune");
  if (!cfg.data.validation.empty()) require_dir(cfg.data.validation, "data.validation");
  if (cfg.train.pretrain_epochs + cfg.train.finetune_epochs == 0) throw ConfigError("train: no epochs scheduled");

  std::vector<data::SampleRecord> pre, fine, val;
  if (cfg.train.pretrain_epochs > 0) pre = data::list_dataset(cfg.data.pretrain, "pretrain");
  if (cfg.train.finetune_epochs > 0) fine = data::list_dataset(cfg.data.finetune, "finetune");
  if (!cfg.data.validation.empty()) val = data::list_dataset(cfg.data.validation, "validation");

  std::vector<std::string> captions;
  for (const auto* set : {&pre, &fine}) {
    for (const auto& r : *set) {
      if (r.caption) captions.push_back(*r.caption);
    }
  }
  const Vocabulary vocab = Vocabulary::build(captions, cfg.vocab_max);
  const fs::path out_dir = cfg.data.output;
  fs::create_directories(out_dir / "checkpoints");
  vocab.save(out_dir / "checkpoints" / "vocab.txt");
  {
    std::ofstream os(out_dir / "config.json", std::ios::trunc);
    os << dump_run_config(cfg) << '\n';
  }

  SdgSodModel model(cfg.model, vocab, cfg.seed);
  const std::size_t size = cfg.train.image_size;
  const std::size_t max_len = cfg.model.caption.max_len;
  ScheduleInputs inputs{load_samples(pre, size, vocab, max_len), load_samples(fine, size, vocab, max_len),
                        load_samples(val, size, vocab, max_len)};
  const std::string hash = config_hash(cfg);
  const ScheduleResult r = run_schedule(model, cfg.train, inputs, out_dir, hash, a.resume);
  out << "trained " << r.epochs << " epochs, " << r.steps << " steps; val_mae " << r.last_val_mae << "\n";
  out << "final checkpoint: " << r.final_checkpoint.string() << "\n";
  return kExitOk;
}

// ---- eval ------------------------------------------------------------------

struct EvalArgs {
  std::string config, pred, gt, out;
  bool adaptive_f = false, pooled = false;
  std::optional<std::size_t> workers;
};

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  RunConfig cfg = config_or_default(a.config);
  if (a.adaptive_f) cfg.metrics.adaptive_f = true;
  if (a.pooled) cfg.metrics.pooled_curves = true;
  if (a.workers) cfg.metrics.workers = *a.workers;
  cfg.metrics.validate();
  require_dir(a.pred, "--pred");
  require_dir(a.gt, "--gt");
  const auto result = metrics::evaluate_dataset(a.pred, a.gt, cfg.metrics);
  metrics::write_report(result.report, a.out);
  out << "evaluated " << result.evaluated.size() << " pairs; mae " << result.report.mae << ", mean_f "
      << result.report.mean_f << ", max_f " << result.report.max_f << ", s " << result.report.s_measure.score
      << ", e " << result.report.e_measure << "\n";
  for (const auto& s : result.skipped) err << "skipped " << s << "\n";
  return result.skipped.empty() ? kExitOk : kExitRuntime;
}

// ---- predict ---------------------------------------------------------------

struct PredictArgs {
  std::string config, checkpoint, images, out, guidance;
  bool overlays = true;
};

io::Image8 overlay(const io::Image8& base, const Tensor& map) {
  NoGradGuard no_grad;
  const Tensor up = ops::bilinear_resize(ops::reshape(map, {1, map.dim(0), map.dim(1)}), base.height, base.width);
  double peak = 0;
  for (double v : up.data()) peak = std::max(peak, v);
  io::Image8 img = base;
  for (std::size_t i = 0; i < base.height * base.width; ++i) {
    const double a = peak > 0 ? up[i] / peak : 0.0;
    const std::array<double, 3> heat{255.0, 255.0 * std::max(0.0, 2 * a - 1), 0.0};
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = (1 - 0.6 * a) * base.pixels[i * 3 + c] + 0.6 * a * heat[c];
      img.pixels[i * 3 + c] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
    }
  }
  return img;
}

int cmd_predict(const PredictArgs& a, std::ostream& out) {
  if (a.checkpoint.empty()) throw ConfigError("predict: --checkpoint is required");
  const fs::path stem = a.checkpoint;
  // Without --config, use the config that train saved beside checkpoints/.
  const fs::path saved = stem.parent_path().parent_path() / "config.json";
  RunConfig cfg = config_or_default(a.config.empty() && fs::exists(saved) ? saved.string() : a.config);
  if (!a.guidance.empty()) cfg.model.guidance = parse_flags(a.guidance);
  require_dir(a.images, "--images");
  const fs::path vocab_path = stem.parent_path() / "vocab.txt";
  if (!fs::exists(stem.string() + ".sdgt")) throw ConfigError("predict: no checkpoint " + stem.string() + ".sdgt");
  const Vocabulary vocab = Vocabulary::load(vocab_path);
  SdgSodModel model(cfg.model, vocab, cfg.seed);
  load_checkpoint(stem, model, nullptr);

  const fs::path out_dir = a.out;
  fs::create_directories(out_dir);
  std::ofstream captions(out_dir / "captions.tsv", std::ios::trunc);
  const std::size_t size = cfg.train.image_size;
  const bool guided = std::any_of(cfg.model.guidance.begin(), cfg.model.guidance.end(), [](bool f) { return f; });
  std::size_t count = 0;
  for (const auto& file : image_files(a.images)) {
    NoGradGuard no_grad;
    const io::Image8 rgb = io::read_rgb(file);
    const Tensor x = data::image_tensor(rgb, size);
    const Prediction pred = model.predict(x, cfg.model.guidance);
    const Tensor native = ops::bilinear_resize(ops::reshape(pred.saliency, {1, size, size}), rgb.height, rgb.width);
    std::vector<double> values(native.data().begin(), native.data().end());
    io::write_png(out_dir / (file.stem().string() + ".png"), io::gray_from_unit(rgb.height, rgb.width, values));
    if (guided) {
      captions << file.filename().string() << '\t' << vocab.decode(pred.caption.tokens) << '\n';
      if (a.overlays) {
        for (std::size_t k = 0; k < pred.caption.attention_maps.size(); ++k) {
          const std::string word = vocab.token(pred.caption.tokens[k + 1]);
          char name[256];
          std::snprintf(name, sizeof(name), "%s_%02zu_%s.png", file.stem().string().c_str(), k, word.c_str());
          io::write_png(out_dir / "attention" / name, overlay(rgb, pred.caption.attention_maps[k]));
        }
      }
    }
    ++count;
  }
  out << "wrote " << count << " saliency maps to " << out_dir.string() << "\n";
  return kExitOk;
}

// ---- relabel-export --------------------------------------------------------

struct ExportArgs {
  std::string dataset, selections, out;
  bool majority = false;
};

int cmd_export(const ExportArgs& a, std::ostream& out, std::ostream& err) {
  require_dir(a.dataset, "--dataset");
  const fs::path sel_path = a.selections.empty() ? fs::path(a.dataset) / "selections.jsonl" : fs::path(a.selections);
  if (!fs::exists(sel_path)) throw ConfigError("--selections: no such file " + sel_path.string());
  const auto index = panoptic::PanopticIndex::load(a.dataset);
  const auto result = panoptic::export_relabeled_dataset(
      panoptic::read_selections(sel_path), index, a.out,
      a.majority ? panoptic::MergeMode::kMajority : panoptic::MergeMode::kPerAnnotator);
  out << "exported " << result.rows.size() << " masks to " << a.out << "\n";
  for (const auto& u : result.unresolved) err << "unresolved " << u << "\n";
  return result.unresolved.empty() ? kExitOk : kExitRuntime;
}

// ---- plot ------------------------------------------------------------------

struct PlotArgs {
  std::vector<std::string> csv, labels;
  std::string out;
};

int cmd_plot(const PlotArgs& a, std::ostream& out) {
  if (a.csv.empty()) throw ConfigError("plot: at least one --csv is required");
  if (!a.labels.empty() && a.labels.size() != a.csv.size()) {
    throw ConfigError("plot: --label must be given once per --csv");
  }
  std::vector<plot::Series> series;
  for (std::size_t i = 0; i < a.csv.size(); ++i) {
    const fs::path p = a.csv[i];
    std::string label = a.labels.empty() ? p.parent_path().filename().string() : a.labels[i];
    if (label.empty()) label = p.stem().string();
    series.push_back({label, metrics::read_curve_csv(p)});
  }
  fs::create_directories(a.out);
  for (auto [kind, name] : {std::pair{plot::CurveKind::kPrecisionRecall, "pr_curve.svg"},
                            std::pair{plot::CurveKind::kFMeasure, "f_curve.svg"}}) {
    std::ofstream os(fs::path(a.out) / name, std::ios::trunc);
    if (!os) throw IoError("cannot write " + (fs::path(a.out) / name).string());
    os << plot::render_svg(series, kind);
  }
  out << "wrote pr_curve.svg and f_curve.svg to " << a.out << "\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"SDG-SOD: semantic-guided salient object detection toolkit", "sdgsod"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train the saliency model from a run config");
  t->add_option("--config", train.config, "Run config (JSON)")->required();
  t->add_option("--out", train.out, "Output directory (overrides data.output)");
  t->add_option("--seed", train.seed, "Seed override");
  t->add_option("--max-steps", train.max_steps, "Stop after this many optimizer steps");
  t->add_option("--guidance", train.guidance, "Per-level guidance flags, e.g. 1111");
  t->add_flag("--resume", train.resume, "Continue from the newest epoch checkpoint");

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Evaluate saliency maps against ground truth");
  e->add_option("--config", eval.config, "Run config supplying the metrics section");
  e->add_option("--pred", eval.pred, "Directory of predicted PNG maps")->required();
  e->add_option("--gt", eval.gt, "Directory of ground-truth PNG masks")->required();
  e->add_option("--out", eval.out, "Report directory")->required();
  e->add_flag("--adaptive-f", eval.adaptive_f, "Also report F at the adaptive threshold");
  e->add_flag("--pooled", eval.pooled, "Curves from pooled pixel counts");
  e->add_option("--workers", eval.workers, "Worker threads");

  PredictArgs predict;
  auto* p = app.add_subcommand("predict", "Write saliency maps, captions and attention overlays");
  p->add_option("--config", predict.config, "Run config (default: the config.json saved by train)");
  p->add_option("--checkpoint", predict.checkpoint, "Checkpoint stem, e.g. runs/x/checkpoints/final")->required();
  p->add_option("--images", predict.images, "Directory of input images")->required();
  p->add_option("--out", predict.out, "Output directory")->required();
  p->add_option("--guidance", predict.guidance, "Per-level guidance flags, e.g. 0000");
  p->add_flag("!--no-overlays", predict.overlays, "Skip attention overlays");

  ExportArgs exp;
  auto* x = app.add_subcommand("relabel-export", "Materialize binary masks from annotator selections");
  x->add_option("--dataset", exp.dataset, "Dataset with panoptic.json")->required();
  x->add_option("--selections", exp.selections, "Selections JSONL (default <dataset>/selections.jsonl)");
  x->add_option("--out", exp.out, "Export directory")->required();
  x->add_flag("--majority", exp.majority, "Merge annotators by strict majority");

  service::ServiceConfig serve_cfg;
  std::string serve_dataset, serve_selections, serve_export, host = "127.0.0.1";
  int port = 8080;
  auto* s = app.add_subcommand("serve", "Run the annotation HTTP API");
  s->add_option("--dataset", serve_dataset, "Dataset with images/, panoptic/, panoptic.json")->required();
  s->add_option("--selections", serve_selections, "Selections JSONL (default <dataset>/selections.jsonl)");
  s->add_option("--export-dir", serve_export, "Export directory (default <dataset>/export)");
  s->add_option("--host", host, "Bind address");
  s->add_option("--port", port, "Port");

  PlotArgs plot_args;
  auto* pl = app.add_subcommand("plot", "Render PR and F-measure curves as SVG");
  pl->add_option("--csv", plot_args.csv, "Curve CSV (repeatable)")->required();
  pl->add_option("--label", plot_args.labels, "Legend label per CSV (repeatable)");
  pl->add_option("--out", plot_args.out, "Output directory")->required();

  std::string fixture_kind, fixture_out;
  std::optional<std::size_t> fixture_count;
  std::optional<std::uint64_t> fixture_seed;
  auto* f = app.add_subcommand("make-fixture", "Generate a deterministic synthetic dataset");
  f->add_option("--kind", fixture_kind, "mini-coco | overfit | eval")
      ->required()
      ->check(CLI::IsMember({"mini-coco", "overfit", "eval"}));
  f->add_option("--out", fixture_out, "Output directory")->required();
  f->add_option("--count", fixture_count, "Number of images");
  f->add_option("--seed", fixture_seed, "Generator seed");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*t) return cmd_train(train, out);
    if (*e) return cmd_eval(eval, out, err);
    if (*p) return cmd_predict(predict, out);
    if (*x) return cmd_export(exp, out, err);
    if (*pl) return cmd_plot(plot_args, out);
    if (*s) {
      serve_cfg.dataset = serve_dataset;
      serve_cfg.selections = serve_selections;
      serve_cfg.export_dir = serve_export;
      require_dir(serve_cfg.dataset, "--dataset");
      out << "serving " << serve_dataset << " on http://" << host << ":" << port << "\n" << std::flush;
      service::serve(serve_cfg, host, port);
      return kExitOk;
    }
    if (*f) {
      if (fixture_kind == "mini-coco") {
        fixtures::make_mini_coco(fixture_out, fixture_count.value_or(30), fixture_seed.value_or(2026));
      } else if (fixture_kind == "overfit") {
        fixtures::make_overfit(fixture_out, fixture_count.value_or(8), fixture_seed.value_or(88));
      } else {
        fixtures::make_eval_set(fixture_out, fixture_count.value_or(20), fixture_seed.value_or(20));
      }
      out << "wrote " << fixture_kind << " fixture to " << fixture_out << "\n";
      return kExitOk;
    }
  } catch (const ConfigError& ex) {
    err << "config error: " << ex.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitRuntime;
  }
  return kExitConfig;
}

}  // namespace sdg::cli
