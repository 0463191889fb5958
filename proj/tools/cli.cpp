#include "cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "roadscan/dataset_io.hpp"
#include "roadscan/error.hpp"
#include "roadscan/evaluation.hpp"
#include "roadscan/fusion.hpp"
#include "roadscan/geo_mapping.hpp"
#include "roadscan/tta.hpp"

namespace roadscan::cli {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

constexpr const char* kLogEnv = "ROADSCAN_LOG_LEVEL";

std::shared_ptr<spdlog::logger> make_logger(std::ostream& err) {
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err, true);
  auto log = std::make_shared<spdlog::logger>("roadscan", sink);
  log->set_pattern("[%l] %v");
  log->set_level(spdlog::level::warn);
  if (const char* lvl = std::getenv(kLogEnv)) log->set_level(spdlog::level::from_str(lvl));
  return log;
}

// Fully resolved options of one invocation. Written next to the outputs so a
// run can be repeated with `roadscan replay`.
struct RunConfig {
  std::string subcommand;
  Json options = Json::object();

  void set(const std::string& name, const Json& value) { options[name] = value; }

  void write(const fs::path& path) const {
    Json doc;
    doc["subcommand"] = subcommand;
    doc["options"] = options;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write run config '" + path.string() + "'");
    out << doc.dump(2) << '\n';
  }

  static std::vector<std::string> to_args(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open run config '" + path.string() + "'");
    Json doc;
    try {
      in >> doc;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ": " + e.what());
    }
    std::vector<std::string> args;
    try {
      args.push_back(doc.at("subcommand").get<std::string>());
      for (const auto& [name, value] : doc.at("options").items()) {
        const auto flag = "--" + name;
        if (value.is_null()) continue;
        if (value.is_boolean()) {
          if (value.get<bool>()) args.push_back(flag);
        } else if (value.is_array()) {
          args.push_back(flag);
          for (const auto& v : value) args.push_back(v.is_string() ? v.get<std::string>() : v.dump());
        } else {
          args.push_back(flag);
          args.push_back(value.is_string() ? value.get<std::string>() : value.dump());
        }
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ": " + e.what());
    }
    return args;
  }
};

template <class T>
Json optional_json(const std::optional<T>& v) {
  return v ? Json(*v) : Json(nullptr);
}

struct StatsArgs {
  std::string annotations;
  bool strict = false;
  std::optional<std::string> out_csv;
};

struct SplitArgs {
  std::string annotations;
  bool strict = false;
  double val_fraction = 0.02;
  std::uint64_t seed = 0;
  std::string out_dir;
};

struct FuseArgs {
  std::string detections;
  std::string manifest;
  std::string meta;
  double conf = 0.25;
  double nms = 0.999;
  std::string mode = "nms";
  bool cross_class = false;
  int jobs = 1;
  std::string out;
  std::optional<std::string> submission;
  std::optional<std::string> timing_out;
  double budget_ms = 10.0;
  bool enforce_budget = false;
};

struct EvaluateArgs {
  std::string gt;
  std::string pred;
  bool strict = false;
  double match_iou = 0.5;
  std::optional<std::size_t> max_per_image;
  std::optional<std::string> out_csv;
};

struct GridArgs {
  std::string gt;
  std::string detections;
  std::string manifest;
  std::optional<std::string> meta;
  bool strict = false;
  std::vector<double> conf_axis = default_conf_axis();
  std::vector<double> nms_axis = default_nms_axis();
  std::string mode = "nms";
  bool cross_class = false;
  double match_iou = 0.5;
  std::optional<std::size_t> max_per_image;
  int jobs = 1;
  std::optional<std::string> out_csv;
};

struct MapArgs {
  std::string images;
  std::string pred;
  double cell_size = kDefaultCellSizeDeg;
  std::string out_geojson;
  std::string out_csv;
  std::optional<std::string> out_html;
  double yellow_from = 0.25;
  double red_above = 0.75;
};

FusionMode mode_from(const std::string& name) {
  const auto m = parse_fusion_mode(name);
  if (!m) throw InvalidArgument("unknown fusion mode '" + name + "'");
  return *m;
}

fs::path run_config_path(const fs::path& output) {
  return output.string() + ".run.json";
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

std::vector<GroundTruthRecord> load_gt(const std::string& path, bool strict, spdlog::logger& log) {
  auto gt = load_ground_truth(path, strict);
  if (gt.skipped_annotations > 0) {
    log.warn("skipped {} annotations with classes outside D00/D10/D20/D40", gt.skipped_annotations);
  }
  return std::move(gt.records);
}

int cmd_stats(const StatsArgs& a, std::ostream& out, spdlog::logger& log) {
  const auto records = load_gt(a.annotations, a.strict, log);
  const auto stats = compute_stats(records);
  out << "country     images      D00      D10      D20      D40\n";
  const auto row = [&](std::string_view name, std::size_t images, auto counts) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-8s %9zu %8zu %8zu %8zu %8zu\n", std::string(name).c_str(),
                  images, counts[0], counts[1], counts[2], counts[3]);
    out << buf;
  };
  for (auto c : kAllCountries) {
    const auto i = static_cast<std::size_t>(c);
    row(to_string(c), stats.images_per_country[i], stats.annotations[i]);
  }
  std::array<std::size_t, 4> totals{};
  for (auto cls : kAllClasses) totals[class_slot(cls)] = stats.class_total(cls);
  row("total", stats.total_images(), totals);
  if (a.out_csv) {
    ensure_parent(*a.out_csv);
    write_stats_csv(stats, *a.out_csv);
    RunConfig rc{"stats"};
    rc.set("annotations", a.annotations);
    rc.set("strict", a.strict);
    rc.set("out-csv", *a.out_csv);
    rc.write(run_config_path(*a.out_csv));
  }
  return kOk;
}

int cmd_split(const SplitArgs& a, std::ostream& out, spdlog::logger& log) {
  auto records = load_gt(a.annotations, a.strict, log);
  const auto split = split_train_val(std::move(records), a.val_fraction, a.seed);
  fs::create_directories(a.out_dir);
  const auto write_ids = [](const fs::path& p, const std::vector<GroundTruthRecord>& recs) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw IoError("cannot write '" + p.string() + "'");
    for (const auto& r : recs) f << r.image_id() << '\n';
  };
  write_ids(fs::path(a.out_dir) / "train.txt", split.train);
  write_ids(fs::path(a.out_dir) / "val.txt", split.val);
  RunConfig rc{"split"};
  rc.set("annotations", a.annotations);
  rc.set("strict", a.strict);
  rc.set("val-fraction", a.val_fraction);
  rc.set("seed", a.seed);
  rc.set("out-dir", a.out_dir);
  rc.write(fs::path(a.out_dir) / "split.run.json");
  out << "train " << split.train.size() << " / val " << split.val.size() << '\n';
  return kOk;
}

int cmd_fuse(const FuseArgs& a, std::ostream& out, spdlog::logger& log) {
  FusionConfig cfg;
  cfg.conf_threshold = a.conf;
  cfg.nms_threshold = a.nms;
  cfg.mode = mode_from(a.mode);
  cfg.class_wise = !a.cross_class;
  cfg.validate();

  const auto manifest = ViewManifest::load(a.manifest);
  const auto metas = load_image_meta(a.meta);
  const auto detections = load_detections(a.detections, manifest);
  log.info("fusing {} images with C={} NMS={} mode={}", detections.size(), cfg.conf_threshold,
           cfg.nms_threshold, to_string(cfg.mode));

  auto batch = fuse_batch(detections, manifest, metas, cfg, a.jobs);
  // Images known from metadata but without any detection get an empty entry.
  for (const auto& [id, m] : metas) {
    if (!detections.count(id)) batch.predictions.try_emplace(id);
  }

  ensure_parent(a.out);
  write_predictions(batch.predictions, a.out);
  if (a.submission) {
    std::vector<std::string> ids;
    for (const auto& [id, m] : metas) ids.push_back(id);
    ensure_parent(*a.submission);
    export_submission(batch.predictions, ids, *a.submission);
  }

  const auto slow = batch.timing.over_budget(a.budget_ms);
  if (a.timing_out) {
    Json t;
    t["budget_ms"] = a.budget_ms;
    t["max_ms"] = batch.timing.max_millis;
    t["median_ms"] = batch.timing.median_millis;
    t["over_budget"] = slow;
    auto& per = t["per_image"] = Json::array();
    for (const auto& it : batch.timing.per_image) per.push_back({{"image_id", it.image_id}, {"ms", it.millis}});
    auto& failed = t["failures"] = Json::array();
    for (const auto& f : batch.failures) failed.push_back({{"image_id", f.image_id}, {"error", f.message}});
    ensure_parent(*a.timing_out);
    std::ofstream tf(*a.timing_out, std::ios::binary);
    if (!tf) throw IoError("cannot write '" + *a.timing_out + "'");
    tf << t.dump(2) << '\n';
  }

  RunConfig rc{"fuse"};
  rc.set("detections", a.detections);
  rc.set("manifest", a.manifest);
  rc.set("meta", a.meta);
  rc.set("conf", a.conf);
  rc.set("nms", a.nms);
  rc.set("mode", a.mode);
  rc.set("cross-class", a.cross_class);
  rc.set("jobs", a.jobs);
  rc.set("out", a.out);
  rc.set("submission", optional_json(a.submission));
  rc.set("timing-out", optional_json(a.timing_out));
  rc.set("budget-ms", a.budget_ms);
  rc.set("enforce-budget", a.enforce_budget);
  rc.write(run_config_path(a.out));

  std::size_t n_pred = 0;
  for (const auto& [id, p] : batch.predictions) n_pred += p.size();
  out << "fused " << batch.predictions.size() << " images, " << n_pred << " predictions\n";
  char buf[160];
  std::snprintf(buf, sizeof buf, "fusion time per image: max %.3f ms, median %.3f ms (budget %.3f ms)\n",
                batch.timing.max_millis, batch.timing.median_millis, a.budget_ms);
  out << buf;
  for (const auto& id : slow) out << "over budget: " << id << '\n';

  if (!batch.failures.empty()) {
    for (const auto& f : batch.failures) log.error("image '{}': {}", f.image_id, f.message);
    return kInputError;
  }
  if (a.enforce_budget && !slow.empty()) return kBudgetExceeded;
  return kOk;
}

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out, spdlog::logger& log) {
  const auto gt = load_gt(a.gt, a.strict, log);
  const auto preds = load_predictions(a.pred);
  EvaluationOptions opts{a.match_iou, a.max_per_image};
  const auto report = match_and_score(preds, gt, opts);
  out << report_table(report);
  if (a.out_csv) {
    ensure_parent(*a.out_csv);
    std::ofstream f(*a.out_csv, std::ios::binary);
    if (!f) throw IoError("cannot write '" + *a.out_csv + "'");
    f << report_csv(report);
    RunConfig rc{"evaluate"};
    rc.set("gt", a.gt);
    rc.set("pred", a.pred);
    rc.set("strict", a.strict);
    rc.set("match-iou", a.match_iou);
    rc.set("max-per-image", optional_json(a.max_per_image));
    rc.set("out-csv", *a.out_csv);
    rc.write(run_config_path(*a.out_csv));
  }
  return kOk;
}

int cmd_grid(const GridArgs& a, std::ostream& out, spdlog::logger& log) {
  const auto gt = load_gt(a.gt, a.strict, log);
  const auto manifest = ViewManifest::load(a.manifest);
  const auto metas = a.meta ? load_image_meta(*a.meta) : image_meta_from(gt);
  const auto detections = load_detections(a.detections, manifest);
  FusionConfig base;
  base.mode = mode_from(a.mode);
  base.class_wise = !a.cross_class;
  const auto result = grid_search({detections, manifest, metas, gt}, a.conf_axis, a.nms_axis, base,
                                  {a.match_iou, a.max_per_image}, a.jobs);
  out << grid_table(result);
  if (a.out_csv) {
    ensure_parent(*a.out_csv);
    std::ofstream f(*a.out_csv, std::ios::binary);
    if (!f) throw IoError("cannot write '" + *a.out_csv + "'");
    f << grid_csv(result);
    RunConfig rc{"grid"};
    rc.set("gt", a.gt);
    rc.set("detections", a.detections);
    rc.set("manifest", a.manifest);
    rc.set("meta", optional_json(a.meta));
    rc.set("strict", a.strict);
    rc.set("conf-axis", a.conf_axis);
    rc.set("nms-axis", a.nms_axis);
    rc.set("mode", a.mode);
    rc.set("cross-class", a.cross_class);
    rc.set("match-iou", a.match_iou);
    rc.set("max-per-image", optional_json(a.max_per_image));
    rc.set("jobs", a.jobs);
    rc.set("out-csv", *a.out_csv);
    rc.write(run_config_path(*a.out_csv));
  }
  return kOk;
}

int cmd_map(const MapArgs& a, std::ostream& out, spdlog::logger& log) {
  if (!fs::is_directory(a.images)) throw IoError("image directory '" + a.images + "' not found");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(a.images)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".jpg" || ext == ".jpeg") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  std::vector<GeotaggedImage> images;
  for (const auto& f : files) images.push_back({f.filename().string(), extract_gps(f)});
  const auto preds = load_predictions(a.pred);
  for (const auto& [id, p] : preds) {
    const bool known = std::any_of(images.begin(), images.end(),
                                   [&](const auto& img) { return img.image_id == id; });
    if (!known) log.warn("predictions for '{}' have no matching image", id);
  }

  const auto binned = bin_segments(images, preds, a.cell_size);
  const ColorThresholds colors{a.yellow_from, a.red_above};
  ensure_parent(a.out_geojson);
  ensure_parent(a.out_csv);
  export_geojson(binned.segments, a.out_geojson, colors);
  export_table(binned.segments, a.out_csv);
  if (a.out_html) {
    ensure_parent(*a.out_html);
    export_html(binned.segments, *a.out_html, colors);
  }
  RunConfig rc{"map"};
  rc.set("images", a.images);
  rc.set("pred", a.pred);
  rc.set("cell-size", a.cell_size);
  rc.set("out-geojson", a.out_geojson);
  rc.set("out-csv", a.out_csv);
  rc.set("out-html", optional_json(a.out_html));
  rc.set("yellow-from", a.yellow_from);
  rc.set("red-above", a.red_above);
  rc.write(run_config_path(a.out_geojson));

  out << "mapped " << images.size() - binned.unmapped.size() << " images into "
      << binned.segments.size() << " segments\n";
  out << "unmapped images (no GPS): " << binned.unmapped.size() << '\n';
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  auto log = make_logger(err);

  CLI::App app{"Road distress detection post-processing: TTA/ensemble fusion, F1 evaluation, "
               "grid search and road-quality mapping", "roadscan"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");
  app.footer(std::string("Log verbosity is read from ") + kLogEnv +
             " (trace, debug, info, warn, error, off).\n"
             "Exit codes: 0 ok, 2 input error, 3 fusion time budget exceeded.");

  StatsArgs stats;
  auto* sc_stats = app.add_subcommand("stats", "Per-country image and annotation counts");
  sc_stats->add_option("--annotations", stats.annotations, "Annotation file or directory")->required();
  sc_stats->add_flag("--strict", stats.strict, "Fail on classes outside D00/D10/D20/D40");
  sc_stats->add_option("--out-csv", stats.out_csv, "Write the counts as CSV");

  SplitArgs split;
  auto* sc_split = app.add_subcommand("split", "Seeded train/validation split of annotated images");
  sc_split->add_option("--annotations", split.annotations, "Annotation file or directory")->required();
  sc_split->add_flag("--strict", split.strict);
  sc_split->add_option("--val-fraction", split.val_fraction)->capture_default_str();
  sc_split->add_option("--seed", split.seed)->capture_default_str();
  sc_split->add_option("--out-dir", split.out_dir, "Receives train.txt and val.txt")->required();

  FuseArgs fuse;
  auto* sc_fuse = app.add_subcommand("fuse", "Fuse TTA views and ensemble members per image");
  sc_fuse->add_option("--detections", fuse.detections, "Detection interchange file")->required();
  sc_fuse->add_option("--manifest", fuse.manifest, "View manifest (JSON)")->required();
  sc_fuse->add_option("--meta", fuse.meta, "Image metadata CSV")->required();
  sc_fuse->add_option("--conf", fuse.conf, "Confidence threshold C")->capture_default_str();
  sc_fuse->add_option("--nms", fuse.nms, "NMS IoU threshold T")->capture_default_str();
  sc_fuse->add_option("--mode", fuse.mode, "nms or average")->capture_default_str()
      ->check(CLI::IsMember({"nms", "average"}));
  sc_fuse->add_flag("--cross-class", fuse.cross_class, "Let boxes of different classes suppress each other");
  sc_fuse->add_option("--jobs", fuse.jobs, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  sc_fuse->add_option("--out", fuse.out, "Fused predictions (JSON lines)")->required();
  sc_fuse->add_option("--submission", fuse.submission, "Also write a submission CSV");
  sc_fuse->add_option("--timing-out", fuse.timing_out, "Write the timing report as JSON");
  sc_fuse->add_option("--budget-ms", fuse.budget_ms, "Per-image fusion time budget")->capture_default_str();
  sc_fuse->add_flag("--enforce-budget", fuse.enforce_budget, "Exit 3 when any image exceeds the budget");

  EvaluateArgs eval;
  auto* sc_eval = app.add_subcommand("evaluate", "Precision/recall/F1 of fused predictions");
  sc_eval->add_option("--gt", eval.gt, "Ground-truth file or directory")->required();
  sc_eval->add_option("--pred", eval.pred, "Fused predictions (JSON lines)")->required();
  sc_eval->add_flag("--strict", eval.strict);
  sc_eval->add_option("--match-iou", eval.match_iou)->capture_default_str();
  sc_eval->add_option("--max-per-image", eval.max_per_image, "Keep only the N most confident predictions");
  sc_eval->add_option("--out-csv", eval.out_csv);

  GridArgs grid;
  auto* sc_grid = app.add_subcommand("grid", "F1 grid over confidence and NMS thresholds");
  sc_grid->add_option("--gt", grid.gt, "Ground-truth file or directory")->required();
  sc_grid->add_option("--detections", grid.detections, "Detection interchange file")->required();
  sc_grid->add_option("--manifest", grid.manifest, "View manifest (JSON)")->required();
  sc_grid->add_option("--meta", grid.meta, "Image metadata CSV (defaults to ground-truth sizes)");
  sc_grid->add_flag("--strict", grid.strict);
  sc_grid->add_option("--conf-axis", grid.conf_axis, "Confidence thresholds (columns)")->capture_default_str();
  sc_grid->add_option("--nms-axis", grid.nms_axis, "NMS thresholds (rows)")->capture_default_str();
  sc_grid->add_option("--mode", grid.mode)->capture_default_str()->check(CLI::IsMember({"nms", "average"}));
  sc_grid->add_flag("--cross-class", grid.cross_class);
  sc_grid->add_option("--match-iou", grid.match_iou)->capture_default_str();
  sc_grid->add_option("--max-per-image", grid.max_per_image);
  sc_grid->add_option("--jobs", grid.jobs)->capture_default_str()->check(CLI::PositiveNumber);
  sc_grid->add_option("--out-csv", grid.out_csv, "F1 matrix as CSV");

  MapArgs map;
  auto* sc_map = app.add_subcommand("map", "Road-segment damage scores from geotagged images");
  sc_map->add_option("--images", map.images, "Directory of geotagged JPEGs")->required();
  sc_map->add_option("--pred", map.pred, "Fused predictions (JSON lines)")->required();
  sc_map->add_option("--cell-size", map.cell_size, "Grid cell size in degrees")->capture_default_str();
  sc_map->add_option("--out-geojson", map.out_geojson)->required();
  sc_map->add_option("--out-csv", map.out_csv)->required();
  sc_map->add_option("--out-html", map.out_html, "Self-contained Leaflet page");
  sc_map->add_option("--yellow-from", map.yellow_from)->capture_default_str();
  sc_map->add_option("--red-above", map.red_above)->capture_default_str();

  std::string replay_file;
  auto* sc_replay = app.add_subcommand("replay", "Re-run an invocation from its .run.json file");
  sc_replay->add_option("config", replay_file, "Run config written next to a previous output")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  }

  try {
    if (sc_stats->parsed()) return cmd_stats(stats, out, *log);
    if (sc_split->parsed()) return cmd_split(split, out, *log);
    if (sc_fuse->parsed()) return cmd_fuse(fuse, out, *log);
    if (sc_eval->parsed()) return cmd_evaluate(eval, out, *log);
    if (sc_grid->parsed()) return cmd_grid(grid, out, *log);
    if (sc_map->parsed()) return cmd_map(map, out, *log);
    if (sc_replay->parsed()) {
      const auto replay_args = RunConfig::to_args(replay_file);
      if (!replay_args.empty() && replay_args.front() == "replay") {
        throw InvalidArgument("a run config cannot replay another replay");
      }
      return run(replay_args, out, err);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  }
  return kInputError;
}

}  // namespace roadscan::cli
