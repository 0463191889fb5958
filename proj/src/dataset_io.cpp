#include "roadscan/dataset_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <json.hpp>

#include "roadscan/error.hpp"
#include "text.hpp"

namespace roadscan {

namespace fs = std::filesystem;
using detail::split;
using detail::to_double;
using detail::to_long;
using detail::trim;

namespace {

std::string where(const fs::path& file, std::size_t line) {
  return file.string() + ":" + std::to_string(line);
}

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return in;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  return out;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

// Builds a ground-truth box, clipped to the image. Any violation is reported
// as a ParseError naming the image.
BoundingBox gt_box(double x0, double y0, double x1, double y1, const ImageMeta& meta,
                   const std::string& context) {
  try {
    BoundingBox b(x0, y0, x1, y1);
    if (!b.is_non_negative()) throw DegenerateBox("negative coordinates");
    return clamp_to_image(b, meta);
  } catch (const DegenerateBox& e) {
    throw ParseError(context + ": invalid box for image '" + meta.image_id + "': " + e.what());
  }
}

void check_dimensions(const ImageMeta& meta, const std::string& context) {
  if (meta.width <= 0 || meta.height <= 0) {
    throw ParseError(context + ": image '" + meta.image_id + "' has non-positive dimensions");
  }
}

struct GtAccumulator {
  std::map<std::string, GroundTruthRecord> records;
  std::size_t skipped = 0;
  bool strict = false;

  // Returns nullopt (and counts a skip) for out-of-scope classes in lenient mode.
  std::optional<DistressClass> resolve_class(std::string_view code, const std::string& context) {
    if (const auto c = parse_distress_class(code)) return c;
    if (strict) {
      throw UnknownClass(context + ": class '" + std::string(code) + "' is not one of D00/D10/D20/D40");
    }
    ++skipped;
    return std::nullopt;
  }
};

void load_gt_csv(const fs::path& path, GtAccumulator& acc) {
  auto in = open_input(path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto f = split(line, ',');
    if (lineno == 1 && f[0] == "image_id") continue;
    const auto ctx = where(path, lineno);
    if (f.size() != 8) throw ParseError(ctx + ": expected 8 fields, got " + std::to_string(f.size()));

    ImageMeta meta;
    meta.image_id = std::string(f[0]);
    if (meta.image_id.empty()) throw ParseError(ctx + ": empty image_id");
    const auto w = to_long(f[1]);
    const auto h = to_long(f[2]);
    if (!w || !h) throw ParseError(ctx + ": bad dimensions for image '" + meta.image_id + "'");
    meta.width = static_cast<int>(*w);
    meta.height = static_cast<int>(*h);
    check_dimensions(meta, ctx);
    meta.country = country_from_image_id(meta.image_id);

    auto [it, inserted] = acc.records.try_emplace(meta.image_id);
    auto& rec = it->second;
    if (inserted) {
      rec.meta = meta;
    } else if (rec.meta.width != meta.width || rec.meta.height != meta.height) {
      throw ParseError(ctx + ": inconsistent dimensions for image '" + meta.image_id + "'");
    }

    if (f[3].empty()) continue;  // image without annotations
    const auto cls = acc.resolve_class(f[3], ctx);
    if (!cls) continue;
    std::array<double, 4> c{};
    for (int k = 0; k < 4; ++k) {
      const auto v = to_double(f[4 + k]);
      if (!v) throw ParseError(ctx + ": bad coordinate for image '" + meta.image_id + "'");
      c[k] = *v;
    }
    rec.annotations.push_back({*cls, gt_box(c[0], c[1], c[2], c[3], rec.meta, ctx)});
  }
}

void load_gt_xml(const fs::path& path, GtAccumulator& acc) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_xml(path.string(), tree);
  } catch (const pt::xml_parser_error& e) {
    throw ParseError(path.string() + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  const auto root = tree.get_child_optional("annotation");
  if (!root) throw ParseError(path.string() + ": missing <annotation> element");

  ImageMeta meta;
  meta.image_id = std::string(trim(root->get<std::string>("filename", "")));
  if (meta.image_id.empty()) meta.image_id = path.stem().string() + ".jpg";
  const auto ctx = path.string() + " <annotation filename='" + meta.image_id + "'>";
  try {
    meta.width = root->get<int>("size.width");
    meta.height = root->get<int>("size.height");
  } catch (const pt::ptree_error& e) {
    throw ParseError(ctx + ": bad <size>: " + e.what());
  }
  check_dimensions(meta, ctx);
  if (const auto country = root->get_optional<std::string>("country")) {
    meta.country = parse_country(trim(*country));
    if (!meta.country) throw ParseError(ctx + ": unknown country '" + *country + "'");
  } else {
    meta.country = country_from_image_id(meta.image_id);
  }

  if (acc.records.count(meta.image_id)) {
    throw ParseError(ctx + ": duplicate annotation record for image '" + meta.image_id + "'");
  }
  GroundTruthRecord rec;
  rec.meta = meta;
  std::size_t index = 0;
  for (const auto& [tag, obj] : *root) {
    if (tag != "object") continue;
    const auto octx = ctx + " <object #" + std::to_string(index++) + ">";
    const auto name = std::string(trim(obj.get<std::string>("name", "")));
    const auto cls = acc.resolve_class(name, octx);
    if (!cls) continue;
    double c[4];
    try {
      c[0] = obj.get<double>("bndbox.xmin");
      c[1] = obj.get<double>("bndbox.ymin");
      c[2] = obj.get<double>("bndbox.xmax");
      c[3] = obj.get<double>("bndbox.ymax");
    } catch (const pt::ptree_error& e) {
      throw ParseError(octx + ": bad <bndbox> for image '" + meta.image_id + "': " + e.what());
    }
    rec.annotations.push_back({*cls, gt_box(c[0], c[1], c[2], c[3], meta, octx)});
  }
  acc.records.emplace(meta.image_id, std::move(rec));
}

void load_gt_file(const fs::path& path, GtAccumulator& acc) {
  const auto ext = lower(path.extension().string());
  if (ext == ".xml") {
    load_gt_xml(path, acc);
  } else if (ext == ".csv") {
    load_gt_csv(path, acc);
  } else {
    throw ParseError(path.string() + ": unsupported annotation format (expected .xml or .csv)");
  }
}

}  // namespace

std::optional<Country> country_from_image_id(std::string_view image_id) {
  const auto pos = image_id.find('_');
  if (pos == std::string_view::npos) return std::nullopt;
  return parse_country(image_id.substr(0, pos));
}

GroundTruthSet load_ground_truth(const fs::path& path, bool strict) {
  GtAccumulator acc;
  acc.strict = strict;
  std::error_code ec;
  if (fs::is_directory(path, ec)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(path)) {
      if (!entry.is_regular_file()) continue;
      const auto ext = lower(entry.path().extension().string());
      if (ext == ".xml" || ext == ".csv") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) load_gt_file(f, acc);
  } else if (fs::exists(path, ec)) {
    load_gt_file(path, acc);
  } else {
    throw IoError("annotation path '" + path.string() + "' does not exist");
  }
  GroundTruthSet out;
  out.skipped_annotations = acc.skipped;
  out.records.reserve(acc.records.size());
  for (auto& [id, rec] : acc.records) out.records.push_back(std::move(rec));
  return out;
}

DetectionGroups load_detections(const fs::path& path, const ViewManifest& manifest) {
  static const std::array<std::string_view, 6> kFields = {"image_id", "model_id", "view_id",
                                                          "class", "confidence", "bbox"};
  auto in = open_input(path);
  DetectionGroups groups;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto ctx = where(path, lineno);
    nlohmann::ordered_json rec;
    try {
      rec = nlohmann::ordered_json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(ctx + ": " + e.what());
    }
    if (!rec.is_object() || rec.size() != kFields.size()) {
      throw ParseError(ctx + ": expected an object with fields image_id, model_id, view_id, class, "
                             "confidence, bbox");
    }
    std::size_t k = 0;
    for (const auto& item : rec.items()) {
      if (item.key() != kFields[k++]) {
        throw ParseError(ctx + ": field '" + item.key() + "' out of order or unexpected");
      }
    }

    Detection d;
    std::string view_name;
    std::string class_code;
    std::array<double, 4> c{};
    try {
      d.image_id = rec["image_id"].get<std::string>();
      d.model_id = rec["model_id"].get<std::string>();
      view_name = rec["view_id"].get<std::string>();
      class_code = rec["class"].get<std::string>();
      d.confidence = rec["confidence"].get<double>();
      const auto& b = rec["bbox"];
      if (!b.is_array() || b.size() != 4) throw ParseError(ctx + ": bbox must have four numbers");
      for (int i = 0; i < 4; ++i) c[i] = b[i].get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(ctx + ": " + e.what());
    }
    if (d.image_id.empty()) throw ParseError(ctx + ": empty image_id");

    const auto view = parse_view_id(view_name);
    if (!view) throw UnknownView(ctx + ": unknown view_id '" + view_name + "'");
    if (!manifest.contains(*view)) {
      throw UnknownView(ctx + ": view '" + view_name + "' is not declared in the manifest");
    }
    d.view_id = *view;
    const auto cls = parse_distress_class(class_code);
    if (!cls) throw ParseError(ctx + ": unknown class '" + class_code + "'");
    d.cls = *cls;
    check_confidence(d.confidence, ctx);
    try {
      d.bbox = BoundingBox(c[0], c[1], c[2], c[3]);
    } catch (const DegenerateBox& e) {
      throw ParseError(ctx + ": " + e.what());
    }
    if (!d.bbox.is_non_negative()) throw ParseError(ctx + ": negative box coordinates");
    groups[d.image_id].push_back(std::move(d));
  }
  return groups;
}

void write_detections(const DetectionGroups& groups, const fs::path& path) {
  auto out = open_output(path);
  for (const auto& [id, dets] : groups) {
    for (const auto& d : dets) {
      nlohmann::ordered_json rec;
      rec["image_id"] = d.image_id;
      rec["model_id"] = d.model_id;
      rec["view_id"] = to_string(d.view_id);
      rec["class"] = to_string(d.cls);
      rec["confidence"] = d.confidence;
      const auto c = d.bbox.corners();
      rec["bbox"] = {c[0], c[1], c[2], c[3]};
      out << rec.dump() << '\n';
    }
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

void write_predictions(const PredictionGroups& groups, const fs::path& path) {
  auto out = open_output(path);
  for (const auto& [id, preds] : groups) {
    for (const auto& p : preds) {
      nlohmann::ordered_json rec;
      rec["image_id"] = p.image_id;
      rec["class"] = to_string(p.cls);
      rec["confidence"] = p.confidence;
      const auto c = p.bbox.corners();
      rec["bbox"] = {c[0], c[1], c[2], c[3]};
      rec["contributor_count"] = p.contributor_count;
      out << rec.dump() << '\n';
    }
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

PredictionGroups load_predictions(const fs::path& path) {
  auto in = open_input(path);
  PredictionGroups groups;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto ctx = where(path, lineno);
    try {
      const auto rec = nlohmann::json::parse(line);
      FusedPrediction p;
      p.image_id = rec.at("image_id").get<std::string>();
      const auto code = rec.at("class").get<std::string>();
      const auto cls = parse_distress_class(code);
      if (!cls) throw ParseError(ctx + ": unknown class '" + code + "'");
      p.cls = *cls;
      p.confidence = rec.at("confidence").get<double>();
      check_confidence(p.confidence, ctx);
      const auto& b = rec.at("bbox");
      if (!b.is_array() || b.size() != 4) throw ParseError(ctx + ": bbox must have four numbers");
      p.bbox = BoundingBox(b[0].get<double>(), b[1].get<double>(), b[2].get<double>(),
                           b[3].get<double>());
      p.contributor_count = rec.value("contributor_count", 1);
      if (p.contributor_count < 1) throw ParseError(ctx + ": contributor_count must be >= 1");
      groups[p.image_id].push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(ctx + ": " + e.what());
    } catch (const DegenerateBox& e) {
      throw ParseError(ctx + ": " + e.what());
    }
  }
  return groups;
}

std::map<std::string, ImageMeta> load_image_meta(const fs::path& path) {
  auto in = open_input(path);
  std::map<std::string, ImageMeta> metas;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto f = split(line, ',');
    if (lineno == 1 && f[0] == "image_id") continue;
    const auto ctx = where(path, lineno);
    if (f.size() < 3 || f.size() > 6 || f.size() == 5) {
      throw ParseError(ctx + ": expected image_id,width,height[,country[,latitude,longitude]]");
    }
    ImageMeta m;
    m.image_id = std::string(f[0]);
    const auto w = to_long(f[1]);
    const auto h = to_long(f[2]);
    if (m.image_id.empty() || !w || !h) throw ParseError(ctx + ": bad image record");
    m.width = static_cast<int>(*w);
    m.height = static_cast<int>(*h);
    check_dimensions(m, ctx);
    if (f.size() >= 4 && !f[3].empty()) {
      m.country = parse_country(f[3]);
      if (!m.country) throw ParseError(ctx + ": unknown country '" + std::string(f[3]) + "'");
    } else {
      m.country = country_from_image_id(m.image_id);
    }
    if (f.size() == 6 && !(f[4].empty() && f[5].empty())) {
      const auto lat = to_double(f[4]);
      const auto lon = to_double(f[5]);
      if (!lat || !lon || !is_valid(GeoPoint{*lat, *lon})) {
        throw ParseError(ctx + ": bad GPS coordinates");
      }
      m.gps = GeoPoint{*lat, *lon};
    }
    if (!metas.emplace(m.image_id, m).second) {
      throw ParseError(ctx + ": duplicate image '" + m.image_id + "'");
    }
  }
  return metas;
}

std::map<std::string, ImageMeta> image_meta_from(const std::vector<GroundTruthRecord>& records) {
  std::map<std::string, ImageMeta> out;
  for (const auto& r : records) out.emplace(r.image_id(), r.meta);
  return out;
}

std::size_t validation_size(std::size_t n, double val_fraction) {
  // The epsilon keeps exact products such as 0.29 * 100 from flooring to 28.
  return static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(n) + 1e-9));
}

TrainValSplit split_train_val(std::vector<GroundTruthRecord> records, double val_fraction,
                              std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw InvalidArgument("val_fraction must lie strictly between 0 and 1");
  }
  std::sort(records.begin(), records.end(),
            [](const auto& a, const auto& b) { return a.image_id() < b.image_id(); });
  // Fisher-Yates with rejection sampling; std::shuffle and the standard
  // distributions are not specified bit-for-bit across library vendors.
  std::mt19937_64 rng(seed);
  const auto bounded = [&rng](std::uint64_t n) {
    const std::uint64_t limit = (0 - n) % n;
    while (true) {
      const auto r = rng();
      if (r >= limit) return r % n;
    }
  };
  for (std::size_t i = records.size(); i > 1; --i) {
    std::swap(records[i - 1], records[bounded(i)]);
  }
  const auto n_val = validation_size(records.size(), val_fraction);
  TrainValSplit out;
  out.val.assign(std::make_move_iterator(records.begin()),
                 std::make_move_iterator(records.begin() + static_cast<std::ptrdiff_t>(n_val)));
  out.train.assign(std::make_move_iterator(records.begin() + static_cast<std::ptrdiff_t>(n_val)),
                   std::make_move_iterator(records.end()));
  const auto by_id = [](const auto& a, const auto& b) { return a.image_id() < b.image_id(); };
  std::sort(out.train.begin(), out.train.end(), by_id);
  std::sort(out.val.begin(), out.val.end(), by_id);
  return out;
}

std::size_t DatasetStats::total_images() const {
  std::size_t n = 0;
  for (auto v : images_per_country) n += v;
  return n;
}

std::size_t DatasetStats::total_annotations() const {
  std::size_t n = 0;
  for (const auto& row : annotations) {
    for (auto v : row) n += v;
  }
  return n;
}

std::size_t DatasetStats::class_total(DistressClass c) const {
  std::size_t n = 0;
  for (const auto& row : annotations) n += row[class_slot(c)];
  return n;
}

std::size_t DatasetStats::country_annotations(Country c) const {
  std::size_t n = 0;
  for (auto v : annotations[static_cast<std::size_t>(c)]) n += v;
  return n;
}

DatasetStats compute_stats(const std::vector<GroundTruthRecord>& records) {
  DatasetStats s;
  for (const auto& r : records) {
    if (!r.meta.country) {
      throw MissingCountry("image '" + r.image_id() + "' has no country tag");
    }
    const auto c = static_cast<std::size_t>(*r.meta.country);
    ++s.images_per_country[c];
    for (const auto& a : r.annotations) ++s.annotations[c][class_slot(a.cls)];
  }
  return s;
}

void write_stats_csv(const DatasetStats& stats, const fs::path& path) {
  auto out = open_output(path);
  out << "country,images,D00,D10,D20,D40,annotations\n";
  for (auto c : kAllCountries) {
    const auto i = static_cast<std::size_t>(c);
    out << to_string(c) << ',' << stats.images_per_country[i];
    for (auto v : stats.annotations[i]) out << ',' << v;
    out << ',' << stats.country_annotations(c) << '\n';
  }
  out << "total," << stats.total_images();
  for (auto cls : kAllClasses) out << ',' << stats.class_total(cls);
  out << ',' << stats.total_annotations() << '\n';
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

void export_submission(const PredictionGroups& predictions,
                       const std::vector<std::string>& image_ids, const fs::path& path) {
  std::vector<std::string> ids = image_ids;
  for (const auto& [id, preds] : predictions) ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());

  auto out = open_output(path);
  for (const auto& id : ids) {
    out << id << ',';
    const auto it = predictions.find(id);
    if (it != predictions.end()) {
      auto preds = it->second;
      std::stable_sort(preds.begin(), preds.end(),
                       [](const auto& a, const auto& b) { return a.confidence > b.confidence; });
      bool first = true;
      for (const auto& p : preds) {
        if (!first) out << ' ';
        first = false;
        out << submission_index(p.cls);
        for (double v : p.bbox.corners()) out << ' ' << std::lround(v);
      }
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::map<std::string, std::vector<SubmissionEntry>> load_submission(const fs::path& path) {
  auto in = open_input(path);
  std::map<std::string, std::vector<SubmissionEntry>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto ctx = where(path, lineno);
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ParseError(ctx + ": missing ',' after image name");
    auto& entries = out[std::string(trim(std::string_view(line).substr(0, comma)))];
    std::istringstream fields(line.substr(comma + 1));
    std::vector<long> nums;
    std::string tok;
    while (fields >> tok) {
      const auto v = to_long(tok);
      if (!v) throw ParseError(ctx + ": bad integer '" + tok + "'");
      nums.push_back(*v);
    }
    if (nums.size() % 5 != 0) throw ParseError(ctx + ": prediction groups must have 5 fields");
    for (std::size_t i = 0; i < nums.size(); i += 5) {
      if (nums[i] < 1 || nums[i] > 4) throw ParseError(ctx + ": class index out of range");
      entries.push_back({kAllClasses[static_cast<std::size_t>(nums[i] - 1)],
                         {nums[i + 1], nums[i + 2], nums[i + 3], nums[i + 4]}});
    }
  }
  return out;
}

}  // namespace roadscan
