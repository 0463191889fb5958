#include "roadscan/geo_mapping.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "roadscan/error.hpp"
#include "text.hpp"

namespace roadscan {

namespace fs = std::filesystem;

std::size_t RoadSegmentScore::total_detections() const {
  std::size_t n = 0;
  for (auto c : distress_count) n += c;
  return n;
}

BinningResult bin_segments(const std::vector<GeotaggedImage>& images,
                           const PredictionGroups& predictions, double cell_size_deg) {
  if (!(cell_size_deg > 0.0) || !std::isfinite(cell_size_deg)) {
    throw InvalidArgument("cell size must be a positive number of degrees");
  }
  std::vector<const GeotaggedImage*> order;
  order.reserve(images.size());
  for (const auto& img : images) order.push_back(&img);
  std::sort(order.begin(), order.end(),
            [](const auto* a, const auto* b) { return a->image_id < b->image_id; });
  order.erase(std::unique(order.begin(), order.end(),
                          [](const auto* a, const auto* b) { return a->image_id == b->image_id; }),
              order.end());

  struct Cell {
    RoadSegmentScore score;
    double lat_sum = 0.0;
    double lon_sum = 0.0;
  };
  std::map<std::pair<long long, long long>, Cell> cells;
  BinningResult out;

  for (const auto* img : order) {
    if (!img->gps) {
      out.unmapped.push_back(img->image_id);
      continue;
    }
    const auto& p = *img->gps;
    if (!is_valid(p)) throw InvalidArgument("image '" + img->image_id + "' has an invalid GPS position");
    const auto key = std::make_pair(static_cast<long long>(std::floor(p.latitude / cell_size_deg)),
                                    static_cast<long long>(std::floor(p.longitude / cell_size_deg)));
    auto& cell = cells[key];
    cell.score.image_ids.push_back(img->image_id);
    cell.lat_sum += p.latitude;
    cell.lon_sum += p.longitude;

    const auto it = predictions.find(img->image_id);
    if (it == predictions.end()) continue;
    std::vector<double> confs;
    for (const auto& pred : it->second) {
      ++cell.score.distress_count[class_slot(pred.cls)];
      confs.push_back(pred.confidence);
    }
    std::sort(confs.begin(), confs.end(), std::greater<>());
    for (double c : confs) cell.score.severity_sum += c;
  }

  for (auto& [key, cell] : cells) {
    auto& s = cell.score;
    s.segment_id = "cell_" + std::to_string(key.first) + "_" + std::to_string(key.second);
    const auto n = static_cast<double>(s.image_ids.size());
    s.centroid = {cell.lat_sum / n, cell.lon_sum / n};
    s.damage_score = s.severity_sum / std::max(1.0, n);
    out.segments.push_back(std::move(s));
  }
  return out;
}

std::string_view color_bucket(double damage_score, const ColorThresholds& t) {
  if (damage_score > t.red_above) return "red";
  if (damage_score < t.yellow_from) return "green";
  return "yellow";
}

double export_coordinate(double degrees) { return *detail::to_double(detail::fixed(degrees, 6)); }

std::string geojson_string(const std::vector<RoadSegmentScore>& segments, const ColorThresholds& t) {
  nlohmann::ordered_json fc;
  fc["type"] = "FeatureCollection";
  auto& features = fc["features"] = nlohmann::ordered_json::array();
  for (const auto& s : segments) {
    nlohmann::ordered_json f;
    f["type"] = "Feature";
    f["id"] = s.segment_id;
    f["geometry"] = {{"type", "Point"},
                     {"coordinates",
                      {export_coordinate(s.centroid.longitude), export_coordinate(s.centroid.latitude)}}};
    nlohmann::ordered_json props;
    props["segment_id"] = s.segment_id;
    props["n_images"] = s.n_images();
    props["d00"] = s.distress_count[0];
    props["d10"] = s.distress_count[1];
    props["d20"] = s.distress_count[2];
    props["d40"] = s.distress_count[3];
    props["severity_sum"] = s.severity_sum;
    props["damage_score"] = s.damage_score;
    props["color"] = color_bucket(s.damage_score, t);
    props["images"] = s.image_ids;
    f["properties"] = std::move(props);
    features.push_back(std::move(f));
  }
  return fc.dump(2) + "\n";
}

void export_geojson(const std::vector<RoadSegmentScore>& segments, const fs::path& path,
                    const ColorThresholds& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << geojson_string(segments, t);
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

void export_table(const std::vector<RoadSegmentScore>& segments, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "segment_id,lat,lon,n_images,d00,d10,d20,d40,severity_sum,damage_score\n";
  for (const auto& s : segments) {
    out << s.segment_id << ',' << detail::fixed(s.centroid.latitude, 6) << ','
        << detail::fixed(s.centroid.longitude, 6) << ',' << s.n_images();
    for (auto c : s.distress_count) out << ',' << c;
    out << ',' << detail::exact(s.severity_sum) << ',' << detail::exact(s.damage_score) << '\n';
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::vector<SegmentRow> load_table(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<SegmentRow> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 || detail::trim(line).empty()) continue;
    const auto f = detail::split(line, ',');
    const auto ctx = path.string() + ":" + std::to_string(lineno);
    if (f.size() != 10) throw ParseError(ctx + ": expected 10 fields");
    SegmentRow r;
    r.segment_id = std::string(f[0]);
    const auto lat = detail::to_double(f[1]);
    const auto lon = detail::to_double(f[2]);
    const auto n = detail::to_long(f[3]);
    const auto sev = detail::to_double(f[8]);
    const auto dmg = detail::to_double(f[9]);
    if (!lat || !lon || !n || !sev || !dmg) throw ParseError(ctx + ": bad numeric field");
    r.lat = *lat;
    r.lon = *lon;
    r.n_images = static_cast<std::size_t>(*n);
    for (int k = 0; k < 4; ++k) {
      const auto c = detail::to_long(f[4 + k]);
      if (!c) throw ParseError(ctx + ": bad count field");
      r.distress_count[static_cast<std::size_t>(k)] = static_cast<std::size_t>(*c);
    }
    r.severity_sum = *sev;
    r.damage_score = *dmg;
    rows.push_back(std::move(r));
  }
  return rows;
}

void export_html(const std::vector<RoadSegmentScore>& segments, const fs::path& path,
                 const ColorThresholds& t) {
  std::string geojson = geojson_string(segments, t);
  for (std::size_t pos = 0; (pos = geojson.find("</", pos)) != std::string::npos; pos += 3) {
    geojson.replace(pos, 2, "<\\/");
  }
  GeoPoint center{0.0, 0.0};
  for (const auto& s : segments) {
    center.latitude += s.centroid.latitude / static_cast<double>(segments.size());
    center.longitude += s.centroid.longitude / static_cast<double>(segments.size());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << R"(<!DOCTYPE html>
<html>
<head>
<meta charset="utf-8">
<title>Road distress map</title>
<link rel="stylesheet" href="https://unpkg.com/leaflet@1.9.4/dist/leaflet.css">
<script src="https://unpkg.com/leaflet@1.9.4/dist/leaflet.js"></script>
<style>html, body, #map { height: 100%; margin: 0; }</style>
</head>
<body>
<div id="map"></div>
<script>
const segments = )"
      << geojson << R"(;
const map = L.map('map').setView([)"
      << detail::fixed(center.latitude, 6) << ", " << detail::fixed(center.longitude, 6)
      << R"(], 17);
L.tileLayer('https://{s}.tile.openstreetmap.org/{z}/{x}/{y}.png', {
  maxZoom: 19, attribution: '&copy; OpenStreetMap contributors'
}).addTo(map);
L.geoJSON(segments, {
  pointToLayer: (feature, latlng) => L.circleMarker(latlng, {
    radius: 8, color: feature.properties.color, fillOpacity: 0.7
  }),
  onEachFeature: (feature, layer) => {
    const p = feature.properties;
    layer.bindPopup(`${p.segment_id}<br>score ${p.damage_score.toFixed(3)}<br>` +
                    `images ${p.n_images}<br>D00 ${p.d00} D10 ${p.d10} D20 ${p.d20} D40 ${p.d40}`);
  }
}).addTo(map);
</script>
</body>
</html>
)";
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace roadscan
