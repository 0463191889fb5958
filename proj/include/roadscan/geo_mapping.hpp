#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "roadscan/detection.hpp"
#include "roadscan/fusion.hpp"

namespace roadscan {

/// Reads GPSLatitude/GPSLongitude (with their N/S, E/W refs) from the EXIF
/// block of a JPEG. Returns nullopt when the image carries no GPS position.
/// Throws MalformedExif when the container or the GPS tags cannot be decoded.
std::optional<GeoPoint> extract_gps(std::span<const std::uint8_t> jpeg);
std::optional<GeoPoint> extract_gps(const std::filesystem::path& jpeg_file);

/// Degrees + minutes/60 + seconds/3600, negated for the S and W hemispheres.
double dms_to_degrees(double degrees, double minutes, double seconds, char ref);

struct GeotaggedImage {
  std::string image_id;
  std::optional<GeoPoint> gps;
};

struct RoadSegmentScore {
  std::string segment_id;
  GeoPoint centroid;
  std::vector<std::string> image_ids;
  std::array<std::size_t, 4> distress_count{};
  double severity_sum = 0.0;
  double damage_score = 0.0;

  std::size_t n_images() const { return image_ids.size(); }
  std::size_t total_detections() const;
};

struct BinningResult {
  /// Sorted by grid cell (latitude index, then longitude index).
  std::vector<RoadSegmentScore> segments;
  /// Images without a GPS position, sorted.
  std::vector<std::string> unmapped;
};

inline constexpr double kDefaultCellSizeDeg = 0.00025;

/// Groups geotagged images into a lat/lon grid (floor division by
/// `cell_size_deg`) and scores each cell: severity_sum is the sum of member
/// prediction confidences, damage_score = severity_sum / max(1, images).
BinningResult bin_segments(const std::vector<GeotaggedImage>& images,
                           const PredictionGroups& predictions,
                           double cell_size_deg = kDefaultCellSizeDeg);

struct ColorThresholds {
  double yellow_from = 0.25;
  double red_above = 0.75;
};

/// "green" below yellow_from, "red" above red_above, "yellow" otherwise.
std::string_view color_bucket(double damage_score, const ColorThresholds& t = {});

/// Coordinates as written to every export (6 decimals).
double export_coordinate(double degrees);

std::string geojson_string(const std::vector<RoadSegmentScore>& segments,
                           const ColorThresholds& t = {});
void export_geojson(const std::vector<RoadSegmentScore>& segments,
                    const std::filesystem::path& path, const ColorThresholds& t = {});

/// CSV: segment_id,lat,lon,n_images,d00,d10,d20,d40,severity_sum,damage_score.
void export_table(const std::vector<RoadSegmentScore>& segments, const std::filesystem::path& path);

/// One row of an `export_table` file.
struct SegmentRow {
  std::string segment_id;
  double lat = 0.0;
  double lon = 0.0;
  std::size_t n_images = 0;
  std::array<std::size_t, 4> distress_count{};
  double severity_sum = 0.0;
  double damage_score = 0.0;
};

std::vector<SegmentRow> load_table(const std::filesystem::path& path);

/// Self-contained HTML page that draws the GeoJSON over a Leaflet map.
void export_html(const std::vector<RoadSegmentScore>& segments, const std::filesystem::path& path,
                 const ColorThresholds& t = {});

}  // namespace roadscan
