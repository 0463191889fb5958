#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "roadscan/detection.hpp"
#include "roadscan/fusion.hpp"
#include "roadscan/tta.hpp"

namespace roadscan {

struct Annotation {
  DistressClass cls = DistressClass::D00;
  BoundingBox bbox{0.0, 0.0, 1.0, 1.0};

  friend bool operator==(const Annotation&, const Annotation&) = default;
};

struct GroundTruthRecord {
  ImageMeta meta;
  std::vector<Annotation> annotations;

  const std::string& image_id() const { return meta.image_id; }
};

struct GroundTruthSet {
  std::vector<GroundTruthRecord> records;
  /// Annotations dropped in lenient mode because their class is not one of
  /// the four scored classes.
  std::size_t skipped_annotations = 0;
};

/// Loads ground truth from a CSV file, a per-image XML file, or a directory of
/// either. Records are returned sorted by image id.
///
/// CSV columns: image_id,width,height,class,x_min,y_min,x_max,y_max (header
/// optional; an empty class field declares an image without annotations).
/// XML follows the common <annotation><filename/><size/><object><name/><bndbox/>
/// layout. The country is taken from an explicit <country> element or the
/// "Japan_", "India_" or "Czech_" file-name prefix.
GroundTruthSet load_ground_truth(const std::filesystem::path& path, bool strict);

/// Country inferred from the image id prefix ("Japan_000123.jpg" -> Japan).
std::optional<Country> country_from_image_id(std::string_view image_id);

/// Reads the line-delimited detection interchange file. Every record is
/// validated against `manifest`; the result is keyed by image id with records
/// kept in file order.
DetectionGroups load_detections(const std::filesystem::path& path, const ViewManifest& manifest);
void write_detections(const DetectionGroups& groups, const std::filesystem::path& path);

/// Fused predictions in the same JSON-lines style (adds contributor_count).
void write_predictions(const PredictionGroups& groups, const std::filesystem::path& path);
PredictionGroups load_predictions(const std::filesystem::path& path);

/// Image metadata CSV: image_id,width,height[,country[,latitude,longitude]].
std::map<std::string, ImageMeta> load_image_meta(const std::filesystem::path& path);
std::map<std::string, ImageMeta> image_meta_from(const std::vector<GroundTruthRecord>& records);

struct TrainValSplit {
  std::vector<GroundTruthRecord> train;
  std::vector<GroundTruthRecord> val;
};

/// Size of the validation part: floor(val_fraction * n).
std::size_t validation_size(std::size_t n, double val_fraction);

/// Seeded Fisher-Yates shuffle followed by a cut; identical for identical seeds
/// on every platform.
TrainValSplit split_train_val(std::vector<GroundTruthRecord> records, double val_fraction,
                              std::uint64_t seed);

struct DatasetStats {
  std::array<std::size_t, 3> images_per_country{};
  /// [country][class slot]
  std::array<std::array<std::size_t, 4>, 3> annotations{};

  std::size_t total_images() const;
  std::size_t total_annotations() const;
  std::size_t class_total(DistressClass c) const;
  std::size_t country_annotations(Country c) const;

  friend bool operator==(const DatasetStats&, const DatasetStats&) = default;
};

/// Throws MissingCountry when a record has no country tag.
DatasetStats compute_stats(const std::vector<GroundTruthRecord>& records);

void write_stats_csv(const DatasetStats& stats, const std::filesystem::path& path);

/// Writes one line per image id in `image_ids` (plus any image present only in
/// `predictions`): "<image_id>,<class_index> <x_min> <y_min> <x_max> <y_max> ...",
/// coordinates rounded to integers, predictions by confidence descending.
void export_submission(const PredictionGroups& predictions,
                       const std::vector<std::string>& image_ids,
                       const std::filesystem::path& path);

struct SubmissionEntry {
  DistressClass cls = DistressClass::D00;
  std::array<long, 4> box{};

  friend bool operator==(const SubmissionEntry&, const SubmissionEntry&) = default;
};

std::map<std::string, std::vector<SubmissionEntry>> load_submission(
    const std::filesystem::path& path);

}  // namespace roadscan
