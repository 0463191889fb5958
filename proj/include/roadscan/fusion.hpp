#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "roadscan/detection.hpp"
#include "roadscan/tta.hpp"

namespace roadscan {

enum class FusionMode { Nms, Average };

std::string_view to_string(FusionMode m);
std::optional<FusionMode> parse_fusion_mode(std::string_view name);

struct FusionConfig {
  /// Detections with confidence below this are dropped before pooling.
  double conf_threshold = 0.25;
  /// Same-class boxes with IoU strictly above this are suppressed.
  double nms_threshold = 0.999;
  FusionMode mode = FusionMode::Nms;
  /// When false, boxes of different classes also suppress each other.
  bool class_wise = true;

  /// Throws InvalidArgument unless C is in [0, 1] and T in (0, 1].
  void validate() const;
};

struct FusedPrediction {
  std::string image_id;
  DistressClass cls = DistressClass::D00;
  double confidence = 0.0;
  BoundingBox bbox{0.0, 0.0, 1.0, 1.0};
  /// Raw detections merged into (or suppressed by) this prediction; always >= 1.
  int contributor_count = 1;

  friend bool operator==(const FusedPrediction&, const FusedPrediction&) = default;
};

/// Strict weak ordering used everywhere detections are ranked: confidence
/// descending, then (x_min, y_min, x_max, y_max, model_id) ascending, then
/// class, view and image id so that the order is total.
bool ranks_before(const Detection& a, const Detection& b);

/// Greedy non-maximum suppression over detections from one image.
std::vector<Detection> nms(std::span<const Detection> dets, double threshold, bool class_wise);

/// Fuses every view/model prediction set of one image into final predictions,
/// sorted by confidence descending. Throws UnknownView for undeclared views.
std::vector<FusedPrediction> fuse_image(std::span<const std::vector<Detection>> sets,
                                        const ViewManifest& views, const ImageMeta& meta,
                                        const FusionConfig& cfg);

/// Convenience overload for an already-pooled list.
std::vector<FusedPrediction> fuse_image(std::span<const Detection> dets,
                                        const ViewManifest& views, const ImageMeta& meta,
                                        const FusionConfig& cfg);

using DetectionGroups = std::map<std::string, std::vector<Detection>>;
using PredictionGroups = std::map<std::string, std::vector<FusedPrediction>>;

struct ImageTiming {
  std::string image_id;
  double millis = 0.0;
};

struct TimingReport {
  /// Sorted by image id.
  std::vector<ImageTiming> per_image;
  double max_millis = 0.0;
  double median_millis = 0.0;

  /// Images whose fusion time exceeded `budget_millis`.
  std::vector<std::string> over_budget(double budget_millis) const;
};

struct ImageFailure {
  std::string image_id;
  std::string message;
};

struct BatchResult {
  PredictionGroups predictions;
  TimingReport timing;
  std::vector<ImageFailure> failures;
};

/// Runs `fuse_image` for every image on `jobs` worker threads. Output is
/// identical to a sequential run for any `jobs`. Per-image errors (including
/// a missing entry in `metas`) are collected in `failures`.
BatchResult fuse_batch(const DetectionGroups& groups, const ViewManifest& views,
                       const std::map<std::string, ImageMeta>& metas, const FusionConfig& cfg,
                       int jobs = 1);

}  // namespace roadscan
