#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <vector>

#include "roadscan/dataset_io.hpp"
#include "roadscan/fusion.hpp"

namespace roadscan {

struct MatchCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  /// TP / (TP + FP), or 0 when nothing was predicted.
  double precision() const;
  /// TP / (TP + FN), or 0 when there is no ground truth.
  double recall() const;
  /// Harmonic mean of precision and recall; 0 when TP = 0.
  double f1() const;

  MatchCounts& operator+=(const MatchCounts& o);
  friend bool operator==(const MatchCounts&, const MatchCounts&) = default;
};

struct EvaluationReport {
  std::array<MatchCounts, 4> per_class{};
  MatchCounts total;
  double match_iou = 0.5;
};

struct EvaluationOptions {
  double match_iou = 0.5;
  /// Keep only the N most confident predictions per image when set.
  std::optional<std::size_t> max_per_image;
};

/// Greedy confidence-ordered matching, per image and class. A prediction
/// matches the unmatched ground-truth box with the highest IoU, provided the
/// IoU is >= match_iou and the boxes overlap at all.
EvaluationReport match_and_score(const PredictionGroups& predictions,
                                 const std::vector<GroundTruthRecord>& ground_truth,
                                 const EvaluationOptions& opts = {});

/// F1 values laid out like the published tables: rows follow `nms_axis`,
/// columns follow `conf_axis`.
struct GridSearchResult {
  std::vector<double> conf_axis;
  std::vector<double> nms_axis;
  /// Row-major, nms_axis.size() x conf_axis.size().
  std::vector<double> f1;
  std::vector<EvaluationReport> reports;
  std::size_t best_row = 0;
  std::size_t best_col = 0;

  double at(std::size_t row, std::size_t col) const { return f1[row * conf_axis.size() + col]; }
  double best_f1() const { return at(best_row, best_col); }
  double best_conf() const { return conf_axis[best_col]; }
  double best_nms() const { return nms_axis[best_row]; }
};

/// {0.1, 0.15, 0.20, 0.25, 0.30}
std::vector<double> default_conf_axis();
/// {0.999, 0.99, 0.95, 0.90, 0.85, 0.80}
std::vector<double> default_nms_axis();

struct GridSearchInput {
  const DetectionGroups& detections;
  const ViewManifest& views;
  const std::map<std::string, ImageMeta>& metas;
  const std::vector<GroundTruthRecord>& ground_truth;
};

/// Runs fuse_batch followed by match_and_score for every (C, T) cell. The
/// argmax is the first maximal cell in row-major order. Any per-image fusion
/// failure aborts with an Error naming the cell.
GridSearchResult grid_search(const GridSearchInput& input, const std::vector<double>& conf_axis,
                             const std::vector<double>& nms_axis, const FusionConfig& base,
                             const EvaluationOptions& opts = {}, int jobs = 1);

/// CSV with a header row of confidence thresholds, one row per NMS threshold
/// and 4-decimal F1 cells.
std::string grid_csv(const GridSearchResult& result);
/// Fixed-width text rendering of the same matrix.
std::string grid_table(const GridSearchResult& result);
std::string report_csv(const EvaluationReport& report);
std::string report_table(const EvaluationReport& report);

}  // namespace roadscan
