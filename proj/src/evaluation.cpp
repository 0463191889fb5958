#include "roadscan/evaluation.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include "parallel.hpp"
#include "roadscan/error.hpp"
#include "text.hpp"

namespace roadscan {

double MatchCounts::precision() const {
  const auto d = tp + fp;
  return d == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(d);
}

double MatchCounts::recall() const {
  const auto d = tp + fn;
  return d == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(d);
}

double MatchCounts::f1() const {
  const double p = precision();
  const double r = recall();
  return (p + r) == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

MatchCounts& MatchCounts::operator+=(const MatchCounts& o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  return *this;
}

namespace {

bool prediction_ranks_before(const FusedPrediction& a, const FusedPrediction& b) {
  if (a.confidence != b.confidence) return a.confidence > b.confidence;
  return std::make_tuple(a.bbox.x_min(), a.bbox.y_min(), a.bbox.x_max(), a.bbox.y_max(), a.cls,
                         a.contributor_count) <
         std::make_tuple(b.bbox.x_min(), b.bbox.y_min(), b.bbox.x_max(), b.bbox.y_max(), b.cls,
                         b.contributor_count);
}

void score_image(std::vector<FusedPrediction> preds, const std::vector<Annotation>& gt,
                 const EvaluationOptions& opts, EvaluationReport& report) {
  std::sort(preds.begin(), preds.end(), prediction_ranks_before);
  if (opts.max_per_image && preds.size() > *opts.max_per_image) preds.resize(*opts.max_per_image);

  std::vector<char> matched(gt.size(), 0);
  for (const auto& p : preds) {
    std::size_t best = gt.size();
    double best_iou = 0.0;
    for (std::size_t g = 0; g < gt.size(); ++g) {
      if (matched[g] || gt[g].cls != p.cls) continue;
      const double v = iou(p.bbox, gt[g].bbox);
      if (v > 0.0 && v >= opts.match_iou && v > best_iou) {
        best = g;
        best_iou = v;
      }
    }
    auto& counts = report.per_class[class_slot(p.cls)];
    if (best < gt.size()) {
      matched[best] = 1;
      ++counts.tp;
    } else {
      ++counts.fp;
    }
  }
  for (std::size_t g = 0; g < gt.size(); ++g) {
    if (!matched[g]) ++report.per_class[class_slot(gt[g].cls)].fn;
  }
}

std::string axis_label(double v) {
  auto s = detail::exact(v);
  const auto dot = s.find('.');
  if (dot == std::string::npos) return detail::fixed(v, 2);
  if (s.size() - dot - 1 < 2) return detail::fixed(v, 2);
  return s;
}

}  // namespace

EvaluationReport match_and_score(const PredictionGroups& predictions,
                                 const std::vector<GroundTruthRecord>& ground_truth,
                                 const EvaluationOptions& opts) {
  EvaluationReport report;
  report.match_iou = opts.match_iou;
  static const std::vector<Annotation> kNone;
  std::map<std::string, const std::vector<Annotation>*> gt_by_image;
  for (const auto& r : ground_truth) gt_by_image[r.image_id()] = &r.annotations;

  for (const auto& [id, preds] : predictions) {
    const auto it = gt_by_image.find(id);
    score_image(preds, it == gt_by_image.end() ? kNone : *it->second, opts, report);
  }
  for (const auto& [id, annotations] : gt_by_image) {
    if (predictions.count(id)) continue;
    score_image({}, *annotations, opts, report);
  }
  for (const auto& c : report.per_class) report.total += c;
  return report;
}

std::vector<double> default_conf_axis() { return {0.1, 0.15, 0.20, 0.25, 0.30}; }
std::vector<double> default_nms_axis() { return {0.999, 0.99, 0.95, 0.90, 0.85, 0.80}; }

GridSearchResult grid_search(const GridSearchInput& input, const std::vector<double>& conf_axis,
                             const std::vector<double>& nms_axis, const FusionConfig& base,
                             const EvaluationOptions& opts, int jobs) {
  if (conf_axis.empty() || nms_axis.empty()) throw InvalidArgument("grid axes must be non-empty");
  GridSearchResult out;
  out.conf_axis = conf_axis;
  out.nms_axis = nms_axis;
  const std::size_t cells = conf_axis.size() * nms_axis.size();
  out.f1.assign(cells, 0.0);
  out.reports.resize(cells);

  detail::parallel_for(cells, jobs, [&](std::size_t cell) {
    const std::size_t row = cell / conf_axis.size();
    const std::size_t col = cell % conf_axis.size();
    FusionConfig cfg = base;
    cfg.conf_threshold = conf_axis[col];
    cfg.nms_threshold = nms_axis[row];
    std::ostringstream label;
    label << "grid cell (C=" << cfg.conf_threshold << ", NMS=" << cfg.nms_threshold << ")";
    try {
      cfg.validate();
    } catch (const InvalidArgument& e) {
      throw InvalidArgument(label.str() + ": " + e.what());
    }
    const auto batch = fuse_batch(input.detections, input.views, input.metas, cfg, 1);
    if (!batch.failures.empty()) {
      throw Error(label.str() + ": image '" + batch.failures.front().image_id +
                  "': " + batch.failures.front().message);
    }
    out.reports[cell] = match_and_score(batch.predictions, input.ground_truth, opts);
    out.f1[cell] = out.reports[cell].total.f1();
  });

  std::size_t best = 0;
  for (std::size_t i = 1; i < cells; ++i) {
    if (out.f1[i] > out.f1[best]) best = i;
  }
  out.best_row = best / conf_axis.size();
  out.best_col = best % conf_axis.size();
  return out;
}

std::string grid_csv(const GridSearchResult& r) {
  std::ostringstream os;
  os << "nms_threshold";
  for (double c : r.conf_axis) os << ',' << axis_label(c);
  os << '\n';
  for (std::size_t row = 0; row < r.nms_axis.size(); ++row) {
    os << axis_label(r.nms_axis[row]);
    for (std::size_t col = 0; col < r.conf_axis.size(); ++col) {
      os << ',' << detail::fixed(r.at(row, col), 4);
    }
    os << '\n';
  }
  return os.str();
}

std::string grid_table(const GridSearchResult& r) {
  std::ostringstream os;
  os << std::setw(14) << "NMS \\ C";
  for (double c : r.conf_axis) os << std::setw(9) << axis_label(c);
  os << '\n';
  for (std::size_t row = 0; row < r.nms_axis.size(); ++row) {
    os << std::setw(14) << axis_label(r.nms_axis[row]);
    for (std::size_t col = 0; col < r.conf_axis.size(); ++col) {
      const bool best = row == r.best_row && col == r.best_col;
      os << std::setw(8) << detail::fixed(r.at(row, col), 4) << (best ? '*' : ' ');
    }
    os << '\n';
  }
  os << "best F1 " << detail::fixed(r.best_f1(), 4) << " at C=" << axis_label(r.best_conf())
     << " NMS=" << axis_label(r.best_nms()) << '\n';
  return os.str();
}

std::string report_csv(const EvaluationReport& report) {
  std::ostringstream os;
  os << "class,tp,fp,fn,precision,recall,f1\n";
  const auto row = [&](std::string_view name, const MatchCounts& c) {
    os << name << ',' << c.tp << ',' << c.fp << ',' << c.fn << ',' << detail::fixed(c.precision(), 4)
       << ',' << detail::fixed(c.recall(), 4) << ',' << detail::fixed(c.f1(), 4) << '\n';
  };
  for (auto cls : kAllClasses) row(to_string(cls), report.per_class[class_slot(cls)]);
  row("all", report.total);
  return os.str();
}

std::string report_table(const EvaluationReport& report) {
  std::ostringstream os;
  os << "match IoU >= " << report.match_iou << '\n';
  os << std::left << std::setw(6) << "class" << std::right << std::setw(8) << "TP" << std::setw(8)
     << "FP" << std::setw(8) << "FN" << std::setw(11) << "precision" << std::setw(9) << "recall"
     << std::setw(9) << "F1" << '\n';
  const auto row = [&](std::string_view name, const MatchCounts& c) {
    os << std::left << std::setw(6) << name << std::right << std::setw(8) << c.tp << std::setw(8)
       << c.fp << std::setw(8) << c.fn << std::setw(11) << detail::fixed(c.precision(), 4)
       << std::setw(9) << detail::fixed(c.recall(), 4) << std::setw(9) << detail::fixed(c.f1(), 4)
       << '\n';
  };
  for (auto cls : kAllClasses) row(to_string(cls), report.per_class[class_slot(cls)]);
  row("all", report.total);
  return os.str();
}

}  // namespace roadscan
