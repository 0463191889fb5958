#include "roadscan/fusion.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <sstream>
#include <tuple>

#include "parallel.hpp"
#include "roadscan/error.hpp"

namespace roadscan {

std::string_view to_string(FusionMode m) { return m == FusionMode::Nms ? "nms" : "average"; }

std::optional<FusionMode> parse_fusion_mode(std::string_view name) {
  if (name == "nms") return FusionMode::Nms;
  if (name == "average") return FusionMode::Average;
  return std::nullopt;
}

void FusionConfig::validate() const {
  if (!(conf_threshold >= 0.0 && conf_threshold <= 1.0)) {
    std::ostringstream os;
    os << "confidence threshold " << conf_threshold << " outside [0, 1]";
    throw InvalidArgument(os.str());
  }
  if (!(nms_threshold > 0.0 && nms_threshold <= 1.0)) {
    std::ostringstream os;
    os << "NMS threshold " << nms_threshold << " outside (0, 1]";
    throw InvalidArgument(os.str());
  }
}

bool ranks_before(const Detection& a, const Detection& b) {
  if (a.confidence != b.confidence) return a.confidence > b.confidence;
  return std::forward_as_tuple(a.bbox.x_min(), a.bbox.y_min(), a.bbox.x_max(), a.bbox.y_max(),
                               a.model_id, a.cls, a.view_id, a.image_id) <
         std::forward_as_tuple(b.bbox.x_min(), b.bbox.y_min(), b.bbox.x_max(), b.bbox.y_max(),
                               b.model_id, b.cls, b.view_id, b.image_id);
}

namespace {

std::vector<Detection> ranked(std::span<const Detection> dets) {
  std::vector<Detection> out(dets.begin(), dets.end());
  std::sort(out.begin(), out.end(), ranks_before);
  return out;
}

struct Kept {
  std::size_t index;  // into the ranked list
  int absorbed;       // suppressed detections, excluding itself
};

// Greedy NMS over an already-ranked list.
std::vector<Kept> greedy_nms(const std::vector<Detection>& ranked_dets, double threshold,
                             bool class_wise) {
  const std::size_t n = ranked_dets.size();
  std::vector<char> removed(n, 0);
  std::vector<Kept> kept;
  for (std::size_t i = 0; i < n; ++i) {
    if (removed[i]) continue;
    Kept k{i, 0};
    const auto& top = ranked_dets[i];
    for (std::size_t j = i + 1; j < n; ++j) {
      if (removed[j]) continue;
      if (class_wise && ranked_dets[j].cls != top.cls) continue;
      if (iou(top.bbox, ranked_dets[j].bbox) > threshold) {
        removed[j] = 1;
        ++k.absorbed;
      }
    }
    kept.push_back(k);
  }
  return kept;
}

std::vector<FusedPrediction> nms_fuse(const std::vector<Detection>& ranked_dets,
                                      const FusionConfig& cfg) {
  std::vector<FusedPrediction> out;
  for (const auto& k : greedy_nms(ranked_dets, cfg.nms_threshold, cfg.class_wise)) {
    const auto& d = ranked_dets[k.index];
    out.push_back({d.image_id, d.cls, d.confidence, d.bbox, 1 + k.absorbed});
  }
  return out;
}

// Greedy clustering: each detection joins the same-class cluster whose seed
// (highest-ranked member) it overlaps most with IoU >= T, else seeds a new one.
std::vector<FusedPrediction> average_fuse(const std::vector<Detection>& ranked_dets,
                                          const FusionConfig& cfg) {
  std::vector<std::vector<std::size_t>> clusters;
  for (std::size_t i = 0; i < ranked_dets.size(); ++i) {
    const auto& d = ranked_dets[i];
    std::size_t best = clusters.size();
    double best_iou = -1.0;
    for (std::size_t c = 0; c < clusters.size(); ++c) {
      const auto& seed = ranked_dets[clusters[c].front()];
      if (cfg.class_wise && seed.cls != d.cls) continue;
      const double v = iou(seed.bbox, d.bbox);
      if (v >= cfg.nms_threshold && v > best_iou) {
        best = c;
        best_iou = v;
      }
    }
    if (best == clusters.size()) {
      clusters.push_back({i});
    } else {
      clusters[best].push_back(i);
    }
  }

  std::vector<FusedPrediction> out;
  out.reserve(clusters.size());
  for (const auto& members : clusters) {
    double conf_sum = 0.0;
    for (auto m : members) conf_sum += ranked_dets[m].confidence;
    std::array<double, 4> box{0.0, 0.0, 0.0, 0.0};
    for (auto m : members) {
      const auto& d = ranked_dets[m];
      const double w = conf_sum > 0.0 ? d.confidence / conf_sum
                                      : 1.0 / static_cast<double>(members.size());
      const auto c = d.bbox.corners();
      for (int k = 0; k < 4; ++k) box[k] += w * c[k];
    }
    const auto& seed = ranked_dets[members.front()];
    out.push_back({seed.image_id, seed.cls, conf_sum / static_cast<double>(members.size()),
                   BoundingBox(box[0], box[1], box[2], box[3]),
                   static_cast<int>(members.size())});
  }
  std::stable_sort(out.begin(), out.end(), [](const FusedPrediction& a, const FusedPrediction& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    return std::make_tuple(a.bbox.x_min(), a.bbox.y_min(), a.bbox.x_max(), a.bbox.y_max(), a.cls) <
           std::make_tuple(b.bbox.x_min(), b.bbox.y_min(), b.bbox.x_max(), b.bbox.y_max(), b.cls);
  });
  return out;
}

}  // namespace

std::vector<Detection> nms(std::span<const Detection> dets, double threshold, bool class_wise) {
  const auto order = ranked(dets);
  std::vector<Detection> out;
  for (const auto& k : greedy_nms(order, threshold, class_wise)) out.push_back(order[k.index]);
  return out;
}

std::vector<FusedPrediction> fuse_image(std::span<const Detection> dets, const ViewManifest& views,
                                        const ImageMeta& meta, const FusionConfig& cfg) {
  cfg.validate();
  std::vector<Detection> pooled;
  pooled.reserve(dets.size());
  for (const auto& d : dets) {
    if (!views.contains(d.view_id)) {
      throw UnknownView("detection for image '" + d.image_id + "' references undeclared view '" +
                        std::string(to_string(d.view_id)) + "'");
    }
    if (d.confidence < cfg.conf_threshold) continue;
    pooled.push_back(deaugment(d, views.at(d.view_id), meta));
  }
  std::sort(pooled.begin(), pooled.end(), ranks_before);
  return cfg.mode == FusionMode::Nms ? nms_fuse(pooled, cfg) : average_fuse(pooled, cfg);
}

std::vector<FusedPrediction> fuse_image(std::span<const std::vector<Detection>> sets,
                                        const ViewManifest& views, const ImageMeta& meta,
                                        const FusionConfig& cfg) {
  std::vector<Detection> flat;
  for (const auto& s : sets) flat.insert(flat.end(), s.begin(), s.end());
  return fuse_image(std::span<const Detection>(flat), views, meta, cfg);
}

std::vector<std::string> TimingReport::over_budget(double budget_millis) const {
  std::vector<std::string> out;
  for (const auto& t : per_image) {
    if (t.millis > budget_millis) out.push_back(t.image_id);
  }
  return out;
}

BatchResult fuse_batch(const DetectionGroups& groups, const ViewManifest& views,
                       const std::map<std::string, ImageMeta>& metas, const FusionConfig& cfg,
                       int jobs) {
  cfg.validate();
  struct Slot {
    const std::string* image_id;
    const std::vector<Detection>* dets;
    std::vector<FusedPrediction> result;
    double millis = 0.0;
    std::string error;
    bool ok = false;
  };
  std::vector<Slot> slots;
  slots.reserve(groups.size());
  for (const auto& [id, dets] : groups) slots.push_back({&id, &dets, {}, 0.0, {}, false});

  detail::parallel_for(slots.size(), jobs, [&](std::size_t i) {
    auto& s = slots[i];
    const auto start = std::chrono::steady_clock::now();
    try {
      const auto meta = metas.find(*s.image_id);
      if (meta == metas.end()) throw Error("no image metadata");
      s.result = fuse_image(std::span<const Detection>(*s.dets), views, meta->second, cfg);
      s.ok = true;
    } catch (const Error& e) {
      s.error = e.what();
    }
    s.millis =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  });

  BatchResult out;
  std::vector<double> times;
  for (auto& s : slots) {
    out.timing.per_image.push_back({*s.image_id, s.millis});
    times.push_back(s.millis);
    if (s.ok) {
      out.predictions.emplace(*s.image_id, std::move(s.result));
    } else {
      out.failures.push_back({*s.image_id, std::move(s.error)});
    }
  }
  if (!times.empty()) {
    std::sort(times.begin(), times.end());
    out.timing.max_millis = times.back();
    const std::size_t mid = times.size() / 2;
    out.timing.median_millis =
        times.size() % 2 ? times[mid] : 0.5 * (times[mid - 1] + times[mid]);
  }
  return out;
}

}  // namespace roadscan
