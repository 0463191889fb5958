#include "roadscan/tta.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "roadscan/error.hpp"

namespace roadscan {

AugmentedView canonical_view(ViewId id) {
  switch (id) {
    case ViewId::Identity: return {id, 1.0, false};
    case ViewId::HFlip: return {id, 1.0, true};
    case ViewId::Scale130: return {id, 1.30, false};
    case ViewId::Scale083: return {id, 0.83, false};
    case ViewId::Scale067: return {id, 0.67, false};
  }
  throw UnknownView("unknown view id");
}

std::vector<AugmentedView> canonical_views() {
  return {canonical_view(ViewId::Identity), canonical_view(ViewId::HFlip),
          canonical_view(ViewId::Scale130), canonical_view(ViewId::Scale083),
          canonical_view(ViewId::Scale067)};
}

ViewManifest::ViewManifest(std::vector<AugmentedView> views) : views_(std::move(views)) {
  int identities = 0;
  for (std::size_t i = 0; i < views_.size(); ++i) {
    if (views_[i] != canonical_view(views_[i].id)) {
      throw InvalidArgument("view '" + std::string(to_string(views_[i].id)) +
                            "' does not match its canonical scale/flip");
    }
    if (views_[i].id == ViewId::Identity) ++identities;
    for (std::size_t j = 0; j < i; ++j) {
      if (views_[j].id == views_[i].id) {
        throw InvalidArgument("duplicate view '" + std::string(to_string(views_[i].id)) + "'");
      }
    }
  }
  if (identities != 1) throw InvalidArgument("manifest must contain the identity view exactly once");
}

ViewManifest ViewManifest::all() { return ViewManifest(canonical_views()); }

ViewManifest ViewManifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open view manifest '" + path.string() + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  std::vector<AugmentedView> views;
  try {
    for (const auto& rec : doc.at("views")) {
      const auto name = rec.at("view_id").get<std::string>();
      const auto id = parse_view_id(name);
      if (!id) throw UnknownView(path.string() + ": unknown view_id '" + name + "'");
      views.push_back({*id, rec.at("scale").get<double>(), rec.at("flipped").get<bool>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  try {
    return ViewManifest(std::move(views));
  } catch (const InvalidArgument& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void ViewManifest::save(const std::filesystem::path& path) const {
  nlohmann::ordered_json doc;
  auto& arr = doc["views"] = nlohmann::ordered_json::array();
  for (const auto& v : views_) {
    nlohmann::ordered_json rec;
    rec["view_id"] = to_string(v.id);
    rec["scale"] = v.scale;
    rec["flipped"] = v.flipped;
    arr.push_back(std::move(rec));
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write view manifest '" + path.string() + "'");
  out << doc.dump(2) << '\n';
}

bool ViewManifest::contains(ViewId id) const {
  for (const auto& v : views_) {
    if (v.id == id) return true;
  }
  return false;
}

const AugmentedView& ViewManifest::at(ViewId id) const {
  for (const auto& v : views_) {
    if (v.id == id) return v;
  }
  throw UnknownView("view '" + std::string(to_string(id)) + "' is not declared in the manifest");
}

std::pair<int, int> view_dimensions(const AugmentedView& v, const ImageMeta& meta) {
  const auto scaled = [&](int n) { return static_cast<int>(std::floor(v.scale * n + 0.5)); };
  return {scaled(meta.width), scaled(meta.height)};
}

BoundingBox forward_box(const BoundingBox& b, const AugmentedView& v, const ImageMeta& meta) {
  if (v.flipped) {
    const double w = meta.width;
    return BoundingBox(w - b.x_max(), b.y_min(), w - b.x_min(), b.y_max());
  }
  if (v.scale == 1.0) return b;
  return BoundingBox(b.x_min() * v.scale, b.y_min() * v.scale, b.x_max() * v.scale,
                     b.y_max() * v.scale);
}

BoundingBox inverse_box(const BoundingBox& b, const AugmentedView& v, const ImageMeta& meta) {
  if (v.flipped) {
    const double w = meta.width;
    return BoundingBox(w - b.x_max(), b.y_min(), w - b.x_min(), b.y_max());
  }
  // Divide by the declared factor, not by the ratio of rounded dimensions.
  if (v.scale == 1.0) return b;
  return BoundingBox(b.x_min() / v.scale, b.y_min() / v.scale, b.x_max() / v.scale,
                     b.y_max() / v.scale);
}

Detection deaugment(const Detection& d, const AugmentedView& v, const ImageMeta& meta) {
  Detection out = d;
  out.bbox = clamp_to_image(inverse_box(d.bbox, v, meta), meta);
  return out;
}

}  // namespace roadscan
