#include "roadscan/detection.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "roadscan/error.hpp"

namespace roadscan {

namespace {

std::string describe(double x_min, double y_min, double x_max, double y_max) {
  std::ostringstream os;
  os << "(" << x_min << ", " << y_min << ", " << x_max << ", " << y_max << ")";
  return os.str();
}

}  // namespace

BoundingBox::BoundingBox(double x_min, double y_min, double x_max, double y_max)
    : x_min_(x_min), y_min_(y_min), x_max_(x_max), y_max_(y_max) {
  if (!std::isfinite(x_min) || !std::isfinite(y_min) || !std::isfinite(x_max) ||
      !std::isfinite(y_max)) {
    throw DegenerateBox("non-finite box coordinates " + describe(x_min, y_min, x_max, y_max));
  }
  if (!(x_min < x_max) || !(y_min < y_max)) {
    throw DegenerateBox("zero-area box " + describe(x_min, y_min, x_max, y_max));
  }
}

std::string_view to_string(DistressClass c) {
  switch (c) {
    case DistressClass::D00: return "D00";
    case DistressClass::D10: return "D10";
    case DistressClass::D20: return "D20";
    case DistressClass::D40: return "D40";
  }
  return "?";
}

std::optional<DistressClass> parse_distress_class(std::string_view code) {
  for (auto c : kAllClasses) {
    if (to_string(c) == code) return c;
  }
  return std::nullopt;
}

std::string_view to_string(ViewId v) {
  switch (v) {
    case ViewId::Identity: return "identity";
    case ViewId::HFlip: return "hflip";
    case ViewId::Scale130: return "scale_130";
    case ViewId::Scale083: return "scale_083";
    case ViewId::Scale067: return "scale_067";
  }
  return "?";
}

std::optional<ViewId> parse_view_id(std::string_view name) {
  for (auto v : {ViewId::Identity, ViewId::HFlip, ViewId::Scale130, ViewId::Scale083,
                 ViewId::Scale067}) {
    if (to_string(v) == name) return v;
  }
  return std::nullopt;
}

void check_confidence(double confidence, std::string_view context) {
  if (!(confidence >= 0.0 && confidence <= 1.0)) {
    std::ostringstream os;
    os << context << ": confidence " << confidence << " outside [0, 1]";
    throw ConfidenceOutOfRange(os.str());
  }
}

std::string_view to_string(Country c) {
  switch (c) {
    case Country::Japan: return "Japan";
    case Country::India: return "India";
    case Country::Czech: return "Czech";
  }
  return "?";
}

std::optional<Country> parse_country(std::string_view name) {
  for (auto c : kAllCountries) {
    if (to_string(c) == name) return c;
  }
  return std::nullopt;
}

bool is_valid(const GeoPoint& p) {
  return std::isfinite(p.latitude) && std::isfinite(p.longitude) && p.latitude >= -90.0 &&
         p.latitude <= 90.0 && p.longitude >= -180.0 && p.longitude <= 180.0;
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double iw = std::min(a.x_max(), b.x_max()) - std::max(a.x_min(), b.x_min());
  const double ih = std::min(a.y_max(), b.y_max()) - std::max(a.y_min(), b.y_min());
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  // inter <= min(area) so the ratio only exceeds 1 through rounding.
  return std::min(1.0, inter / uni);
}

BoundingBox clamp_to_image(const BoundingBox& b, const ImageMeta& meta) {
  const double w = meta.width;
  const double h = meta.height;
  const double x0 = std::clamp(b.x_min(), 0.0, w);
  const double y0 = std::clamp(b.y_min(), 0.0, h);
  const double x1 = std::clamp(b.x_max(), 0.0, w);
  const double y1 = std::clamp(b.y_max(), 0.0, h);
  if (!(x0 < x1) || !(y0 < y1)) {
    throw DegenerateBox("box " + describe(b.x_min(), b.y_min(), b.x_max(), b.y_max()) +
                        " lies outside image '" + meta.image_id + "'");
  }
  return BoundingBox(x0, y0, x1, y1);
}

}  // namespace roadscan
