#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace roadscan {

/// Axis-aligned box in continuous pixel coordinates.
///
/// Construction enforces finite coordinates with x_min < x_max and
/// y_min < y_max. Non-negativity is an ingestion-level requirement
/// (see `is_non_negative`) so that raw detector output slightly outside the
/// frame can still be represented and clipped with `clamp_to_image`.
class BoundingBox {
 public:
  BoundingBox(double x_min, double y_min, double x_max, double y_max);

  double x_min() const { return x_min_; }
  double y_min() const { return y_min_; }
  double x_max() const { return x_max_; }
  double y_max() const { return y_max_; }

  double width() const { return x_max_ - x_min_; }
  double height() const { return y_max_ - y_min_; }
  double area() const { return width() * height(); }

  bool is_non_negative() const { return x_min_ >= 0.0 && y_min_ >= 0.0; }

  std::array<double, 4> corners() const { return {x_min_, y_min_, x_max_, y_max_}; }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;

 private:
  double x_min_;
  double y_min_;
  double x_max_;
  double y_max_;
};

/// The four distress categories scored by the challenge.
enum class DistressClass { D00, D10, D20, D40 };

inline constexpr std::array<DistressClass, 4> kAllClasses = {
    DistressClass::D00, DistressClass::D10, DistressClass::D20, DistressClass::D40};

std::string_view to_string(DistressClass c);
/// Returns nullopt for any code outside D00/D10/D20/D40.
std::optional<DistressClass> parse_distress_class(std::string_view code);
/// Zero-based position in `kAllClasses`; used for per-class tables.
inline std::size_t class_slot(DistressClass c) { return static_cast<std::size_t>(c); }
/// One-based submission index: D00 -> 1, D10 -> 2, D20 -> 3, D40 -> 4.
inline int submission_index(DistressClass c) { return static_cast<int>(c) + 1; }

/// Identifier of one test-time augmentation view.
enum class ViewId { Identity, HFlip, Scale130, Scale083, Scale067 };

std::string_view to_string(ViewId v);
std::optional<ViewId> parse_view_id(std::string_view name);

/// One predicted box from an external detector, tagged with its provenance.
struct Detection {
  std::string image_id;
  DistressClass cls = DistressClass::D00;
  double confidence = 0.0;
  BoundingBox bbox{0.0, 0.0, 1.0, 1.0};
  std::string model_id;
  ViewId view_id = ViewId::Identity;

  friend bool operator==(const Detection&, const Detection&) = default;
};

/// Throws ConfidenceOutOfRange unless `confidence` lies in [0, 1].
void check_confidence(double confidence, std::string_view context);

enum class Country { Japan, India, Czech };

inline constexpr std::array<Country, 3> kAllCountries = {Country::Japan, Country::India,
                                                         Country::Czech};

std::string_view to_string(Country c);
std::optional<Country> parse_country(std::string_view name);

struct GeoPoint {
  double latitude = 0.0;
  double longitude = 0.0;

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

/// True when latitude is within [-90, 90] and longitude within [-180, 180].
bool is_valid(const GeoPoint& p);

struct ImageMeta {
  std::string image_id;
  int width = 0;
  int height = 0;
  std::optional<Country> country;
  std::optional<GeoPoint> gps;
};

/// Intersection over union. Boxes that only share an edge have IoU 0.
double iou(const BoundingBox& a, const BoundingBox& b);

/// Clips `b` to [0, width] x [0, height]. Throws DegenerateBox when nothing
/// of the box remains inside the image.
BoundingBox clamp_to_image(const BoundingBox& b, const ImageMeta& meta);

}  // namespace roadscan
