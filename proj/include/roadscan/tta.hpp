#pragma once

#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "roadscan/detection.hpp"

namespace roadscan {

/// A test-time augmentation view: either the identity, a horizontal flip of
/// the base image, or a uniform rescale by `scale`.
struct AugmentedView {
  ViewId id = ViewId::Identity;
  double scale = 1.0;
  bool flipped = false;

  friend bool operator==(const AugmentedView&, const AugmentedView&) = default;
};

/// The five canonical views: identity, hflip, 1.30x, 0.83x, 0.67x.
AugmentedView canonical_view(ViewId id);
std::vector<AugmentedView> canonical_views();

/// Ordered set of views used in a run. Always contains the identity view
/// exactly once and never repeats a view id.
class ViewManifest {
 public:
  explicit ViewManifest(std::vector<AugmentedView> views);

  /// All five canonical views in canonical order.
  static ViewManifest all();

  /// Reads a JSON manifest: {"views": [{"view_id": ..., "scale": ..., "flipped": ...}]}.
  static ViewManifest load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::span<const AugmentedView> views() const { return views_; }
  bool contains(ViewId id) const;
  /// Throws UnknownView when `id` is not declared.
  const AugmentedView& at(ViewId id) const;

 private:
  std::vector<AugmentedView> views_;
};

/// Dimensions of the image the detector saw for view `v`:
/// round-half-up of scale * base dimension.
std::pair<int, int> view_dimensions(const AugmentedView& v, const ImageMeta& meta);

/// Maps a base-space box into the coordinate frame of view `v`.
BoundingBox forward_box(const BoundingBox& b, const AugmentedView& v, const ImageMeta& meta);

/// Maps a view-space box back to base space (no clamping).
BoundingBox inverse_box(const BoundingBox& b, const AugmentedView& v, const ImageMeta& meta);

/// Brings a detection from view space back to base space and clamps it to the
/// image. Everything except the box is carried over unchanged.
Detection deaugment(const Detection& d, const AugmentedView& v, const ImageMeta& meta);

}  // namespace roadscan
