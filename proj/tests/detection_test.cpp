#include <doctest.h>

#include <cmath>
#include <random>

#include "roadscan/detection.hpp"
#include "roadscan/error.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using namespace roadscan;
using roadscan::testing::raster_iou;
using roadscan::testing::square_meta;

TEST_CASE("iou examples") {
  const BoundingBox a(0, 0, 10, 10);
  CHECK(iou(a, a) == 1.0);
  CHECK(iou(a, BoundingBox(20, 20, 30, 30)) == 0.0);
  // intersection 50, union 150
  CHECK(iou(a, BoundingBox(5, 0, 15, 10)) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("edge-touching boxes do not overlap") {
  CHECK(iou(BoundingBox(0, 0, 10, 10), BoundingBox(10, 0, 20, 10)) == 0.0);
  CHECK(iou(BoundingBox(0, 0, 10, 10), BoundingBox(0, 10, 10, 20)) == 0.0);
  CHECK(iou(BoundingBox(0, 0, 10, 10), BoundingBox(10, 10, 20, 20)) == 0.0);
}

TEST_CASE("box construction rejects zero area and non-finite corners") {
  CHECK_THROWS_AS(BoundingBox(5, 0, 5, 10), DegenerateBox);
  CHECK_THROWS_AS(BoundingBox(0, 3, 10, 3), DegenerateBox);
  CHECK_THROWS_AS(BoundingBox(10, 0, 5, 10), DegenerateBox);
  CHECK_THROWS_AS(BoundingBox(0, 0, NAN, 10), DegenerateBox);
  CHECK_THROWS_AS(BoundingBox(0, 0, INFINITY, 10), DegenerateBox);
  CHECK_FALSE(BoundingBox(-1, 0, 5, 5).is_non_negative());
}

TEST_CASE("iou is symmetric, bounded and exact on itself") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 5000; ++i) {
    const auto a = roadscan::testing::random_box(rng, 600, 0.5, 300);
    const auto b = roadscan::testing::random_box(rng, 600, 0.5, 300);
    const double v = iou(a, b);
    CHECK(v == iou(b, a));
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    CHECK(iou(a, a) == 1.0);
  }
}

TEST_CASE("iou agrees with pixel rasterization on integer boxes") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> coord(0, 100);
  int checked = 0;
  while (checked < 400) {
    int c[8];
    for (int& v : c) v = coord(rng);
    if (c[0] >= c[2] || c[1] >= c[3] || c[4] >= c[6] || c[5] >= c[7]) continue;
    const double expected = raster_iou(c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]);
    const double got = iou(BoundingBox(c[0], c[1], c[2], c[3]), BoundingBox(c[4], c[5], c[6], c[7]));
    CHECK(std::abs(got - expected) <= 1e-9);
    ++checked;
  }
}

TEST_CASE("clamp_to_image") {
  const auto meta = square_meta("a.jpg", 600);
  CHECK(clamp_to_image(BoundingBox(-5, 0, 10, 10), meta) == BoundingBox(0, 0, 10, 10));
  CHECK(clamp_to_image(BoundingBox(0, 0, 10, 10), meta) == BoundingBox(0, 0, 10, 10));
  CHECK(clamp_to_image(BoundingBox(590, 590, 700, 700), meta) == BoundingBox(590, 590, 600, 600));

  SUBCASE("box entirely outside collapses") {
    CHECK_THROWS_AS(clamp_to_image(BoundingBox(600, 10, 650, 20), meta), DegenerateBox);
    CHECK_THROWS_AS(clamp_to_image(BoundingBox(-20, 10, -1, 20), meta), DegenerateBox);
  }
}

TEST_CASE("class and view codes") {
  for (auto c : kAllClasses) CHECK(parse_distress_class(to_string(c)) == c);
  CHECK_FALSE(parse_distress_class("D43").has_value());
  CHECK_FALSE(parse_distress_class("d00").has_value());
  CHECK(submission_index(DistressClass::D00) == 1);
  CHECK(submission_index(DistressClass::D40) == 4);
  CHECK(parse_view_id("scale_083") == ViewId::Scale083);
  CHECK_FALSE(parse_view_id("vflip").has_value());
}

TEST_CASE("confidence range") {
  CHECK_NOTHROW(check_confidence(0.0, "x"));
  CHECK_NOTHROW(check_confidence(1.0, "x"));
  CHECK_THROWS_AS(check_confidence(1.3, "x"), ConfidenceOutOfRange);
  CHECK_THROWS_AS(check_confidence(-0.01, "x"), ConfidenceOutOfRange);
  CHECK_THROWS_AS(check_confidence(NAN, "x"), ConfidenceOutOfRange);
}

TEST_CASE("geo point validity") {
  CHECK(is_valid(GeoPoint{90, -180}));
  CHECK_FALSE(is_valid(GeoPoint{90.5, 0}));
  CHECK_FALSE(is_valid(GeoPoint{0, 180.01}));
}
