#include <doctest.h>

#include <algorithm>
#include <random>

#include "roadscan/error.hpp"
#include "roadscan/evaluation.hpp"
#include "support/synthetic.hpp"

using namespace roadscan;
using roadscan::testing::square_meta;

namespace {

GroundTruthRecord gt_record(const std::string& id, std::vector<Annotation> anns) {
  GroundTruthRecord r;
  r.meta = square_meta(id);
  r.annotations = std::move(anns);
  return r;
}

FusedPrediction pred(const std::string& id, DistressClass c, double conf, BoundingBox b) {
  return {id, c, conf, b, 1};
}

// Random ground truth plus predictions that are perturbed copies, misses and
// spurious boxes.
std::pair<PredictionGroups, std::vector<GroundTruthRecord>> random_fixture(std::mt19937_64& rng) {
  PredictionGroups preds;
  std::vector<GroundTruthRecord> gt;
  std::uniform_int_distribution<int> n_obj(0, 6);
  std::uniform_int_distribution<int> cls(0, 3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_real_distribution<double> shift(-15.0, 15.0);
  const int images = 1 + static_cast<int>(rng() % 6);
  for (int i = 0; i < images; ++i) {
    const std::string id = "img" + std::to_string(i);
    auto rec = gt_record(id, {});
    auto& p = preds[id];
    const int n = n_obj(rng);
    for (int k = 0; k < n; ++k) {
      const auto box = roadscan::testing::random_box(rng, 600, 20, 120);
      const auto c = kAllClasses[static_cast<std::size_t>(cls(rng))];
      rec.annotations.push_back({c, box});
      if (u(rng) < 0.7) {
        const double dx = shift(rng), dy = shift(rng);
        p.push_back(pred(id, u(rng) < 0.9 ? c : kAllClasses[static_cast<std::size_t>(cls(rng))], u(rng),
                         BoundingBox(box.x_min() + dx + 20, box.y_min() + dy + 20, box.x_max() + dx + 20,
                                     box.y_max() + dy + 20)));
      }
    }
    const int spurious = static_cast<int>(rng() % 3);
    for (int k = 0; k < spurious; ++k) {
      p.push_back(pred(id, kAllClasses[static_cast<std::size_t>(cls(rng))], u(rng),
                       roadscan::testing::random_box(rng, 600)));
    }
    gt.push_back(rec);
  }
  return {preds, gt};
}

}  // namespace

TEST_CASE("perfect predictions score 1") {
  std::vector<GroundTruthRecord> gt = {
      gt_record("a", {{DistressClass::D00, BoundingBox(0, 0, 10, 10)}, {DistressClass::D40, BoundingBox(50, 50, 90, 80)}}),
      gt_record("b", {{DistressClass::D20, BoundingBox(5, 5, 100, 100)}})};
  PredictionGroups preds;
  for (const auto& r : gt) {
    for (const auto& a : r.annotations) preds[r.image_id()].push_back(pred(r.image_id(), a.cls, 0.9, a.bbox));
  }
  const auto rep = match_and_score(preds, gt);
  CHECK(rep.total.precision() == 1.0);
  CHECK(rep.total.recall() == 1.0);
  CHECK(rep.total.f1() == 1.0);
  CHECK(rep.per_class[class_slot(DistressClass::D40)].tp == 1);
}

TEST_CASE("no predictions") {
  const std::vector<GroundTruthRecord> gt = {gt_record("a", {{DistressClass::D00, BoundingBox(0, 0, 10, 10)}})};
  const auto rep = match_and_score({}, gt);
  CHECK(rep.total.fn == 1);
  CHECK(rep.total.recall() == 0.0);
  CHECK(rep.total.precision() == 0.0);
  CHECK(rep.total.f1() == 0.0);
  CHECK(match_and_score({}, {}).total.f1() == 0.0);
}

TEST_CASE("one TP, one FP, one FN") {
  const std::vector<GroundTruthRecord> gt = {gt_record(
      "a", {{DistressClass::D00, BoundingBox(0, 0, 10, 10)}, {DistressClass::D10, BoundingBox(100, 100, 120, 120)}})};
  PredictionGroups preds;
  preds["a"] = {pred("a", DistressClass::D00, 0.9, BoundingBox(0, 0, 10, 10)),
                pred("a", DistressClass::D00, 0.8, BoundingBox(300, 300, 310, 310))};
  const auto rep = match_and_score(preds, gt);
  CHECK(rep.total == MatchCounts{1, 1, 1});
  CHECK(rep.total.precision() == 0.5);
  CHECK(rep.total.recall() == 0.5);
  CHECK(rep.total.f1() == 0.5);
}

TEST_CASE("predictions for images without ground truth are false positives") {
  PredictionGroups preds;
  preds["ghost"] = {pred("ghost", DistressClass::D00, 0.9, BoundingBox(0, 0, 10, 10))};
  CHECK(match_and_score(preds, {}).total == MatchCounts{0, 1, 0});
}

TEST_CASE("class mismatch never matches") {
  const std::vector<GroundTruthRecord> gt = {gt_record("a", {{DistressClass::D00, BoundingBox(0, 0, 10, 10)}})};
  PredictionGroups preds;
  preds["a"] = {pred("a", DistressClass::D10, 0.9, BoundingBox(0, 0, 10, 10))};
  CHECK(match_and_score(preds, gt).total == MatchCounts{0, 1, 1});
}

TEST_CASE("the more confident prediction claims the ground truth") {
  const std::vector<GroundTruthRecord> gt = {gt_record("a", {{DistressClass::D00, BoundingBox(0, 0, 10, 10)}})};
  PredictionGroups preds;
  // The exact box is less confident; it becomes the false positive.
  preds["a"] = {pred("a", DistressClass::D00, 0.5, BoundingBox(0, 0, 10, 10)),
                pred("a", DistressClass::D00, 0.9, BoundingBox(0, 0, 10, 12))};
  const auto rep = match_and_score(preds, gt);
  CHECK(rep.total == MatchCounts{1, 1, 0});
}

TEST_CASE("a prediction picks the highest-IoU free ground truth") {
  const std::vector<GroundTruthRecord> gt = {gt_record(
      "a", {{DistressClass::D00, BoundingBox(0, 0, 10, 10)}, {DistressClass::D00, BoundingBox(1, 0, 11, 10)}})};
  PredictionGroups preds;
  preds["a"] = {pred("a", DistressClass::D00, 0.9, BoundingBox(1, 0, 11, 10)),
                pred("a", DistressClass::D00, 0.8, BoundingBox(0, 0, 10, 10))};
  CHECK(match_and_score(preds, gt).total == MatchCounts{2, 0, 0});
}

TEST_CASE("match IoU boundaries") {
  const std::vector<GroundTruthRecord> gt = {gt_record("a", {{DistressClass::D00, BoundingBox(0, 0, 10, 10)}})};
  PredictionGroups barely;
  barely["a"] = {pred("a", DistressClass::D00, 0.9, BoundingBox(9, 9, 20, 20))};
  PredictionGroups disjoint;
  disjoint["a"] = {pred("a", DistressClass::D00, 0.9, BoundingBox(10, 0, 20, 10))};
  PredictionGroups half;  // IoU exactly 0.5
  half["a"] = {pred("a", DistressClass::D00, 0.9, BoundingBox(0, 0, 20, 10))};
  PredictionGroups exact;
  exact["a"] = {pred("a", DistressClass::D00, 0.9, BoundingBox(0, 0, 10, 10))};
  PredictionGroups near;
  near["a"] = {pred("a", DistressClass::D00, 0.9, BoundingBox(0, 0, 10, 10.001))};

  CHECK(match_and_score(barely, gt, {0.0}).total.tp == 1);
  CHECK(match_and_score(disjoint, gt, {0.0}).total.tp == 0);
  CHECK(match_and_score(half, gt, {0.5}).total.tp == 1);
  CHECK(match_and_score(half, gt, {0.5000001}).total.tp == 0);
  CHECK(match_and_score(exact, gt, {1.0}).total.tp == 1);
  CHECK(match_and_score(near, gt, {1.0}).total.tp == 0);
}

TEST_CASE("max predictions per image") {
  const std::vector<GroundTruthRecord> gt = {gt_record(
      "a", {{DistressClass::D00, BoundingBox(0, 0, 10, 10)}, {DistressClass::D00, BoundingBox(50, 50, 60, 60)}})};
  PredictionGroups preds;
  preds["a"] = {pred("a", DistressClass::D00, 0.4, BoundingBox(0, 0, 10, 10)),
                pred("a", DistressClass::D00, 0.9, BoundingBox(50, 50, 60, 60)),
                pred("a", DistressClass::D00, 0.6, BoundingBox(200, 200, 210, 210))};
  CHECK(match_and_score(preds, gt).total == MatchCounts{2, 1, 0});
  EvaluationOptions capped;
  capped.max_per_image = 2;
  CHECK(match_and_score(preds, gt, capped).total == MatchCounts{1, 1, 1});
}

TEST_CASE("metric properties on random fixtures") {
  std::mt19937_64 rng(1234);
  for (int trial = 0; trial < 500; ++trial) {
    auto [preds, gt] = random_fixture(rng);
    const auto rep = match_and_score(preds, gt);
    const auto& t = rep.total;
    const double identity = (t.tp == 0) ? 0.0 : 2.0 * t.tp / (2.0 * t.tp + t.fp + t.fn);
    CHECK(t.f1() == doctest::Approx(identity).epsilon(1e-12));
    CHECK(t.f1() >= 0.0);
    CHECK(t.f1() <= 1.0);

    std::size_t n_gt = 0, n_pred = 0;
    for (const auto& r : gt) n_gt += r.annotations.size();
    for (const auto& [id, p] : preds) n_pred += p.size();
    CHECK(t.tp <= n_gt);
    CHECK(t.tp <= n_pred);
    CHECK(t.tp + t.fn == n_gt);
    CHECK(t.tp + t.fp == n_pred);

    for (auto& [id, p] : preds) std::shuffle(p.begin(), p.end(), rng);
    const auto again = match_and_score(preds, gt);
    CHECK(again.total == rep.total);
    for (std::size_t c = 0; c < 4; ++c) CHECK(again.per_class[c] == rep.per_class[c]);
  }
}

TEST_CASE("grid search") {
  const auto inst = roadscan::testing::planted_instance(4);
  const GridSearchInput input{inst.detections, inst.views, inst.metas, inst.ground_truth};

  SUBCASE("1x1 grid equals a direct fuse and score") {
    const FusionConfig cfg{0.2, 0.9, FusionMode::Nms, true};
    const auto r = grid_search(input, {0.2}, {0.9}, cfg);
    REQUIRE(r.f1.size() == 1);
    const auto batch = fuse_batch(inst.detections, inst.views, inst.metas, cfg);
    CHECK(r.f1[0] == match_and_score(batch.predictions, inst.ground_truth).total.f1());
    CHECK(r.best_row == 0);
    CHECK(r.best_col == 0);
  }

  SUBCASE("default axes reproduce the table layout") {
    const auto r = grid_search(input, default_conf_axis(), default_nms_axis(), FusionConfig{}, {}, 4);
    CHECK(r.nms_axis == std::vector<double>{0.999, 0.99, 0.95, 0.90, 0.85, 0.80});
    CHECK(r.conf_axis == std::vector<double>{0.1, 0.15, 0.20, 0.25, 0.30});
    CHECK(r.f1.size() == 30);
    CHECK(r.best_conf() == 0.25);
    CHECK(r.best_nms() == 0.95);
    for (std::size_t row = 0; row < 6; ++row) {
      for (std::size_t col = 0; col < 5; ++col) {
        const auto expected = roadscan::testing::planted_counts(r.conf_axis[col], r.nms_axis[row], 4);
        CHECK(r.reports[row * 5 + col].total == expected);
        CHECK(r.at(row, col) <= r.best_f1());
      }
    }
    const auto csv = grid_csv(r);
    CHECK(csv.rfind("nms_threshold,0.10,0.15,0.20,0.25,0.30\n0.999,", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);
    CHECK(csv.find("0.95,") != std::string::npos);
    CHECK(csv.find("1.0000") != std::string::npos);
  }

  SUBCASE("jobs do not change the result") {
    const auto a = grid_search(input, default_conf_axis(), default_nms_axis(), FusionConfig{}, {}, 1);
    const auto b = grid_search(input, default_conf_axis(), default_nms_axis(), FusionConfig{}, {}, 8);
    CHECK(a.f1 == b.f1);
    CHECK(grid_csv(a) == grid_csv(b));
  }

  SUBCASE("errors") {
    CHECK_THROWS_AS(grid_search(input, {}, {0.5}, FusionConfig{}), InvalidArgument);
    CHECK_THROWS_AS(grid_search(input, {0.5}, {0.0}, FusionConfig{}), InvalidArgument);
    auto metas = inst.metas;
    metas.erase(metas.begin());
    const GridSearchInput missing{inst.detections, inst.views, metas, inst.ground_truth};
    try {
      grid_search(missing, {0.25}, {0.95}, FusionConfig{});
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("C=0.25") != std::string::npos);
    }
  }
}

TEST_CASE("report rendering") {
  EvaluationReport rep;
  rep.per_class[0] = {1, 1, 1};
  rep.total = {1, 1, 1};
  const auto csv = report_csv(rep);
  CHECK(csv.find("D00,1,1,1,0.5000,0.5000,0.5000") != std::string::npos);
  CHECK(csv.find("all,1,1,1,0.5000,0.5000,0.5000") != std::string::npos);
  CHECK(report_table(rep).find("0.5000") != std::string::npos);
}
