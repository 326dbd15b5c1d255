// Copyright 2026 WeevilWatch contributors. Licensed under the Apache-2.0 license.

#include "ww/detection.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "oracles.hpp"
#include "ww/error.hpp"

namespace fs = std::filesystem;
using ww::Error;
using ww::ErrorKind;
using namespace ww::detect;

namespace {

template <typename Fn>
ErrorKind kind_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::Io;
}

fs::path temp_dir() {
  fs::path dir = fs::temp_directory_path() / "ww_detection_tests";
  fs::create_directories(dir);
  return dir;
}

BoundingBox random_box(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> corner(0, 20);
  std::uniform_int_distribution<int> extent(1, 10);
  const int x1 = corner(rng), y1 = corner(rng);
  return BoundingBox{static_cast<double>(x1), static_cast<double>(y1),
                     static_cast<double>(x1 + extent(rng)),
                     static_cast<double>(y1 + extent(rng))};
}

bool same_detections(const std::vector<Detection>& a,
                     const std::vector<Detection>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].box.x1 != b[i].box.x1 || a[i].box.y1 != b[i].box.y1 ||
        a[i].box.x2 != b[i].box.x2 || a[i].box.y2 != b[i].box.y2 ||
        a[i].class_id != b[i].class_id ||
        a[i].confidence != b[i].confidence || a[i].image_id != b[i].image_id) {
      return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("iou fixtures") {
  const BoundingBox unit{0, 0, 1, 1};
  CHECK(iou(unit, unit) == 1.0);
  CHECK(iou({0, 0, 2, 2}, {1, 1, 3, 3}) == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
  CHECK(iou({0, 0, 2, 2}, {0, 1, 2, 3}) == 1.0 / 3.0);  // 2 / (4 + 4 - 2), exact
  CHECK(iou({0, 0, 1, 1}, {5, 5, 6, 6}) == 0.0);
  CHECK(iou({0, 0, 1, 1}, {1, 0, 2, 1}) == 0.0);  // edge contact has no area
  CHECK(kind_of([] { iou({0, 0, 0, 1}, {0, 0, 1, 1}); }) == ErrorKind::Domain);
}

TEST_CASE("iou is symmetric and translation invariant") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> shift(-40.0, 40.0);
  for (int trial = 0; trial < 500; ++trial) {
    const BoundingBox a = random_box(rng);
    const BoundingBox b = random_box(rng);
    const double ab = iou(a, b);
    CHECK(std::abs(ab - iou(b, a)) < 1e-15);
    CHECK(std::abs(ab - oracle::iou_ref(a, b)) < 1e-12);
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);

    const double dx = shift(rng), dy = shift(rng);
    const BoundingBox a2{a.x1 + dx, a.y1 + dy, a.x2 + dx, a.y2 + dy};
    const BoundingBox b2{b.x1 + dx, b.y1 + dy, b.x2 + dx, b.y2 + dy};
    CHECK(std::abs(ab - iou(a2, b2)) < 1e-12);
  }
}

TEST_CASE("alignment score fixtures") {
  AlignmentParams params;  // alpha 1, beta 6
  CHECK(std::abs(alignment_score(0.5, 0.8, params) - 0.131072) < 1e-12);
  CHECK(alignment_score(1.0, 1.0, params) == 1.0);
  CHECK(alignment_score(0.0, 0.8, params) == 0.0);
  CHECK(alignment_score(0.7, 0.0, params) == 0.0);

  AlignmentParams zero_exponents;
  zero_exponents.alpha = 0.0;
  zero_exponents.beta = 0.0;
  CHECK(alignment_score(0.0, 0.0, zero_exponents) == 1.0);  // 0^0 = 1

  SUBCASE("monotone in both inputs") {
    double prev = -1.0;
    for (double u = 0.1; u <= 1.0; u += 0.1) {
      const double t = alignment_score(0.6, u, params);
      CHECK(t > prev);
      prev = t;
    }
    CHECK(alignment_score(0.9, 0.5, params) > alignment_score(0.4, 0.5, params));
  }
  SUBCASE("inputs outside the unit interval are rejected") {
    CHECK(kind_of([&] { alignment_score(1.5, 0.5, params); }) == ErrorKind::Domain);
    CHECK(kind_of([&] { alignment_score(0.5, -0.1, params); }) == ErrorKind::Domain);
  }
  SUBCASE("non-finite exponents are rejected") {
    AlignmentParams bad;
    bad.alpha = std::numeric_limits<double>::infinity();
    CHECK(kind_of([&] { alignment_score(0.5, 0.5, bad); }) == ErrorKind::Domain);
  }
}

TEST_CASE("anchor assignment keeps the m best-aligned candidates") {
  AlignmentParams params;
  params.positive_count = 2;
  const std::vector<std::pair<double, double>> pairs = {
      {1.0, 1.0}, {1.0, 0.9}, {1.0, 0.8}, {1.0, 0.95}};
  const AnchorAssignment out = assign_anchors(pairs, params);
  CHECK(out.positives == std::vector<std::size_t>{0, 3});
  CHECK(out.negatives == std::vector<std::size_t>{1, 2});

  SUBCASE("ties resolve toward the lower index") {
    const std::vector<std::pair<double, double>> tied = {
        {0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}};
    const AnchorAssignment t = assign_anchors(tied, params);
    CHECK(t.positives == std::vector<std::size_t>{0, 1});
    CHECK(t.negatives == std::vector<std::size_t>{2, 3});
  }
  SUBCASE("m at least the candidate count marks everything positive") {
    params.positive_count = 10;
    const AnchorAssignment t = assign_anchors(pairs, params);
    CHECK(t.positives == std::vector<std::size_t>{0, 1, 2, 3});
    CHECK(t.negatives.empty());
  }
  SUBCASE("m of zero marks everything negative") {
    params.positive_count = 0;
    const AnchorAssignment t = assign_anchors(pairs, params);
    CHECK(t.positives.empty());
    CHECK(t.negatives == std::vector<std::size_t>{0, 1, 2, 3});
  }
}

TEST_CASE("composite loss fixtures") {
  SUBCASE("perfect predictions vanish") {
    const std::vector<LossPair> matched = {{1.0, true, 1.0, 1.0},
                                           {1.0, true, 1.0, 1.0}};
    const LossBreakdown out = composite_loss(matched, {}, 0);
    CHECK(out.classification <= 1e-9);
    CHECK(out.localization <= 1e-9);
    CHECK(out.confidence <= 1e-9);
    CHECK(out.total <= 1e-9);
    CHECK_FALSE(out.empty);
  }
  SUBCASE("single half-confident pair at iou one third") {
    const std::vector<LossPair> matched = {{1.0 / 3.0, true, 0.5, 0.5}};
    const LossBreakdown out = composite_loss(matched, {}, 0);
    const double ln2 = std::log(2.0);
    CHECK(std::abs(out.localization - 2.0 / 3.0) < 1e-12);
    CHECK(std::abs(out.classification - ln2) < 1e-12);
    CHECK(std::abs(out.confidence - ln2) < 1e-12);
    CHECK(std::abs(out.total - (2.0 / 3.0 + 2.0 * ln2)) < 1e-12);
  }
  SUBCASE("confidence term averages matched and unmatched together") {
    const std::vector<LossPair> matched = {{0.5, true, 0.8, 0.9}};
    const std::vector<double> unmatched = {0.2, 0.3};
    const LossBreakdown out = composite_loss(matched, unmatched, 0);
    CHECK(std::abs(out.localization - 0.5) < 1e-12);
    CHECK(std::abs(out.classification - -std::log(0.8)) < 1e-12);
    const double expected_conf =
        (-std::log(0.9) - std::log(1.0 - 0.2) - std::log(1.0 - 0.3)) / 3.0;
    CHECK(std::abs(out.confidence - expected_conf) < 1e-12);
    CHECK(std::abs(out.total - (out.classification + out.localization +
                                out.confidence)) < 1e-15);
  }
  SUBCASE("class mismatch flips the bce target") {
    const std::vector<LossPair> matched = {{1.0, false, 0.8, 1.0}};
    const LossBreakdown out = composite_loss(matched, {}, 0);
    CHECK(std::abs(out.classification - -std::log(1.0 - 0.8)) < 1e-12);
  }
  SUBCASE("missed truths alone leave zero loss terms but a non-empty result") {
    const LossBreakdown out = composite_loss({}, {}, 3);
    CHECK_FALSE(out.empty);
    CHECK(out.total == 0.0);
  }
  SUBCASE("no inputs at all is flagged empty") {
    const LossBreakdown out = composite_loss({}, {}, 0);
    CHECK(out.empty);
    CHECK(out.total == 0.0);
  }
  SUBCASE("out-of-range inputs are rejected") {
    const std::vector<LossPair> bad_iou = {{1.5, true, 0.5, 0.5}};
    CHECK(kind_of([&] { composite_loss(bad_iou, {}, 0); }) == ErrorKind::Domain);
    const std::vector<double> bad_conf = {-0.1};
    CHECK(kind_of([&] { composite_loss({}, bad_conf, 0); }) == ErrorKind::Domain);
  }
}

TEST_CASE("loss pairs read the detection fields") {
  Detection det;
  det.box = {0, 0, 2, 2};
  det.class_id = ObjectClass::Palm;
  det.confidence = 0.5;
  det.image_id = "a";
  GroundTruth truth;
  truth.box = {0, 1, 2, 3};
  truth.class_id = ObjectClass::Palm;
  truth.image_id = "a";

  const LossPair pair = make_loss_pair(det, truth);
  CHECK(pair.iou == 1.0 / 3.0);
  CHECK(pair.class_match);
  CHECK(pair.class_prob == 0.5);
  CHECK(pair.confidence == 0.5);

  truth.class_id = ObjectClass::Tree;
  CHECK_FALSE(make_loss_pair(det, truth).class_match);
}

TEST_CASE("nms fixtures") {
  auto det = [](double x1, double y1, double x2, double y2, double conf,
                ObjectClass cls = ObjectClass::Palm,
                std::string image = "img") {
    Detection d;
    d.box = {x1, y1, x2, y2};
    d.class_id = cls;
    d.confidence = conf;
    d.image_id = std::move(image);
    return d;
  };

  SUBCASE("overlapping lower-confidence box is suppressed") {
    const std::vector<Detection> in = {det(0, 0, 10, 10, 0.9),
                                       det(1, 1, 11, 11, 0.8),
                                       det(50, 50, 60, 60, 0.7)};
    const auto kept = nms(in, 0.0, 0.45);
    REQUIRE(kept.size() == 2);
    CHECK(kept[0].confidence == 0.9);
    CHECK(kept[1].confidence == 0.7);
  }
  SUBCASE("suppression is strict: iou equal to the threshold survives") {
    const std::vector<Detection> in = {det(0, 0, 2, 2, 0.9),
                                       det(0, 1, 2, 3, 0.8)};
    CHECK(nms(in, 0.0, 1.0 / 3.0).size() == 2);   // iou == threshold
    CHECK(nms(in, 0.0, 0.3333).size() == 1);      // just below
  }
  SUBCASE("confidence ties keep the earlier input") {
    const std::vector<Detection> in = {det(0, 0, 10, 10, 0.8),
                                       det(0, 0, 10, 9.5, 0.8)};
    const auto kept = nms(in, 0.0, 0.45);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].box.y2 == 10.0);
  }
  SUBCASE("confidence filter applies before anything else") {
    const std::vector<Detection> in = {det(0, 0, 10, 10, 0.2),
                                       det(50, 50, 60, 60, 0.9)};
    const auto kept = nms(in, 0.25, 0.45);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].confidence == 0.9);
  }
  SUBCASE("threshold-equal confidence is kept") {
    const std::vector<Detection> in = {det(0, 0, 10, 10, 0.25)};
    CHECK(nms(in, 0.25, 0.45).size() == 1);
  }
  SUBCASE("different classes never suppress each other") {
    const std::vector<Detection> in = {
        det(0, 0, 10, 10, 0.9, ObjectClass::Palm),
        det(0, 0, 10, 10, 0.8, ObjectClass::Tree)};
    CHECK(nms(in, 0.0, 0.45).size() == 2);
  }
  SUBCASE("different images never suppress each other") {
    const std::vector<Detection> in = {
        det(0, 0, 10, 10, 0.9, ObjectClass::Palm, "a"),
        det(0, 0, 10, 10, 0.8, ObjectClass::Palm, "b")};
    CHECK(nms(in, 0.0, 0.45).size() == 2);
  }
  SUBCASE("output is sorted by descending confidence") {
    const std::vector<Detection> in = {det(0, 0, 5, 5, 0.3),
                                       det(20, 20, 25, 25, 0.9),
                                       det(40, 40, 45, 45, 0.6)};
    const auto kept = nms(in, 0.0, 0.45);
    REQUIRE(kept.size() == 3);
    CHECK(kept[0].confidence == 0.9);
    CHECK(kept[1].confidence == 0.6);
    CHECK(kept[2].confidence == 0.3);
  }
  SUBCASE("invalid inputs are rejected") {
    CHECK(kind_of([&] { nms({}, -0.1, 0.45); }) == ErrorKind::Domain);
    CHECK(kind_of([&] { nms({}, 0.25, 1.5); }) == ErrorKind::Domain);
    const std::vector<Detection> bad_box = {det(5, 5, 5, 10, 0.5)};
    CHECK(kind_of([&] { nms(bad_box, 0.0, 0.45); }) == ErrorKind::Validation);
    const std::vector<Detection> bad_conf = {det(0, 0, 5, 5, 1.5)};
    CHECK(kind_of([&] { nms(bad_conf, 0.0, 0.45); }) == ErrorKind::Validation);
  }
}

TEST_CASE("nms agrees exactly with repeated max-selection") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> count(0, 10);
  std::uniform_int_distribution<int> conf_pick(0, 4);
  std::uniform_int_distribution<int> image_pick(0, 1);
  std::uniform_int_distribution<int> class_pick(0, 1);
  const double confidences[] = {0.3, 0.5, 0.5, 0.7, 0.9};  // deliberate ties
  const double conf_thresholds[] = {0.0, 0.4};
  const double iou_thresholds[] = {0.3, 0.5};

  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<Detection> in;
    const std::size_t n = count(rng);
    for (std::size_t i = 0; i < n; ++i) {
      Detection d;
      d.box = random_box(rng);
      d.confidence = confidences[conf_pick(rng)];
      d.image_id = image_pick(rng) ? "east" : "west";
      d.class_id = class_pick(rng) ? ObjectClass::Palm : ObjectClass::Tree;
      in.push_back(d);
    }
    const double conf_thr = conf_thresholds[trial % 2];
    const double iou_thr = iou_thresholds[(trial / 2) % 2];

    const auto kept = nms(in, conf_thr, iou_thr);
    const auto expected = oracle::nms_ref(in, conf_thr, iou_thr);
    CHECK(same_detections(kept, expected));

    // Survivor invariants: thresholds respected, no same-class same-image
    // pair overlaps beyond the threshold.
    for (std::size_t i = 0; i < kept.size(); ++i) {
      CHECK(kept[i].confidence >= conf_thr);
      for (std::size_t j = i + 1; j < kept.size(); ++j) {
        if (kept[i].class_id == kept[j].class_id &&
            kept[i].image_id == kept[j].image_id) {
          CHECK(iou(kept[i].box, kept[j].box) <= iou_thr);
        }
      }
    }
  }
}

TEST_CASE("letterbox fixtures") {
  SUBCASE("4000x3000 onto a 1280 canvas") {
    const auto t = LetterboxTransform::fit(1280, 4000.0, 3000.0);
    CHECK(t.scale == 0.32);
    CHECK(t.pad_x == 0.0);
    CHECK(t.pad_y == 160.0);

    const auto back = letterbox_to_original({0, 160, 320, 480}, t);
    REQUIRE(back.has_value());
    CHECK(back->x1 == 0.0);
    CHECK(back->y1 == 0.0);
    CHECK(back->x2 == 1000.0);
    CHECK(back->y2 == 1000.0);
  }
  SUBCASE("square image matching the canvas is the identity") {
    const auto t = LetterboxTransform::fit(640, 640.0, 640.0);
    CHECK(t.scale == 1.0);
    CHECK(t.pad_x == 0.0);
    CHECK(t.pad_y == 0.0);
    const BoundingBox box{12.5, 40.0, 300.0, 512.0};
    const BoundingBox mapped = original_to_letterbox(box, t);
    CHECK(mapped.x1 == box.x1);
    CHECK(mapped.y2 == box.y2);
  }
  SUBCASE("small image is upscaled with side pads") {
    const auto t = LetterboxTransform::fit(640, 200.0, 320.0);
    CHECK(t.scale == 2.0);
    CHECK(t.pad_x == 120.0);
    CHECK(t.pad_y == 0.0);
  }
  SUBCASE("coordinates clamp to the image bounds") {
    const auto t = LetterboxTransform::fit(1280, 4000.0, 3000.0);
    const auto back = letterbox_to_original({-50, 100, 640, 1200}, t);
    REQUIRE(back.has_value());
    CHECK(back->x1 == 0.0);
    CHECK(back->y1 == 0.0);
    CHECK(back->x2 == 2000.0);
    CHECK(back->y2 == 3000.0);
  }
  SUBCASE("a box entirely inside the padding is dropped") {
    const auto t = LetterboxTransform::fit(1280, 4000.0, 3000.0);
    CHECK_FALSE(letterbox_to_original({0, 0, 100, 150}, t).has_value());
    CHECK_FALSE(letterbox_to_original({0, 1130, 100, 1275}, t).has_value());
  }
  SUBCASE("degenerate sizes are rejected") {
    CHECK(kind_of([] { LetterboxTransform::fit(0, 100.0, 100.0); }) ==
          ErrorKind::Domain);
    CHECK(kind_of([] { LetterboxTransform::fit(640, 0.0, 100.0); }) ==
          ErrorKind::Domain);
  }
}

TEST_CASE("letterbox round-trips within 1e-9") {
  std::mt19937_64 rng(31);
  const double sizes[][2] = {{4000, 3000}, {1920, 1080}, {333, 777}};
  for (const auto& wh : sizes) {
    const auto t = LetterboxTransform::fit(1280, wh[0], wh[1]);
    std::uniform_real_distribution<double> px(0.0, wh[0]);
    std::uniform_real_distribution<double> py(0.0, wh[1]);
    for (int trial = 0; trial < 350; ++trial) {
      double x1 = px(rng), x2 = px(rng), y1 = py(rng), y2 = py(rng);
      if (x1 > x2) std::swap(x1, x2);
      if (y1 > y2) std::swap(y1, y2);
      if (x1 == x2 || y1 == y2) continue;
      const BoundingBox original{x1, y1, x2, y2};
      const auto back =
          letterbox_to_original(original_to_letterbox(original, t), t);
      REQUIRE(back.has_value());
      CHECK(std::abs(back->x1 - original.x1) < 1e-9);
      CHECK(std::abs(back->y1 - original.y1) < 1e-9);
      CHECK(std::abs(back->x2 - original.x2) < 1e-9);
      CHECK(std::abs(back->y2 - original.y2) < 1e-9);
    }
  }
}

TEST_CASE("grid scales ladder") {
  const GridScales g = grid_scales(1280);
  CHECK(g.grids[0] == std::pair<std::size_t, std::size_t>{80, 80});
  CHECK(g.grids[1] == std::pair<std::size_t, std::size_t>{40, 40});
  CHECK(g.grids[2] == std::pair<std::size_t, std::size_t>{20, 20});
  CHECK(g.boxes_per_cell == 3);

  const GridScales small = grid_scales(640);
  CHECK(small.grids[0].first == 40);
  CHECK(small.grids[1].first == 20);
  CHECK(small.grids[2].first == 10);

  CHECK(kind_of([] { grid_scales(1281); }) == ErrorKind::Domain);
  CHECK(kind_of([] { grid_scales(0); }) == ErrorKind::Domain);
  CHECK(kind_of([] { grid_scales(96); }) == ErrorKind::Domain);
}

TEST_CASE("average precision hand fixture is exactly one half") {
  // Ranked by confidence: a miss, then a hit on the single truth.
  std::vector<Detection> dets(2);
  dets[0].box = {100, 100, 110, 110};  // no overlap
  dets[0].confidence = 0.9;
  dets[0].image_id = "a";
  dets[1].box = {0, 0, 10, 10};  // perfect overlap
  dets[1].confidence = 0.8;
  dets[1].image_id = "a";
  std::vector<GroundTruth> truths(1);
  truths[0].box = {0, 0, 10, 10};
  truths[0].image_id = "a";

  CHECK(average_precision(dets, truths, ObjectClass::Palm, 0.5) == 0.5);
}

TEST_CASE("perfect detections score full marks") {
  std::mt19937_64 rng(77);
  std::vector<GroundTruth> truths;
  std::vector<Detection> dets;
  for (int i = 0; i < 12; ++i) {
    GroundTruth t;
    t.box = {static_cast<double>(i * 30), 0.0, static_cast<double>(i * 30 + 20),
             20.0};
    t.class_id = i % 2 ? ObjectClass::Palm : ObjectClass::Tree;
    t.image_id = i % 3 == 0 ? "a" : "b";
    truths.push_back(t);
    Detection d;
    d.box = t.box;
    d.class_id = t.class_id;
    d.image_id = t.image_id;
    d.confidence = 0.9;
    dets.push_back(d);
  }
  const EvalReport report = evaluate_detections(dets, truths, 0.5);
  CHECK(std::abs(report.map50 - 1.0) < 1e-12);
  CHECK(std::abs(report.map50_95 - 1.0) < 1e-12);
  CHECK(report.precision == 1.0);
  CHECK(report.recall == 1.0);
  CHECK_FALSE(report.degenerate);
}

TEST_CASE("average precision agrees with the brute-force reference") {
  std::mt19937_64 rng(500);
  std::uniform_int_distribution<std::size_t> count(0, 8);
  std::uniform_int_distribution<int> image_pick(0, 4);
  std::uniform_int_distribution<int> class_pick(0, 1);
  std::uniform_int_distribution<int> conf_pick(0, 8);

  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Detection> dets;
    std::vector<GroundTruth> truths;
    const std::size_t n_det = count(rng), n_truth = count(rng);
    for (std::size_t i = 0; i < n_det; ++i) {
      Detection d;
      d.box = random_box(rng);
      d.confidence = 0.1 * static_cast<double>(conf_pick(rng) + 1);
      d.image_id = std::string(1, static_cast<char>('a' + image_pick(rng)));
      d.class_id = class_pick(rng) ? ObjectClass::Palm : ObjectClass::Tree;
      dets.push_back(d);
    }
    for (std::size_t i = 0; i < n_truth; ++i) {
      GroundTruth t;
      t.box = random_box(rng);
      t.image_id = std::string(1, static_cast<char>('a' + image_pick(rng)));
      t.class_id = class_pick(rng) ? ObjectClass::Palm : ObjectClass::Tree;
      truths.push_back(t);
    }
    for (ObjectClass cls : {ObjectClass::Palm, ObjectClass::Tree}) {
      for (double threshold : kCocoIouThresholds) {
        const double got = average_precision(dets, truths, cls, threshold);
        const double want = oracle::ap_ref(dets, truths, cls, threshold);
        CHECK(std::abs(got - want) < 1e-9);
      }
    }
  }
}

TEST_CASE("trailing false positives never change ap, leading ones never raise it") {
  std::mt19937_64 rng(321);
  std::uniform_int_distribution<std::size_t> count(1, 6);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Detection> dets;
    std::vector<GroundTruth> truths;
    for (std::size_t i = 0; i < count(rng); ++i) {
      Detection d;
      d.box = random_box(rng);
      d.confidence = 0.2 + 0.1 * static_cast<double>(i);
      d.image_id = "a";
      dets.push_back(d);
    }
    for (std::size_t i = 0; i < count(rng); ++i) {
      GroundTruth t;
      t.box = random_box(rng);
      t.image_id = "a";
      truths.push_back(t);
    }
    const double base = average_precision(dets, truths, ObjectClass::Palm, 0.5);

    Detection stray;
    stray.box = {900, 900, 910, 910};  // overlaps nothing
    stray.image_id = "a";
    stray.confidence = 0.01;  // ranked last
    auto with_trailing = dets;
    with_trailing.push_back(stray);
    CHECK(average_precision(with_trailing, truths, ObjectClass::Palm, 0.5) ==
          base);

    stray.confidence = 0.99;  // ranked first
    auto with_leading = dets;
    with_leading.push_back(stray);
    CHECK(average_precision(with_leading, truths, ObjectClass::Palm, 0.5) <=
          base + 1e-15);
  }
}

TEST_CASE("evaluation report structure") {
  auto palm_det = [](double conf, const BoundingBox& box) {
    Detection d;
    d.box = box;
    d.confidence = conf;
    d.image_id = "a";
    return d;
  };

  SUBCASE("detection-only class is degenerate and excluded from the mean") {
    std::vector<GroundTruth> truths(1);
    truths[0].box = {0, 0, 10, 10};
    truths[0].class_id = ObjectClass::Palm;
    truths[0].image_id = "a";
    std::vector<Detection> dets = {palm_det(0.9, {0, 0, 10, 10})};
    Detection tree;
    tree.box = {50, 50, 60, 60};
    tree.class_id = ObjectClass::Tree;
    tree.confidence = 0.8;
    tree.image_id = "a";
    dets.push_back(tree);

    const EvalReport report = evaluate_detections(dets, truths, 0.5);
    REQUIRE(report.per_class.size() == 2);
    CHECK_FALSE(report.degenerate);
    CHECK(std::abs(report.map50 - 1.0) < 1e-12);  // tree AP not averaged in
    bool saw_degenerate_tree = false;
    for (const auto& entry : report.per_class) {
      if (entry.class_id == ObjectClass::Tree) {
        saw_degenerate_tree = entry.degenerate;
      }
    }
    CHECK(saw_degenerate_tree);
  }
  SUBCASE("no truths at all flags the whole report") {
    const std::vector<Detection> dets = {palm_det(0.9, {0, 0, 10, 10})};
    const EvalReport report = evaluate_detections(dets, {}, 0.5);
    CHECK(report.degenerate);
    CHECK(report.map50 == 0.0);
    CHECK(report.recall == 0.0);
  }
  SUBCASE("operating point filters by confidence before matching") {
    std::vector<GroundTruth> truths(2);
    truths[0].box = {0, 0, 10, 10};
    truths[0].image_id = "a";
    truths[1].box = {100, 100, 110, 110};
    truths[1].image_id = "a";
    const std::vector<Detection> dets = {
        palm_det(0.9, {0, 0, 10, 10}),       // matches truth 0
        palm_det(0.3, {500, 500, 510, 510})  // false positive, low confidence
    };
    const EvalReport strict = evaluate_detections(dets, truths, 0.5);
    CHECK(strict.precision == 1.0);
    CHECK(strict.recall == 0.5);
    const EvalReport lax = evaluate_detections(dets, truths, 0.0);
    CHECK(lax.precision == 0.5);
    CHECK(lax.recall == 0.5);
    CHECK(lax.operating_confidence == 0.0);
  }
  SUBCASE("bad arguments are rejected") {
    CHECK(kind_of([] {
      evaluate_detections({}, {}, std::span<const double>{}, 0.5);
    }) == ErrorKind::Domain);
    CHECK(kind_of([] { evaluate_detections({}, {}, 1.5); }) == ErrorKind::Domain);
  }
}

TEST_CASE("detection file loading") {
  const fs::path dir = temp_dir();

  SUBCASE("happy path with comments and blank lines") {
    const fs::path path = dir / "dets.txt";
    std::ofstream(path) << "# survey flight 12\n\nspace=original\n"
                        << "img1 palm 0.97 10 20 110 220\n"
                        << "img2 tree 0.5 0 0 5 5\n";
    const DetectionFile file = load_detections(path);
    CHECK(file.space == CoordinateSpace::Original);
    REQUIRE(file.detections.size() == 2);
    CHECK(file.detections[0].image_id == "img1");
    CHECK(file.detections[0].class_id == ObjectClass::Palm);
    CHECK(file.detections[0].confidence == 0.97);
    CHECK(file.detections[0].box.x1 == 10.0);
    CHECK(file.detections[0].box.y2 == 220.0);
    CHECK(file.detections[1].class_id == ObjectClass::Tree);
  }
  SUBCASE("network space header") {
    const fs::path path = dir / "net.txt";
    std::ofstream(path) << "space=network\nimg1 palm 0.5 0 0 64 64\n";
    CHECK(load_detections(path).space == CoordinateSpace::Network);
  }
  SUBCASE("header only yields an empty set") {
    const fs::path path = dir / "empty.txt";
    std::ofstream(path) << "space=original\n";
    CHECK(load_detections(path).detections.empty());
  }
  SUBCASE("missing header is a format error") {
    const fs::path path = dir / "no_header.txt";
    std::ofstream(path) << "img1 palm 0.5 0 0 64 64\n";
    CHECK(kind_of([&] { load_detections(path); }) == ErrorKind::Format);
    const fs::path blank = dir / "blank.txt";
    std::ofstream(blank) << "\n";
    CHECK(kind_of([&] { load_detections(blank); }) == ErrorKind::Format);
  }
  SUBCASE("all bad lines are reported together with their numbers") {
    const fs::path path = dir / "bad.txt";
    std::ofstream(path) << "space=original\n"
                        << "img1 palm 0.9 10 10 110 110\n"
                        << "img1 palm 0.9 110 10 10 110\n"   // x2 < x1
                        << "img1 palm 1.5 0 0 10 10\n"       // confidence
                        << "img1 shrub 0.5 0 0 10 10\n";     // class
    try {
      load_detections(path);
      FAIL("expected a validation error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Validation);
      const std::string what = e.what();
      CHECK(what.find("line 3") != std::string::npos);
      CHECK(what.find("line 4") != std::string::npos);
      CHECK(what.find("line 5") != std::string::npos);
      CHECK(what.find("; ") != std::string::npos);
    }
  }
  SUBCASE("wrong token count is rejected") {
    const fs::path path = dir / "tokens.txt";
    std::ofstream(path) << "space=original\nimg1 palm 0.9 10 10 110\n";
    CHECK(kind_of([&] { load_detections(path); }) == ErrorKind::Validation);
  }
  SUBCASE("non-numeric coordinate is rejected") {
    const fs::path path = dir / "nan.txt";
    std::ofstream(path) << "space=original\nimg1 palm 0.9 x 10 110 110\n";
    CHECK(kind_of([&] { load_detections(path); }) == ErrorKind::Validation);
  }
  SUBCASE("missing file") {
    CHECK(kind_of([&] { load_detections(dir / "absent.txt"); }) == ErrorKind::Io);
  }
}

TEST_CASE("ground truth loading") {
  const fs::path dir = temp_dir();

  SUBCASE("happy path with an optional space header") {
    const fs::path path = dir / "truths.txt";
    std::ofstream(path) << "space=original\nimg1 palm 10 20 110 220\n"
                        << "img2 tree 0 0 5 5\n";
    const auto truths = load_truths(path);
    REQUIRE(truths.size() == 2);
    CHECK(truths[0].image_id == "img1");
    CHECK(truths[0].box.y1 == 20.0);
    CHECK(truths[1].class_id == ObjectClass::Tree);
  }
  SUBCASE("header-free file works") {
    const fs::path path = dir / "bare.txt";
    std::ofstream(path) << "img1 palm 10 20 110 220\n";
    CHECK(load_truths(path).size() == 1);
  }
  SUBCASE("empty file yields no truths") {
    const fs::path path = dir / "none.txt";
    std::ofstream(path) << "";
    CHECK(load_truths(path).empty());
  }
  SUBCASE("bad lines are reported with numbers") {
    const fs::path path = dir / "bad.txt";
    std::ofstream(path) << "img1 palm 10 20 110 220\nimg1 palm 110 20 10 220\n";
    CHECK_THROWS_WITH_AS(load_truths(path), doctest::Contains("line 2"), Error);
  }
}

TEST_CASE("detection files round-trip exactly") {
  const fs::path dir = temp_dir();
  std::mt19937_64 rng(888);
  std::uniform_real_distribution<double> conf(0.0, 1.0);
  std::vector<Detection> dets;
  for (int i = 0; i < 20; ++i) {
    Detection d;
    d.box = random_box(rng);
    d.box.x1 += 0.125;  // exercise fractional coordinates
    d.confidence = conf(rng);
    d.class_id = i % 2 ? ObjectClass::Palm : ObjectClass::Tree;
    d.image_id = "img" + std::to_string(i % 3);
    dets.push_back(d);
  }
  const fs::path path = dir / "roundtrip.txt";
  save_detections(path, CoordinateSpace::Network, dets);
  const DetectionFile back = load_detections(path);
  CHECK(back.space == CoordinateSpace::Network);
  CHECK(same_detections(back.detections, dets));
}

TEST_CASE("eval report serializes to parseable json") {
  const fs::path dir = temp_dir();
  std::vector<GroundTruth> truths(1);
  truths[0].box = {0, 0, 10, 10};
  truths[0].image_id = "a";
  std::vector<Detection> dets(1);
  dets[0].box = {0, 0, 10, 10};
  dets[0].confidence = 0.9;
  dets[0].image_id = "a";
  const EvalReport report = evaluate_detections(dets, truths, 0.25);

  const fs::path path = dir / "eval.json";
  save_eval_report(path, report);
  std::ifstream in(path);
  nlohmann::json doc;
  in >> doc;
  CHECK(doc.at("precision").get<double>() == report.precision);
  CHECK(doc.at("map50").get<double>() == report.map50);
  CHECK(doc.at("map50_95").get<double>() == report.map50_95);
  CHECK(doc.at("operating_confidence").get<double>() == 0.25);
  CHECK(doc.at("degenerate").get<bool>() == false);
  CHECK(doc.at("per_class").contains("palm"));
  CHECK(doc.at("per_class").at("palm").at("ap50").get<double>() == 1.0);
}

TEST_CASE("object class and coordinate space tokens") {
  CHECK(parse_object_class("palm") == ObjectClass::Palm);
  CHECK(parse_object_class("tree") == ObjectClass::Tree);
  CHECK(std::string(to_string(ObjectClass::Palm)) == "palm");
  CHECK(std::string(to_string(CoordinateSpace::Network)) == "network");
  CHECK(std::string(to_string(CoordinateSpace::Original)) == "original");
  CHECK(kind_of([] { parse_object_class("bush"); }) == ErrorKind::Validation);
}

TEST_CASE("sigmoid midpoint") {
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(50.0) > 0.999);
  CHECK(sigmoid(-50.0) < 0.001);
}
