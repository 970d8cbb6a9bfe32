#include <doctest.h>

#include <random>

#include "detection_scenarios.hpp"
#include "oracles.hpp"
#include "support.hpp"
#include "valimetrics/error.hpp"
#include "valimetrics/perf.hpp"

using namespace valimetrics;
using testing::det;
using testing::preds;

TEST_CASE("iou examples") {
  const BBox a{0, 0, 10, 10};
  CHECK(iou(a, a) == 1.0);
  CHECK(iou(a, {5, 0, 15, 10}) == doctest::Approx(50.0 / 150.0));
  CHECK(iou(a, {20, 20, 30, 30}) == 0.0);
  CHECK(iou(a, {10, 0, 20, 10}) == 0.0);  // touching edges
}

TEST_CASE("iou matches cell counting on integer boxes") {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 300; ++t) {
    int v[8];
    for (int k = 0; k < 8; k += 2) {
      v[k] = testing::rand_int(rng, 0, 12);
      v[k + 1] = testing::rand_int(rng, 0, 12);
    }
    const int ax0 = std::min(v[0], v[2]), ax1 = std::max(v[0], v[2]) + 1;
    const int ay0 = std::min(v[1], v[3]), ay1 = std::max(v[1], v[3]) + 1;
    const int bx0 = std::min(v[4], v[6]), bx1 = std::max(v[4], v[6]) + 1;
    const int by0 = std::min(v[5], v[7]), by1 = std::max(v[5], v[7]) + 1;
    CHECK(iou({double(ax0), double(ay0), double(ax1), double(ay1)}, {double(bx0), double(by0), double(bx1), double(by1)}) ==
          doctest::Approx(oracle::iou_grid(ax0, ay0, ax1, ay1, bx0, by0, bx1, by1)).epsilon(1e-12));
  }
}

TEST_CASE("greedy matching examples") {
  const auto A = det(1, 0, 0, 10, 10);
  const auto r = match_greedy(preds({A, det(1, 20, 0, 30, 10)}), preds({A, det(1, 20, 0, 30, 10)}), 0.5);
  CHECK(r.matches.size() == 2);
  for (const auto& m : r.matches) CHECK(m.iou == 1.0);

  // A' overlaps 0.8, B' overlaps 0.6 but scores higher and claims first
  const auto res = match_greedy(preds({A}), preds({det(1, 0, 0, 10, 8, 0.5), det(1, 0, 0, 10, 6, 0.9)}), 0.5);
  REQUIRE(res.matches.size() == 1);
  CHECK(res.matches[0].mod_idx == 1);
  CHECK(res.matches[0].iou == doctest::Approx(0.6));
  CHECK(res.unmatched_mod == std::vector<std::size_t>{0});

  const auto empty = match_greedy(preds({}), preds({det(1, 0, 0, 1, 1)}), 0.5);
  CHECK(empty.matches.empty());
  CHECK(empty.unmatched_mod == std::vector<std::size_t>{0});

  CHECK_THROWS_AS(match_greedy(preds({A}, "yolo"), preds({A}, "detr"), 0.5), Error);
}

TEST_CASE("claim order breaks score ties by area then input order") {
  const std::vector<Detection> d{det(1, 0, 0, 2, 2, 0.5), det(1, 0, 0, 4, 4, 0.5), det(1, 0, 0, 1, 1, 0.9),
                                 det(1, 0, 0, 2, 2, 0.5)};
  CHECK(claim_order(d) == std::vector<std::size_t>{2, 1, 0, 3});
}

TEST_CASE("f1 and mean iou examples") {
  const auto A = det(1, 0, 0, 10, 10), B = det(1, 30, 30, 40, 40);
  CHECK(f1(preds({A, B}), preds({A, B})) == 1.0);
  CHECK(f1(preds({A, B}), preds({A})) == doctest::Approx(2.0 / 3.0));
  CHECK(f1(preds({}), preds({})) == 1.0);
  CHECK(mean_iou_det(preds({A, B}), preds({A, B})) == 1.0);
  CHECK(mean_iou_det(preds({A, B}), preds({A})) == doctest::Approx(0.5));
  CHECK(mean_iou_det(preds({A}), preds({})) == 0.0);
}

TEST_CASE("average precision examples") {
  const auto A = det(1, 0, 0, 10, 10);
  CHECK(*map(preds({A, det(2, 20, 20, 30, 30)}), preds({A, det(2, 20, 20, 30, 30)})) == 1.0);
  CHECK(*average_precision(preds({A}), preds({det(1, 50, 50, 60, 60, 0.9), det(1, 0, 0, 10, 10, 0.8)}), 0.5) ==
        doctest::Approx(0.5));
  const auto small = det(1, 0, 0, 10, 10), large = det(1, 100, 100, 200, 200);
  CHECK(*map_small(preds({small, large}), preds({small, large})) == 1.0);
  // a miss on the large box does not count against the small-object score
  CHECK(*map_small(preds({small, large}), preds({small})) == 1.0);
  CHECK_FALSE(map_small(preds({large}), preds({large})).has_value());
}

TEST_CASE("pinned detection scenarios") {
  for (const auto& s : scenarios::all()) {
    CAPTURE(s.name);
    const auto r = preds(s.ref), m = preds(s.mod);
    CHECK(f1(r, m) == doctest::Approx(s.f1).epsilon(1e-12));
    CHECK(mean_iou_det(r, m) == doctest::Approx(s.mean_iou).epsilon(1e-12));
    CHECK(map(r, m).value_or(-1) == doctest::Approx(s.map).epsilon(1e-12));
  }
}

TEST_CASE("prediction sets clamp and filter") {
  const auto p = preds({det(1, -5, -5, 5, 5), det(1, 50, 50, 60, 60), det(1, 2, 2, 4, 4, 0.1)});
  const auto c = p.clamped(20, 20);
  REQUIRE(c.detections.size() == 2);
  CHECK(c.detections[0].bbox.x_min == 0.0);
  CHECK(p.filtered(0.25).detections.size() == 2);
}

TEST_CASE("evaluate_detection filters reference but ranks every modified box for AP") {
  const auto A = det(1, 0, 0, 10, 10, 0.9);
  DetectionOptions o;
  // the matching mod box is below the confidence cut: invisible to F1, still counts for AP
  const auto p = evaluate_detection(preds({A}), preds({det(1, 0, 0, 10, 10, 0.1)}), o, 0.0);
  CHECK(*p.f1 == 0.0);
  CHECK(*p.map == 1.0);
  CHECK_FALSE(p.valid);
}

TEST_CASE("segmentation examples") {
  ClassMask same{3, 2, {0, 1, 1, 2, 2, 0}};
  const auto s = seg_metrics(same, same);
  CHECK(s.mean_dice == 1.0);
  CHECK(s.mean_iou == 1.0);
  CHECK(s.mean_pixel_acc == 1.0);

  ClassMask r{20, 10, std::vector<std::uint8_t>(200, 0)}, m = r;
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 20; ++x) {
      r.classes[y * 20 + x] = x < 10;
      m.classes[y * 20 + x] = x >= 5 && x < 15;
    }
  const auto half = seg_metrics(r, m);
  CHECK(half.dice.at(1) == doctest::Approx(0.5));
  const auto o = oracle::seg_metrics(r.classes, m.classes);
  CHECK(half.mean_dice == doctest::Approx(o.mean_dice));
  CHECK(half.mean_iou == doctest::Approx(o.mean_iou));

  ClassMask one{2, 2, {1, 1, 1, 1}}, three{2, 2, {1, 1, 1, 0}};
  CHECK(seg_metrics(one, three).mean_pixel_acc == doctest::Approx(0.75));
}

TEST_CASE("segmentation ignore label") {
  ClassMask all_ignored{2, 1, {255, 255}}, any{2, 1, {0, 1}};
  CHECK_THROWS_AS(seg_metrics(all_ignored, any), Error);
  ClassMask r{3, 1, {1, 255, 2}}, m{3, 1, {1, 7, 2}};
  const auto s = seg_metrics(r, m);
  CHECK(s.mean_dice == 1.0);  // class 7 only appears under an ignored pixel
  CHECK_THROWS_AS(seg_metrics(ClassMask{2, 1, {0, 0}}, ClassMask{1, 2, {0, 0}}), Error);
}

TEST_CASE("segmentation agrees with pixel enumeration") {
  std::mt19937_64 rng(22);
  for (int t = 0; t < 100; ++t) {
    const int w = testing::rand_int(rng, 1, 8), h = testing::rand_int(rng, 1, 8);
    ClassMask r{w, h, {}}, m{w, h, {}};
    for (int i = 0; i < w * h; ++i) {
      const int a = testing::rand_int(rng, 0, 4), b = testing::rand_int(rng, 0, 4);
      r.classes.push_back(static_cast<std::uint8_t>(a == 4 ? 255 : a));
      m.classes.push_back(static_cast<std::uint8_t>(b == 4 ? 255 : b));
    }
    if (std::all_of(r.classes.begin(), r.classes.end(), [](int c) { return c == 255; })) continue;
    const auto got = seg_metrics(r, m);
    const auto want = oracle::seg_metrics(r.classes, m.classes);
    CHECK(oracle::rel_close(got.mean_dice, want.mean_dice));
    CHECK(oracle::rel_close(got.mean_iou, want.mean_iou));
    CHECK(oracle::rel_close(got.mean_pixel_acc, want.mean_pixel_acc));
  }
}

TEST_CASE("validity examples") {
  const auto A = det(1, 0, 0, 10, 10);
  CHECK(evaluate_detection(preds({A}), preds({A}), {}, 0.0).valid);
  PerformanceDelta p;
  p.f1 = 0.99;
  p.mean_iou = p.map = 1.0;
  CHECK_FALSE(is_valid(p, 0.0));
  p.f1 = 0.95;
  p.mean_iou = 0.96;
  p.map = 0.97;
  CHECK(is_valid(p, 0.05));
}

TEST_CASE("prediction files") {
  const auto plain = parse_predictions(
      R"([{"image_id":"a","class_id":1,"bbox":[0,0,4,4],"score":0.5},
          {"image_id":"a","class_id":2,"bbox":[1,1,3,3],"score":0.7,"modification":"jpeg:5"}])",
      "yolo");
  CHECK(plain.model_id == "yolo");
  CHECK(plain.lookup("a").detections.size() == 1);
  CHECK(plain.lookup("a", "jpeg:5").detections.size() == 1);
  CHECK(plain.lookup("a", "jpeg:90").detections.size() == 1);  // falls back to untagged
  CHECK(plain.lookup("zzz").detections.empty());

  const auto named = parse_predictions(R"({"model_id":"detr","predictions":[]})", "x");
  CHECK(named.model_id == "detr");
  CHECK_THROWS_AS(parse_predictions(R"([{"image_id":"a","class_id":1,"bbox":[4,4,0,0],"score":1}])", "m"), Error);
  CHECK_THROWS_AS(parse_predictions("{not json", "m"), Error);
}

TEST_CASE("masks round-trip through PNG") {
  testing::TempDir dir("mask");
  ClassMask m{3, 2, {0, 1, 2, 255, 7, 0}};
  save_mask(dir / "m.png", m);
  const ClassMask back = load_mask(dir / "m.png");
  CHECK(back.width == 3);
  CHECK(back.classes == m.classes);
}

TEST_CASE("f1 and mean iou are symmetric when scores are equal") {
  std::mt19937_64 rng(23);
  for (int t = 0; t < 100; ++t) {
    std::vector<Detection> a, b;
    for (auto* side : {&a, &b}) {
      for (int k = testing::rand_int(rng, 0, 4); k > 0; --k) {
        const double x = testing::rand_int(rng, 0, 20), y = testing::rand_int(rng, 0, 20);
        side->push_back(det(testing::rand_int(rng, 0, 1), x, y, x + testing::rand_int(rng, 3, 10),
                            y + testing::rand_int(rng, 3, 10)));
      }
    }
    CHECK(f1(preds(a), preds(b)) == doctest::Approx(f1(preds(b), preds(a))));
    CHECK(mean_iou_det(preds(a), preds(b)) == doctest::Approx(mean_iou_det(preds(b), preds(a))));
  }
}

namespace {

// Best total IoU over every one-to-one assignment above threshold.
double optimal_assignment(const std::vector<Detection>& ref, const std::vector<Detection>& mod, double thr,
                          std::size_t i = 0, std::vector<bool> used = {}) {
  if (used.empty()) used.assign(ref.size(), false);
  if (i == mod.size()) return 0.0;
  double best = optimal_assignment(ref, mod, thr, i + 1, used);
  for (std::size_t r = 0; r < ref.size(); ++r) {
    if (used[r] || ref[r].class_id != mod[i].class_id) continue;
    const double v = iou(ref[r].bbox, mod[i].bbox);
    if (v < thr) continue;
    used[r] = true;
    best = std::max(best, v + optimal_assignment(ref, mod, thr, i + 1, used));
    used[r] = false;
  }
  return best;
}

}  // namespace

TEST_CASE("greedy matching never beats the optimal assignment") {
  for (const auto& s : scenarios::all()) {
    CAPTURE(s.name);
    const auto m = match_greedy(preds(s.ref), preds(s.mod), 0.5);
    double sum = 0;
    for (const auto& x : m.matches) sum += x.iou;
    const double best = optimal_assignment(s.ref, s.mod, 0.5);
    CHECK(sum <= best + 1e-12);
  }
  // unique row/column maxima: greedy finds the optimum
  const std::vector<Detection> ref{det(1, 0, 0, 10, 10), det(1, 20, 0, 30, 10)};
  const std::vector<Detection> mod{det(1, 1, 0, 11, 10, 0.4), det(1, 21, 1, 31, 11, 0.9)};
  const auto m = match_greedy(preds(ref), preds(mod), 0.5);
  double sum = 0;
  for (const auto& x : m.matches) sum += x.iou;
  CHECK(sum == doctest::Approx(optimal_assignment(ref, mod, 0.5)));
}
