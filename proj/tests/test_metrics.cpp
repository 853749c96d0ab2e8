#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "test_support.hpp"
#include "wbk/error.hpp"
#include "wbk/metrics.hpp"

using namespace wbk;

TEST_CASE("confusion counts and overlap scores") {
  const Grid pred(2, 3, {1, 1, 0, 0, 0.6f, 0.2f});
  const Grid gt(2, 3, {1, 0, 0, 1, 1, 0});
  const ConfusionCounts c = confusion_counts(pred, gt);
  CHECK(c == ConfusionCounts{2, 1, 1, 2});
  CHECK(c.total() == 6);

  const OverlapScores o = dsc_miou(c);
  CHECK(o.dsc == doctest::Approx(4.0 / 6.0));
  CHECK(o.iou_fg == doctest::Approx(0.5));
  CHECK(o.miou == doctest::Approx((0.5 + 0.5) / 2.0));

  const RateScores r = acc_sen_spe(c);
  CHECK(r.acc == doctest::Approx(4.0 / 6.0));
  CHECK(r.sen == doctest::Approx(2.0 / 3.0));
  CHECK(r.spe == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("empty versus empty scores are one") {
  const ConfusionCounts c = confusion_counts(Grid(3, 3), Grid(3, 3));
  const OverlapScores o = dsc_miou(c);
  CHECK(o.dsc == 1.0);
  CHECK(o.miou == 1.0);
  const MetricsRow row = evaluate_pair(0, Grid(3, 3), Grid(3, 3));
  CHECK(row.hd95 == 0.0);
}

TEST_CASE("percentile uses linear interpolation") {
  CHECK(percentile_linear({3, 1, 2, 4}, 50.0) == doctest::Approx(2.5));
  CHECK(percentile_linear({0, 10}, 95.0) == doctest::Approx(9.5));
  CHECK(percentile_linear({7}, 95.0) == 7.0);
}

TEST_CASE("distance transform equals brute force") {
  CounterRng rng(31);
  for (int k = 0; k < 20; ++k) {
    const int h = testing::random_dim(rng, 1, 20), w = testing::random_dim(rng, 1, 20);
    Grid m = testing::random_binary(rng, h, w, 0.1f);
    m.at(testing::random_dim(rng, 0, h - 1), testing::random_dim(rng, 0, w - 1)) = 1.0f;
    const std::vector<double> d = distance_to_set(m);
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        double best = 1e300;
        for (int a = 0; a < h; ++a) {
          for (int b = 0; b < w; ++b) {
            if (m.at(a, b) >= 0.5f) best = std::min(best, std::hypot(double(i - a), double(j - b)));
          }
        }
        CHECK(d[static_cast<std::size_t>(i) * w + j] == doctest::Approx(best).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("hd95 matches the all-pairs oracle") {
  CounterRng rng(32);
  for (int k = 0; k < 40; ++k) {
    const int h = testing::random_dim(rng, 1, 40), w = testing::random_dim(rng, 1, 40);
    Grid a = testing::random_binary(rng, h, w, 0.05f);
    Grid b = testing::random_binary(rng, h, w, 0.05f);
    a.at(0, 0) = 1.0f;
    b.at(h - 1, w - 1) = 1.0f;
    CHECK(std::abs(hd95(a, b) - oracle::hd95_brute(a, b)) <= 1e-9);
  }
}

TEST_CASE("hd95 basics") {
  Grid a(10, 10), b(10, 10);
  a.at(2, 2) = 1.0f;
  b.at(2, 7) = 1.0f;
  CHECK(hd95(a, b) == doctest::Approx(5.0));
  CHECK(hd95(a, a) == 0.0);
  CHECK_THROWS_AS(hd95(a, Grid(10, 10)), Error);
  CHECK_THROWS_AS(hd95(a, Grid(9, 10)), ShapeError);
  // One empty side in a full evaluation scores the image diagonal.
  CHECK(evaluate_pair(3, Grid(6, 8), Grid(6, 8, 1.0f)).hd95 == doctest::Approx(10.0));
}

TEST_CASE("mean row averages every column") {
  std::vector<MetricsRow> rows{{0, 0.5, 0.4, 0.3, 0.9, 0.8, 0.7, 2.0}, {1, 1.0, 0.6, 0.5, 0.7, 0.6, 0.5, 4.0}};
  const MetricsRow m = mean_row(rows);
  CHECK(m.dsc == doctest::Approx(0.75));
  CHECK(m.iou_fg == doctest::Approx(0.5));
  CHECK(m.hd95 == doctest::Approx(3.0));
}
