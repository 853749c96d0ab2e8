#include <doctest.h>

#include <cmath>
#include <numbers>

#include "test_support.hpp"
#include "wbk/error.hpp"
#include "wbk/losses.hpp"

using namespace wbk;

namespace {

// Straight double-precision versions of the two base losses.
double bce_ref(const Grid& p, const Grid& y, double eps) {
  double acc = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double q = std::clamp(static_cast<double>(p.data[k]), eps, 1.0 - eps);
    acc += y.data[k] * std::log(q) + (1.0 - y.data[k]) * std::log(1.0 - q);
  }
  return -acc / static_cast<double>(p.size());
}

double dice_ref(const Grid& p, const Grid& y, double eps) {
  double inter = 0.0, sp = 0.0, sy = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    inter += p.data[k] * y.data[k];
    sp += p.data[k];
    sy += y.data[k];
  }
  return 1.0 - (2.0 * inter + eps) / (sp + sy + eps);
}

}  // namespace

TEST_CASE("bce and dice unit values") {
  const Grid y(4, 4, {1, 0, 0, 1, 1, 1, 0, 0, 0, 0, 0, 1, 1, 0, 1, 0});
  CHECK(bce_loss(Tensor(Shape{1, 1, 4, 4}, 0.5f), y).item() == doctest::Approx(std::numbers::ln2).epsilon(1e-6));

  Grid a(8, 8), b(8, 8);
  for (int j = 0; j < 8; ++j) {
    a.at(2, j) = 1.0f;
    b.at(5, j) = 1.0f;
  }
  CHECK(dice_loss(Tensor::from_grid(a), b, 1.0f).item() == doctest::Approx(16.0 / 17.0).epsilon(1e-6));
  CHECK(dice_loss(Tensor::from_grid(a), a, 1.0f).item() == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("bce and dice agree with double references on random inputs") {
  CounterRng rng(21);
  for (int k = 0; k < 20; ++k) {
    const Grid p = testing::random_soft(rng, 7, 9);
    const Grid y = testing::random_binary(rng, 7, 9, 0.4f);
    CHECK(bce_loss(Tensor::from_grid(p), y).item() == doctest::Approx(bce_ref(p, y, 1e-7)).epsilon(1e-5));
    CHECK(dice_loss(Tensor::from_grid(p), y).item() == doctest::Approx(dice_ref(p, y, 1.0)).epsilon(1e-5));
  }
}

TEST_CASE("bce clamps so saturated predictions stay finite") {
  Grid y(2, 2, {1, 0, 1, 0});
  const double v = bce_loss(Tensor(Shape{1, 1, 2, 2}, std::vector<float>{0, 1, 0, 1}), y).item();
  CHECK(std::isfinite(v));
  CHECK(v > 10.0);
}

TEST_CASE("loss shape mismatch is rejected") {
  CHECK_THROWS_AS(bce_loss(Tensor(Shape{1, 1, 3, 3}), Grid(3, 4)), ShapeError);
  CHECK_THROWS_AS(dice_loss(Tensor(Shape{2, 1, 3, 3}), Grid(3, 3)), ShapeError);
}

TEST_CASE("branch and weighted mm2b losses") {
  const BoxMask b{rasterize({1, 1, 4, 4}, 6, 6)};
  const Tensor exact = Tensor::from_grid(b.grid);
  CHECK(branch_loss(exact, b).item() == doctest::Approx(0.0).epsilon(1e-5));

  CounterRng rng(22);
  const Grid p = testing::random_soft(rng, 6, 6);
  const Tensor t = Tensor::from_grid(p);
  const double expect = 0.5 * (bce_ref(p, b.grid, 1e-7) + dice_ref(p, b.grid, 1.0));
  CHECK(branch_loss(t, b).item() == doctest::Approx(expect).epsilon(1e-5));

  LossConfig cfg;
  cfg.beta = 2.0f;
  cfg.gamma = 0.25f;
  const CenterStatus fg{CenterKind::Foreground, 0, 0, 0, 0};
  const CenterStatus bg{CenterKind::Background, 0, 0, 0, 0};
  const double base = branch_loss(t, b, cfg).item();
  CHECK(mm2b_loss({t, CenterKind::Foreground, fg}, b, fg, cfg).item() == doctest::Approx(2.0 * base));
  CHECK(mm2b_loss({t, CenterKind::Background, bg}, b, bg, cfg).item() == doctest::Approx(0.25 * base));
  CHECK_THROWS_AS(mm2b_loss({t, CenterKind::Foreground, fg}, b, bg, cfg), Error);
}

TEST_CASE("scale-consistency loss is the in-box mean absolute difference") {
  const BoxMask box{rasterize({0, 0, 1, 1}, 3, 3)};
  const Tensor pa(Shape{1, 1, 3, 3}, std::vector<float>{0.1f, 0.9f, 0, 0.5f, 0.5f, 0, 1, 1, 1});
  const Tensor pb(Shape{1, 1, 3, 3}, std::vector<float>{0.3f, 0.4f, 0, 0.5f, 0.1f, 0, 0, 0, 0});
  CHECK(sc_loss(pa, pb, box).item() == doctest::Approx((0.2 + 0.5 + 0.0 + 0.4) / 4.0));
  CHECK(sc_loss(pa, pa, box).item() == 0.0f);
  CHECK_THROWS_AS(sc_loss(pa, pb, BoxMask{Grid(3, 3)}), Error);
}

TEST_CASE("refinement loss weights dice and cross-entropy") {
  CounterRng rng(23);
  const Grid p = testing::random_soft(rng, 8, 8);
  const Grid y = testing::random_binary(rng, 8, 8, 0.3f);
  const Tensor t = Tensor::from_grid(p);
  const LossConfig cfg;
  CHECK(cfg.lambda1 == doctest::Approx(0.8));
  CHECK(cfg.lambda2 == doctest::Approx(0.2));
  const double expect = 0.8 * dice_ref(p, y, 1.0) + 0.2 * bce_ref(p, y, 1e-7);
  CHECK(detail_refine_loss(t, y, cfg).item() == doctest::Approx(expect).epsilon(1e-5));
  CHECK(0.8 * 0.5 + 0.2 * 0.6931 == doctest::Approx(0.53862).epsilon(1e-9));
}

TEST_CASE("total loss phase gating") {
  const Tensor a = Tensor::scalar(0.25f), b = Tensor::scalar(0.5f), r = Tensor::scalar(3.0f);
  CHECK(total_loss({a, b, r}, Phase::WeakTraining).item() == doctest::Approx(0.75));
  CHECK(total_loss({a, b, std::nullopt}, Phase::WeakTraining).item() == doctest::Approx(0.75));
  CHECK(total_loss({a, b, r}, Phase::RefineTraining).item() == doctest::Approx(3.0));
  CHECK_THROWS_AS(total_loss({a, std::nullopt, std::nullopt}, Phase::WeakTraining), Error);
  CHECK_THROWS_AS(total_loss({a, b, std::nullopt}, Phase::RefineTraining), Error);

  std::vector<Tensor> xs{Tensor::scalar(1), Tensor::scalar(2), Tensor::scalar(6)};
  CHECK(batch_mean(xs).item() == doctest::Approx(3.0));
}

TEST_CASE("loss config validation") {
  LossConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.gamma = -1.0f;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.clamp_eps = 0.6f;
  CHECK_THROWS_AS(cfg.validate(), Error);
}
