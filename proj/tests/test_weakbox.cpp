#include <doctest.h>

#include "oracles.hpp"
#include "test_support.hpp"
#include "wbk/error.hpp"
#include "wbk/weakbox.hpp"

using namespace wbk;

namespace {

Grid blocks(int h, int w, std::initializer_list<BoxCoords> boxes) {
  Grid g(h, w);
  for (const BoxCoords& b : boxes) {
    const Grid r = rasterize(b, h, w);
    for (std::size_t k = 0; k < g.size(); ++k) g.data[k] = std::max(g.data[k], r.data[k]);
  }
  return g;
}

}  // namespace

TEST_CASE("projection of a small mask") {
  const Grid p(3, 3, {0, 1, 0, 0, 0, 0, 0, 1, 1});
  const Projection proj = project(p);
  CHECK(proj.p_w == std::vector<float>{0, 1, 1});
  CHECK(proj.p_h == std::vector<float>{1, 0, 1});

  const Projection zero = project(Grid(4, 5));
  CHECK(zero.p_w == std::vector<float>(5, 0.0f));
  CHECK(zero.p_h == std::vector<float>(4, 0.0f));
}

TEST_CASE("projection matches per-axis max loops on soft masks") {
  CounterRng rng(11);
  for (int k = 0; k < 20; ++k) {
    const Grid p = testing::random_soft(rng, 16, 16);
    const Projection proj = project(p);
    for (int j = 0; j < 16; ++j) {
      float m = 0.0f;
      for (int i = 0; i < 16; ++i) m = std::max(m, p.at(i, j));
      CHECK(proj.p_w[static_cast<std::size_t>(j)] == m);
    }
    for (int i = 0; i < 16; ++i) {
      float m = 0.0f;
      for (int j = 0; j < 16; ++j) m = std::max(m, p.at(i, j));
      CHECK(proj.p_h[static_cast<std::size_t>(i)] == m);
    }
  }
}

TEST_CASE("backproject_min examples") {
  const Grid rect = blocks(4, 5, {{1, 1, 2, 3}});
  CHECK(backproject_min(project(rect)).grid == rect);

  const Grid ell(3, 3, {1, 0, 0, 1, 1, 1, 0, 0, 0});
  CHECK(backproject_min(project(ell)).grid == Grid(3, 3, {1, 1, 1, 1, 1, 1, 0, 0, 0}));

  const Grid two = blocks(10, 10, {{0, 0, 1, 2}, {6, 5, 8, 8}});
  CHECK(backproject_min(project(two)).grid == oracle::indicator_outer(two));
}

TEST_CASE("backproject_min soft values equal the min-max loop oracle, grid and tensor") {
  CounterRng rng(12);
  for (int k = 0; k < 50; ++k) {
    const Grid p = testing::random_soft(rng, testing::random_dim(rng, 1, 12), testing::random_dim(rng, 1, 12));
    const Grid expect = oracle::minmax_box(p);
    CHECK(backproject_min(project(p)).grid == expect);
    CHECK(backproject_min(project(Tensor::from_grid(p))).to_grid() == expect);
  }
}

TEST_CASE("center status") {
  const Grid square = blocks(9, 9, {{3, 3, 5, 5}});
  const CenterStatus st = center_status(square);
  CHECK(st.status == CenterKind::Foreground);
  CHECK(st.row == 4);
  CHECK(st.col == 4);

  // Opposite corners: the centroid (7.5, 7.5) by hand, an empty pixel.
  const Grid corners = blocks(16, 16, {{0, 0, 2, 2}, {13, 13, 15, 15}});
  const CenterStatus cs = center_status(corners);
  CHECK(cs.mean_row == doctest::Approx(7.5));
  CHECK(cs.mean_col == doctest::Approx(7.5));
  CHECK(cs.status == CenterKind::Background);

  Grid ring(15, 15);
  for (int i = 0; i < 15; ++i) {
    for (int j = 0; j < 15; ++j) {
      const double d = std::hypot(i - 7.0, j - 7.0);
      ring.at(i, j) = d >= 4.0 && d <= 6.5 ? 1.0f : 0.0f;
    }
  }
  CHECK(center_status(ring).status == CenterKind::Background);

  CHECK_THROWS_AS(center_status(Grid(4, 4)), Error);
}

TEST_CASE("box_max is the cross-shaped union of bands") {
  const Grid rect = blocks(6, 7, {{2, 1, 3, 2}});
  Grid expect(6, 7);
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 7; ++j) expect.at(i, j) = (i == 2 || i == 3 || j == 1 || j == 2) ? 1.0f : 0.0f;
  }
  CHECK(box_max(project(rect)).grid == expect);
  CHECK(box_max(project(Grid(3, 3))).grid == Grid(3, 3));

  CounterRng rng(13);
  for (int k = 0; k < 20; ++k) {
    const Grid p = testing::random_binary(rng, 9, 11, 0.1f);
    const Projection proj = project(p);
    const Grid got = box_max(proj).grid;
    for (int i = 0; i < 9; ++i) {
      for (int j = 0; j < 11; ++j) {
        CHECK(got.at(i, j) == std::max(proj.p_w[static_cast<std::size_t>(j)], proj.p_h[static_cast<std::size_t>(i)]));
      }
    }
  }
}

TEST_CASE("run gaps and box_min") {
  std::vector<bool> rows(8, false);
  rows[0] = rows[1] = rows[5] = rows[6] = true;
  CHECK(min_run_gap(rows) == 3);
  CHECK(min_run_gap({false, true, true, false}) == 0);
  CHECK(min_run_gap({true, false, true, false, false, true}) == 1);

  const Grid single = blocks(8, 8, {{2, 2, 4, 5}});
  CHECK(box_min(single, 3.0, 3.5) == BoxMask{Grid(8, 8)});

  // Corner blobs: rows {0,1},{10,11} and cols {0,1,2},{9,10,11} give gaps 8
  // and 6; the rectangle is centred on the centroid.
  const Grid corners = blocks(12, 12, {{0, 0, 1, 2}, {10, 9, 11, 11}});
  const CenterStatus st = center_status(corners);
  const BoxMask got = box_min(corners, st.mean_row, st.mean_col);
  const int r0 = static_cast<int>(std::lround(st.mean_row - 3.5));
  const int c0 = static_cast<int>(std::lround(st.mean_col - 2.5));
  CHECK(got.grid == rasterize({r0, c0, r0 + 7, c0 + 5}, 12, 12));
}

TEST_CASE("mm2b dispatch") {
  const Grid rect = blocks(10, 10, {{2, 3, 6, 7}});
  const Mm2bResult fg = mm2b(rect);
  CHECK(fg.status.status == CenterKind::Foreground);
  CHECK(fg.box.grid == rect);
  CHECK(mm2b(fg.box.grid).box == fg.box);

  const Grid corners = blocks(16, 16, {{0, 0, 2, 2}, {13, 13, 15, 15}});
  const Mm2bResult bg = mm2b(corners);
  CHECK(bg.status.status == CenterKind::Background);
  const Projection proj = project(corners);
  Grid expect = box_max(proj).grid;
  const Grid bmin = box_min(corners, bg.status.mean_row, bg.status.mean_col).grid;
  for (std::size_t k = 0; k < expect.size(); ++k) expect.data[k] = std::clamp(expect.data[k] - bmin.data[k], 0.0f, 1.0f);
  CHECK(bg.box.grid == expect);

  // The tensor form takes the same branch and values.
  const BranchOutput t = mm2b(Tensor::from_grid(corners));
  CHECK(t.branch == CenterKind::Background);
  CHECK(t.mask.to_grid() == expect);
}

TEST_CASE("box coordinates") {
  CHECK(mask_to_box_coords(blocks(4, 5, {{1, 0, 2, 3}})) == BoxCoords{1, 0, 2, 3});
  Grid dot(10, 10);
  dot.at(5, 7) = 1.0f;
  CHECK(mask_to_box_coords(dot) == BoxCoords{5, 7, 5, 7});
  CHECK_THROWS_AS(mask_to_box_coords(Grid(3, 3)), Error);

  CounterRng rng(14);
  for (int k = 0; k < 30; ++k) {
    Grid g = testing::random_binary(rng, 13, 9, 0.05f);
    g.at(6, 4) = 1.0f;
    int r0 = 99, c0 = 99, r1 = -1, c1 = -1;
    for (int i = 0; i < 13; ++i) {
      for (int j = 0; j < 9; ++j) {
        if (g.at(i, j) < 0.5f) continue;
        r0 = std::min(r0, i);
        c0 = std::min(c0, j);
        r1 = std::max(r1, i);
        c1 = std::max(c1, j);
      }
    }
    CHECK(mask_to_box_coords(g) == BoxCoords{r0, c0, r1, c1});
    CHECK(gt_mask_to_boxmask(g).grid == rasterize({r0, c0, r1, c1}, 13, 9));
  }
}

TEST_CASE("weak label from a ground-truth mask") {
  const Grid rect = blocks(6, 6, {{1, 2, 3, 4}});
  CHECK(gt_mask_to_boxmask(rect).grid == rect);
  Grid diag(4, 4);
  for (int i = 0; i < 4; ++i) diag.at(i, i) = 1.0f;
  CHECK(gt_mask_to_boxmask(diag).grid == Grid(4, 4, 1.0f));
  CHECK_THROWS_AS(gt_mask_to_boxmask(Grid(4, 4)), Error);
}

TEST_CASE("single axis-connected object: T1 equals its tight box") {
  CounterRng rng(15);
  for (int k = 0; k < 100; ++k) {
    // A random "plus" shape is connected along both axes.
    Grid g(20, 20);
    const int ci = testing::random_dim(rng, 4, 15), cj = testing::random_dim(rng, 4, 15);
    const int a = testing::random_dim(rng, 0, 4), b = testing::random_dim(rng, 0, 4);
    for (int d = -a; d <= a; ++d) g.at(ci + d, cj) = 1.0f;
    for (int d = -b; d <= b; ++d) g.at(ci, cj + d) = 1.0f;
    CHECK(backproject_min(project(g)).grid == gt_mask_to_boxmask(g).grid);
  }
}

TEST_CASE("rescaled prompt coordinates stay inside and keep size") {
  CHECK(rescale_coords({0, 0, 63, 63}, 64, 64, 48, 48) == BoxCoords{0, 0, 47, 47});
  CHECK(rescale_coords({10, 20, 10, 20}, 64, 64, 16, 16) == BoxCoords{2, 5, 2, 5});
  const BoxCoords up = rescale_coords({2, 5, 2, 5}, 16, 16, 64, 64);
  CHECK(up == BoxCoords{8, 20, 11, 23});
}
