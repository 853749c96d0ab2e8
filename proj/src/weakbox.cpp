#include "wbk/weakbox.hpp"

#include <algorithm>
#include <cmath>

#include "wbk/error.hpp"

namespace wbk {

Projection project(const Grid& p) {
  Projection out;
  out.p_w.assign(static_cast<std::size_t>(p.width), 0.0f);
  out.p_h.assign(static_cast<std::size_t>(p.height), 0.0f);
  for (int i = 0; i < p.height; ++i) {
    for (int j = 0; j < p.width; ++j) {
      const float v = p.at(i, j);
      if (i == 0 || v > out.p_w[j]) out.p_w[j] = v;
      if (j == 0 || v > out.p_h[i]) out.p_h[i] = v;
    }
  }
  return out;
}

namespace {

template <class Combine>
BoxMask outer(const Projection& proj, Combine combine) {
  const int h = static_cast<int>(proj.p_h.size());
  const int w = static_cast<int>(proj.p_w.size());
  Grid g(h, w);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) g.at(i, j) = combine(proj.p_w[j], proj.p_h[i]);
  }
  return BoxMask{std::move(g)};
}

}  // namespace

BoxMask backproject_min(const Projection& proj) {
  return outer(proj, [](float a, float b) { return std::min(a, b); });
}

BoxMask box_max(const Projection& proj) {
  return outer(proj, [](float a, float b) { return std::max(a, b); });
}

bool has_foreground(const Grid& p, float threshold) {
  return std::any_of(p.data.begin(), p.data.end(), [&](float v) { return v >= threshold; });
}

CenterStatus center_status(const Grid& p, float threshold) {
  double sr = 0.0, sc = 0.0;
  long long count = 0;
  for (int i = 0; i < p.height; ++i) {
    for (int j = 0; j < p.width; ++j) {
      if (p.at(i, j) >= threshold) {
        sr += i;
        sc += j;
        ++count;
      }
    }
  }
  if (count == 0) throw Error(ErrorKind::Data, "no foreground");
  CenterStatus st;
  st.mean_row = sr / static_cast<double>(count);
  st.mean_col = sc / static_cast<double>(count);
  st.row = std::clamp(static_cast<int>(std::lround(st.mean_row)), 0, p.height - 1);
  st.col = std::clamp(static_cast<int>(std::lround(st.mean_col)), 0, p.width - 1);
  st.status = p.at(st.row, st.col) >= threshold ? CenterKind::Foreground : CenterKind::Background;
  return st;
}

int min_run_gap(const std::vector<bool>& indicator) {
  int best = 0;
  int last_set = -1;
  for (int i = 0; i < static_cast<int>(indicator.size()); ++i) {
    if (!indicator[static_cast<std::size_t>(i)]) continue;
    if (last_set >= 0 && i - last_set > 1) {
      const int gap = i - last_set - 1;
      if (best == 0 || gap < best) best = gap;
    }
    last_set = i;
  }
  return best;
}

BoxMask box_min(const Grid& p, double center_row, double center_col, float threshold) {
  const Projection proj = project(p);
  std::vector<bool> rows(proj.p_h.size()), cols(proj.p_w.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = proj.p_h[i] >= threshold;
  for (std::size_t j = 0; j < cols.size(); ++j) cols[j] = proj.p_w[j] >= threshold;
  const int dh = min_run_gap(rows);
  const int dw = min_run_gap(cols);
  Grid g(p.height, p.width);
  if (dh == 0 || dw == 0) return BoxMask{std::move(g)};
  const int r0 = static_cast<int>(std::lround(center_row - (dh - 1) / 2.0));
  const int c0 = static_cast<int>(std::lround(center_col - (dw - 1) / 2.0));
  for (int i = std::max(r0, 0); i <= std::min(r0 + dh - 1, p.height - 1); ++i) {
    for (int j = std::max(c0, 0); j <= std::min(c0 + dw - 1, p.width - 1); ++j) g.at(i, j) = 1.0f;
  }
  return BoxMask{std::move(g)};
}

Mm2bResult mm2b(const Grid& p, float threshold) {
  const CenterStatus st = center_status(p, threshold);
  const Projection proj = project(p);
  if (st.status == CenterKind::Foreground) return Mm2bResult{backproject_min(proj), st};
  BoxMask t0 = box_max(proj);
  const BoxMask bmin = box_min(p, st.mean_row, st.mean_col, threshold);
  for (std::size_t k = 0; k < t0.grid.size(); ++k) {
    t0.grid.data[k] = std::clamp(t0.grid.data[k] - bmin.grid.data[k], 0.0f, 1.0f);
  }
  return Mm2bResult{std::move(t0), st};
}

BoxCoords mask_to_box_coords(const Grid& mask, float threshold) {
  BoxCoords b{mask.height, mask.width, -1, -1};
  for (int i = 0; i < mask.height; ++i) {
    for (int j = 0; j < mask.width; ++j) {
      if (mask.at(i, j) < threshold) continue;
      b.row_min = std::min(b.row_min, i);
      b.col_min = std::min(b.col_min, j);
      b.row_max = std::max(b.row_max, i);
      b.col_max = std::max(b.col_max, j);
    }
  }
  if (b.row_max < 0) throw Error(ErrorKind::Data, "box support is empty");
  return b;
}

BoxMask gt_mask_to_boxmask(const Grid& gt) {
  if (!has_foreground(gt)) throw Error(ErrorKind::Data, "ground-truth mask is empty");
  return BoxMask{rasterize(mask_to_box_coords(gt), gt.height, gt.width)};
}

Grid rasterize(const BoxCoords& box, int height, int width) {
  Grid g(height, width);
  for (int i = std::max(box.row_min, 0); i <= std::min(box.row_max, height - 1); ++i) {
    for (int j = std::max(box.col_min, 0); j <= std::min(box.col_max, width - 1); ++j) g.at(i, j) = 1.0f;
  }
  return g;
}

BoxCoords rescale_coords(const BoxCoords& box, int from_h, int from_w, int to_h, int to_w) {
  auto lo = [](int v, int from, int to) { return std::clamp(v * to / from, 0, to - 1); };
  auto hi = [](int v, int from, int to) { return std::clamp(((v + 1) * to + from - 1) / from - 1, 0, to - 1); };
  BoxCoords out{lo(box.row_min, from_h, to_h), lo(box.col_min, from_w, to_w),
                hi(box.row_max, from_h, to_h), hi(box.col_max, from_w, to_w)};
  out.row_max = std::max(out.row_max, out.row_min);
  out.col_max = std::max(out.col_max, out.col_min);
  return out;
}

// ---------------------------------------------------------------------------

TensorProjection project(const Tensor& p) {
  const Shape& s = p.shape();
  if (s.n != 1 || s.c != 1) throw ShapeError("project: expected a single-plane tensor, got " + s.str());
  return TensorProjection{reduce_max(p, Axis::Rows), reduce_max(p, Axis::Cols)};
}

namespace {

std::pair<Tensor, Tensor> back_projections(const TensorProjection& proj) {
  const int h = proj.p_h.shape().h;
  const int w = proj.p_w.shape().w;
  return {repeat(proj.p_w, Axis::Rows, h), repeat(proj.p_h, Axis::Cols, w)};
}

}  // namespace

Tensor backproject_min(const TensorProjection& proj) {
  auto [pw, ph] = back_projections(proj);
  return minimum(pw, ph);
}

Tensor box_max(const TensorProjection& proj) {
  auto [pw, ph] = back_projections(proj);
  return maximum(pw, ph);
}

BranchOutput mm2b_branch(const Tensor& p, CenterKind branch, const CenterStatus& status, float threshold) {
  const TensorProjection proj = project(p);
  if (branch == CenterKind::Foreground) return BranchOutput{backproject_min(proj), branch, status};
  const Grid values = p.to_grid();
  const BoxMask bmin = box_min(values, status.mean_row, status.mean_col, threshold);
  const Tensor t0 = clamp(sub(box_max(proj), Tensor::from_grid(bmin.grid)), 0.0f, 1.0f);
  return BranchOutput{t0, branch, status};
}

BranchOutput mm2b(const Tensor& p, float threshold) {
  const CenterStatus st = center_status(p.to_grid(), threshold);
  return mm2b_branch(p, st.status, st, threshold);
}

}  // namespace wbk
