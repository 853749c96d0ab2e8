#pragma once

// Mask-to-box machinery: axis projections, centre-point dispatch between the
// single-box (foreground centre) and max-minus-min (background centre)
// constructions, and box-prompt extraction.
//
// Every construction exists twice: over plain grids (used by the CLI, the
// oracles and the prompt logic) and over tensors, where the projections stay
// differentiable so the box masks can be supervised.

#include <vector>

#include "wbk/grid.hpp"
#include "wbk/tensor.hpp"

namespace wbk {

inline constexpr float kMaskThreshold = 0.5f;

struct Projection {
  std::vector<float> p_w;  // column maxima, length W
  std::vector<float> p_h;  // row maxima, length H
};

// Box-shaped supervision mask with values in [0, 1].
struct BoxMask {
  Grid grid;
  friend bool operator==(const BoxMask&, const BoxMask&) = default;
};

// Inclusive pixel bounds.
struct BoxCoords {
  int row_min = 0;
  int col_min = 0;
  int row_max = 0;
  int col_max = 0;

  int height() const noexcept { return row_max - row_min + 1; }
  int width() const noexcept { return col_max - col_min + 1; }
  friend bool operator==(const BoxCoords&, const BoxCoords&) = default;
};

enum class CenterKind { Foreground, Background };

struct CenterStatus {
  CenterKind status = CenterKind::Foreground;
  int row = 0;  // rounded centroid
  int col = 0;
  double mean_row = 0.0;  // unrounded centroid
  double mean_col = 0.0;
};

Projection project(const Grid& p);
BoxMask backproject_min(const Projection& proj);
BoxMask box_max(const Projection& proj);

bool has_foreground(const Grid& p, float threshold = kMaskThreshold);
// Throws Error(Data, "no foreground") if nothing reaches the threshold.
CenterStatus center_status(const Grid& p, float threshold = kMaskThreshold);

// Length of the shortest run of unset entries lying between two set runs;
// 0 when the set entries form a single run.
int min_run_gap(const std::vector<bool>& indicator);

// d_h x d_w rectangle centred at (center_row, center_col), clipped to the
// grid, where d_h / d_w are the smallest gaps between occupied row / column
// runs of the thresholded mask. Empty if either gap is 0.
BoxMask box_min(const Grid& p, double center_row, double center_col,
                float threshold = kMaskThreshold);

struct Mm2bResult {
  BoxMask box;
  CenterStatus status;
};

// Foreground centre: T1 = min(P'_w, P'_h). Background centre:
// T0 = clamp(B_max - B_min, 0, 1).
Mm2bResult mm2b(const Grid& p, float threshold = kMaskThreshold);

BoxCoords mask_to_box_coords(const Grid& mask, float threshold = kMaskThreshold);
inline BoxCoords mask_to_box_coords(const BoxMask& b, float threshold = kMaskThreshold) {
  return mask_to_box_coords(b.grid, threshold);
}

// Tight rectangle over the ground-truth foreground (the weak label).
BoxMask gt_mask_to_boxmask(const Grid& gt);

Grid rasterize(const BoxCoords& box, int height, int width);
// Maps inclusive coordinates from a (from_h, from_w) grid onto a (to_h, to_w)
// grid, keeping at least one pixel.
BoxCoords rescale_coords(const BoxCoords& box, int from_h, int from_w, int to_h, int to_w);
inline BoxCoords full_box(int height, int width) { return BoxCoords{0, 0, height - 1, width - 1}; }

// --- differentiable forms (input: (1, 1, H, W) probability tensor) ---------

struct TensorProjection {
  Tensor p_w;  // (1,1,1,W)
  Tensor p_h;  // (1,1,H,1)
};

TensorProjection project(const Tensor& p);
Tensor backproject_min(const TensorProjection& proj);
Tensor box_max(const TensorProjection& proj);

struct BranchOutput {
  Tensor mask;
  CenterKind branch = CenterKind::Foreground;
  CenterStatus status;
};

// Dispatch on the centre status of the current values. B_min enters as a
// constant; gradients flow through the projections.
BranchOutput mm2b(const Tensor& p, float threshold = kMaskThreshold);
// Same, with the branch fixed by the caller.
BranchOutput mm2b_branch(const Tensor& p, CenterKind branch, const CenterStatus& status,
                         float threshold = kMaskThreshold);

}  // namespace wbk
