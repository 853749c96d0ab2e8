#pragma once

#include <optional>
#include <span>

#include "wbk/grid.hpp"
#include "wbk/tensor.hpp"
#include "wbk/weakbox.hpp"

namespace wbk {

struct LossConfig {
  float beta = 1.0f;     // foreground-centre branch weight
  float gamma = 1.0f;    // background-centre branch weight
  float lambda1 = 0.8f;  // Dice weight of the refinement loss
  float lambda2 = 0.2f;  // cross-entropy weight of the refinement loss
  float smooth_eps = 1.0f;
  float clamp_eps = 1e-7f;

  void validate() const;
};

// Mean pixelwise binary cross-entropy; predictions are clamped to
// [clamp_eps, 1 - clamp_eps] first.
Tensor bce_loss(const Tensor& pred, const Grid& target, float clamp_eps = 1e-7f);
// 1 - (2 sum(p y) + eps) / (sum(p) + sum(y) + eps)
Tensor dice_loss(const Tensor& pred, const Grid& target, float smooth_eps = 1.0f);

// (BCE + Dice) / 2 between a transformed box mask and the weak label.
Tensor branch_loss(const Tensor& t, const BoxMask& b, const LossConfig& cfg = {});

// beta * branch_loss for foreground-centre samples, gamma * branch_loss for
// background-centre samples. The branch that produced `t` must agree with
// `status`.
Tensor mm2b_loss(const BranchOutput& t, const BoxMask& b, const CenterStatus& status,
                 const LossConfig& cfg = {});

// Masked mean absolute difference over the box region.
Tensor sc_loss(const Tensor& first, const Tensor& second, const BoxMask& box);

// lambda1 * Dice + lambda2 * CE on the refined probability map.
Tensor detail_refine_loss(const Tensor& s_refined, const Grid& gt, const LossConfig& cfg = {});

enum class Phase { WeakTraining, RefineTraining };

struct LossComponents {
  std::optional<Tensor> mm2b;
  std::optional<Tensor> sc;
  std::optional<Tensor> refine;
};

// Weak training sums the box and scale-consistency terms and ignores any
// refinement term; refinement training uses the refinement term only.
Tensor total_loss(const LossComponents& parts, Phase phase);

// Mean of scalar tensors (per-sample losses to a batch value).
Tensor batch_mean(std::span<const Tensor> scalars);

}  // namespace wbk
