#include "wbk/losses.hpp"

#include <cmath>

#include "ops_common.hpp"
#include "wbk/error.hpp"

namespace wbk {

void LossConfig::validate() const {
  if (beta < 0 || gamma < 0 || lambda1 < 0 || lambda2 < 0) {
    throw Error(ErrorKind::Usage, "loss weights must be non-negative");
  }
  if (!(smooth_eps > 0) || !(clamp_eps > 0) || clamp_eps >= 0.5f) {
    throw Error(ErrorKind::Usage, "loss epsilons must be positive (clamp_eps < 0.5)");
  }
}

namespace {

void check_target(const char* op, const Tensor& pred, const Grid& target) {
  const Shape& s = pred.shape();
  if (s.n != 1 || s.c != 1 || s.h != target.height || s.w != target.width) {
    throw ShapeError(std::string(op) + ": prediction " + s.str() + " vs target (" +
                     std::to_string(target.height) + "," + std::to_string(target.width) + ")");
  }
}

Grid complement(const Grid& g) {
  Grid out = g;
  for (float& v : out.data) v = 1.0f - v;
  return out;
}

}  // namespace

Tensor bce_loss(const Tensor& pred, const Grid& target, float clamp_eps) {
  check_target("bce_loss", pred, target);
  const Tensor p = clamp(pred, clamp_eps, 1.0f - clamp_eps);
  const Tensor pos = mul(Tensor::from_grid(target), log(p));
  const Tensor neg = mul(Tensor::from_grid(complement(target)), log(affine(p, -1.0f, 1.0f)));
  return affine(mean(add(pos, neg)), -1.0f, 0.0f);
}

Tensor dice_loss(const Tensor& pred, const Grid& target, float smooth_eps) {
  check_target("dice_loss", pred, target);
  double target_sum = 0.0;
  for (float v : target.data) target_sum += v;
  const Tensor inter = sum(mul(pred, Tensor::from_grid(target)));
  const Tensor num = affine(inter, 2.0f, smooth_eps);
  const Tensor den = affine(sum(pred), 1.0f, static_cast<float>(target_sum + smooth_eps));
  return affine(div(num, den), -1.0f, 1.0f);
}

Tensor branch_loss(const Tensor& t, const BoxMask& b, const LossConfig& cfg) {
  return affine(add(bce_loss(t, b.grid, cfg.clamp_eps), dice_loss(t, b.grid, cfg.smooth_eps)), 0.5f,
                0.0f);
}

Tensor mm2b_loss(const BranchOutput& t, const BoxMask& b, const CenterStatus& status,
                 const LossConfig& cfg) {
  if (t.branch != status.status) {
    throw Error(ErrorKind::Usage, "mm2b_loss: box mask came from the other centre branch");
  }
  const float w = status.status == CenterKind::Foreground ? cfg.beta : cfg.gamma;
  return affine(branch_loss(t.mask, b, cfg), w, 0.0f);
}

Tensor sc_loss(const Tensor& first, const Tensor& second, const BoxMask& box) {
  detail::require_same_shape("sc_loss", first, second);
  check_target("sc_loss", first, box.grid);
  double count = 0.0;
  for (float v : box.grid.data) count += v;
  if (count <= 0.0) throw Error(ErrorKind::Data, "sc_loss: empty box");
  const Tensor diff = mul(abs(sub(first, second)), Tensor::from_grid(box.grid));
  return affine(sum(diff), static_cast<float>(1.0 / count), 0.0f);
}

Tensor detail_refine_loss(const Tensor& s_refined, const Grid& gt, const LossConfig& cfg) {
  const Tensor dice = dice_loss(s_refined, gt, cfg.smooth_eps);
  const Tensor ce = bce_loss(s_refined, gt, cfg.clamp_eps);
  return add(affine(dice, cfg.lambda1, 0.0f), affine(ce, cfg.lambda2, 0.0f));
}

Tensor total_loss(const LossComponents& parts, Phase phase) {
  if (phase == Phase::WeakTraining) {
    if (!parts.mm2b || !parts.sc) {
      throw Error(ErrorKind::Usage, "weak training needs both the box and scale-consistency losses");
    }
    return add(*parts.mm2b, *parts.sc);
  }
  if (!parts.refine) throw Error(ErrorKind::Usage, "refine training needs the refinement loss");
  return *parts.refine;
}

Tensor batch_mean(std::span<const Tensor> scalars) {
  if (scalars.empty()) throw Error(ErrorKind::Usage, "batch_mean of no values");
  Tensor acc = scalars[0];
  for (std::size_t i = 1; i < scalars.size(); ++i) acc = add(acc, scalars[i]);
  return affine(acc, 1.0f / static_cast<float>(scalars.size()), 0.0f);
}

}  // namespace wbk
