#include "wbk/optim.hpp"

#include <cmath>

namespace wbk {

Optimizer::Optimizer(OptimizerKind kind, float lr, float weight_decay)
    : kind_(kind), lr_(lr), weight_decay_(weight_decay) {}

void Optimizer::step(ModelParams& params) {
  ++steps_;
  const double bias1 = 1.0 - std::pow(static_cast<double>(kBeta1), static_cast<double>(steps_));
  const double bias2 = 1.0 - std::pow(static_cast<double>(kBeta2), static_cast<double>(steps_));
  for (auto& [name, param] : params.params()) {
    if (param.frozen) continue;
    Tensor& t = param.value;
    const std::span<float> w = t.mutable_values();
    const std::span<const float> grad = t.grad();
    OptimizerSlot& slot = slots_[name];
    if (slot.m.empty()) slot.m.assign(w.size(), 0.0f);
    if (kind_ == OptimizerKind::AdamW && slot.v.empty()) slot.v.assign(w.size(), 0.0f);
    for (std::size_t k = 0; k < w.size(); ++k) {
      const float g = grad.empty() ? 0.0f : grad[k];
      if (kind_ == OptimizerKind::AdamW) {
        w[k] -= lr_ * weight_decay_ * w[k];
        slot.m[k] = kBeta1 * slot.m[k] + (1.0f - kBeta1) * g;
        slot.v[k] = kBeta2 * slot.v[k] + (1.0f - kBeta2) * g * g;
        const double mhat = slot.m[k] / bias1;
        const double vhat = slot.v[k] / bias2;
        w[k] -= static_cast<float>(lr_ * mhat / (std::sqrt(vhat) + kEps));
      } else {
        const float gd = g + weight_decay_ * w[k];
        slot.m[k] = kMomentum * slot.m[k] + gd;
        w[k] -= lr_ * slot.m[k];
      }
    }
  }
}

void Optimizer::zero_grad(ModelParams& params) const {
  for (auto& [name, param] : params.params()) param.value.zero_grad();
}

}  // namespace wbk
