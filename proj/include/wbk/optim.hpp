#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "wbk/config.hpp"
#include "wbk/nets.hpp"

namespace wbk {

struct OptimizerSlot {
  std::vector<float> m;  // first moment / SGD velocity
  std::vector<float> v;  // second moment (AdamW only)
  friend bool operator==(const OptimizerSlot&, const OptimizerSlot&) = default;
};

// AdamW with decoupled weight decay, or SGD with momentum 0.9. Frozen
// parameters are skipped; a trainable parameter without a gradient is
// treated as having a zero gradient.
class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(OptimizerKind kind, float lr, float weight_decay);

  void step(ModelParams& params);
  void zero_grad(ModelParams& params) const;

  OptimizerKind kind() const noexcept { return kind_; }
  float learning_rate() const noexcept { return lr_; }
  void set_learning_rate(float lr) noexcept { lr_ = lr; }
  float weight_decay() const noexcept { return weight_decay_; }
  std::int64_t steps() const noexcept { return steps_; }

  const std::map<std::string, OptimizerSlot>& slots() const { return slots_; }
  void restore(std::int64_t steps, std::map<std::string, OptimizerSlot> slots) {
    steps_ = steps;
    slots_ = std::move(slots);
  }

  static constexpr float kBeta1 = 0.9f;
  static constexpr float kBeta2 = 0.999f;
  static constexpr float kEps = 1e-8f;
  static constexpr float kMomentum = 0.9f;

 private:
  OptimizerKind kind_ = OptimizerKind::AdamW;
  float lr_ = 1e-3f;
  float weight_decay_ = 0.01f;
  std::int64_t steps_ = 0;
  std::map<std::string, OptimizerSlot> slots_;
};

}  // namespace wbk
