#pragma once

// Dense (batch, channel, height, width) tensors and a tape-based reverse-mode
// autodiff engine restricted to the operators the networks and losses use.
//
// A tensor participates in differentiation when it is a watched leaf of a
// Tape or the output of an op whose inputs were on a tape. Ops over untracked
// inputs run as plain forward computations, which is how evaluation and
// frozen sub-networks run.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wbk/grid.hpp"

namespace wbk {

struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  std::size_t numel() const noexcept {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const noexcept { return static_cast<std::size_t>(h) * w; }
  std::string str() const;
  friend bool operator==(const Shape&, const Shape&) = default;
};

class Tape;

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<float> values;
  std::vector<float> grad;  // empty until a gradient is accumulated
  Tape* tape = nullptr;
  int node = -1;  // index into the tape, -1 for leaves
  std::uint32_t flags = 0;
};

using ImplPtr = std::shared_ptr<TensorImpl>;

}  // namespace detail

// Output metadata bits.
inline constexpr std::uint32_t kPaddedRows = 1u << 0;  // maxpool padded an odd height
inline constexpr std::uint32_t kPaddedCols = 1u << 1;  // maxpool padded an odd width

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> values);

  static Tensor scalar(float v) { return Tensor(Shape{}, v); }
  // (1, 1, h, w) view of a grid's values.
  static Tensor from_grid(const Grid& g);
  // (n, 1, h, w) stack of equally shaped grids.
  static Tensor stack(std::span<const Grid> grids);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t numel() const { return impl_->values.size(); }

  std::span<const float> values() const { return impl_->values; }
  // Direct write access; only optimizers and initializers use this, never on
  // tensors that are currently recorded on a tape.
  std::span<float> mutable_values() { return impl_->values; }
  float operator[](std::size_t i) const { return impl_->values[i]; }
  float item() const;

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const float> grad() const { return impl_->grad; }
  std::span<float> mutable_grad();  // allocates a zero gradient if absent
  void zero_grad() { impl_->grad.clear(); }

  bool on_tape() const { return impl_->tape != nullptr; }
  Tape* tape() const { return impl_->tape; }
  std::uint32_t flags() const { return impl_->flags; }

  // Grid holding channel `c` of batch item `n`.
  Grid to_grid(int n = 0, int c = 0) const;
  // Independent untracked copy of the values.
  Tensor detach() const;

  const detail::ImplPtr& impl() const { return impl_; }
  explicit Tensor(detail::ImplPtr impl) : impl_(std::move(impl)) {}

 private:
  detail::ImplPtr impl_;
};

// Gradient callback: reads the output gradient and accumulates into the
// gradients of whichever inputs are tracked.
using BackwardFn = std::function<void(const detail::TensorImpl& out)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape();

  // Registers a leaf whose gradient should be accumulated.
  void watch(const Tensor& leaf);

  // Records an op output. Used by the op implementations.
  Tensor record(std::string_view op, Shape shape, std::vector<float> values,
                std::vector<detail::ImplPtr> inputs, BackwardFn backward);

  // Reverse sweep from a scalar loss. Gradients land in every reachable
  // watched leaf; the tape is cleared afterwards.
  void backward(const Tensor& loss);

  std::size_t size() const noexcept { return nodes_.size(); }
  std::vector<std::string_view> op_names() const;
  void clear();

 private:
  struct Node {
    std::string_view op;
    detail::ImplPtr out;
    std::vector<detail::ImplPtr> inputs;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  std::vector<std::weak_ptr<detail::TensorImpl>> leaves_;
};

// Gradient buffer of an input if it is tracked by `tape`, else nullptr.
float* grad_target(const detail::ImplPtr& in, const Tape* tape);

// ---------------------------------------------------------------------------
// Differentiable primitives. Shapes must match exactly unless stated.

enum class Axis { Rows, Cols };

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
// a * x + b with constant coefficients.
Tensor affine(const Tensor& x, float a, float b);
// x scaled by a (1,1,1,1) tensor; differentiable in both.
Tensor scale(const Tensor& x, const Tensor& s);
// Ties route the gradient to the first argument.
Tensor minimum(const Tensor& a, const Tensor& b);
Tensor maximum(const Tensor& a, const Tensor& b);
// Broadcast a (n,c,1,w) tensor over `count` rows (Axis::Rows) or a (n,c,h,1)
// tensor over `count` columns (Axis::Cols).
Tensor repeat(const Tensor& x, Axis axis, int count);
// Max over the named spatial axis: Rows gives (n,c,1,w) column maxima, Cols
// gives (n,c,h,1) row maxima. Gradient goes to the first argmax in scan order.
Tensor reduce_max(const Tensor& x, Axis axis);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor log(const Tensor& x);
Tensor clamp(const Tensor& x, float lo, float hi);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

struct Conv2dOptions {
  int stride = 1;
  int pad = 0;
  int dilation = 1;
  bool replicate = false;  // pad with the nearest edge value instead of zeros
};

// kernel: (out_channels, in_channels, k, k) with odd k; bias: (1, out, 1, 1)
// or undefined.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              Conv2dOptions opt = {});
Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int pad);

// 2x2 window, stride 2. Odd spatial dims are padded with -inf and the
// decision is recorded in the output flags.
Tensor maxpool2d(const Tensor& input);

// Align-corners bilinear resampling of every plane.
Tensor bilinear_resize(const Tensor& input, int out_h, int out_w);

struct BatchNormStats {
  std::vector<float> running_mean;
  std::vector<float> running_var;
};

inline constexpr float kBnMomentum = 0.9f;
inline constexpr float kBnEpsilon = 1e-5f;

// Per-channel normalization. Training mode uses batch statistics and, when
// `stats` is given, folds them into the running estimates
// (running = 0.9 * running + 0.1 * batch). Evaluation mode uses `stats`.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormStats* stats, bool training);

Tensor concat_channels(std::span<const Tensor> parts);
Tensor slice_batch(const Tensor& x, int index);

}  // namespace wbk
