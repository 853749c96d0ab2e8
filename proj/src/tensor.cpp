#include "wbk/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "wbk/error.hpp"

namespace wbk {

Grid::Grid(int h, int w, float fill)
    : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {
  if (h <= 0 || w <= 0) throw ShapeError("grid dimensions must be positive");
}

Grid::Grid(int h, int w, std::initializer_list<float> values)
    : Grid(h, w, std::vector<float>(values)) {}

Grid::Grid(int h, int w, std::vector<float> values)
    : height(h), width(w), data(std::move(values)) {
  if (h <= 0 || w <= 0) throw ShapeError("grid dimensions must be positive");
  if (data.size() != static_cast<std::size_t>(h) * w) {
    std::ostringstream os;
    os << "grid " << h << "x" << w << " given " << data.size() << " values";
    throw ShapeError(os.str());
  }
}

Grid threshold_grid(const Grid& g, float threshold) {
  Grid out = g;
  for (float& v : out.data) v = v >= threshold ? 1.0f : 0.0f;
  return out;
}

std::string Shape::str() const {
  std::ostringstream os;
  os << "(" << n << "," << c << "," << h << "," << w << ")";
  return os.str();
}

Tensor::Tensor(Shape shape, float fill) : impl_(std::make_shared<detail::TensorImpl>()) {
  impl_->shape = shape;
  impl_->values.assign(shape.numel(), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> values)
    : impl_(std::make_shared<detail::TensorImpl>()) {
  if (values.size() != shape.numel()) {
    throw ShapeError("tensor " + shape.str() + " given " + std::to_string(values.size()) +
                     " values");
  }
  impl_->shape = shape;
  impl_->values = std::move(values);
}

Tensor Tensor::from_grid(const Grid& g) { return Tensor(Shape{1, 1, g.height, g.width}, g.data); }

Tensor Tensor::stack(std::span<const Grid> grids) {
  if (grids.empty()) throw ShapeError("cannot stack zero grids");
  const int h = grids[0].height;
  const int w = grids[0].width;
  std::vector<float> v;
  v.reserve(grids.size() * static_cast<std::size_t>(h) * w);
  for (const Grid& g : grids) {
    if (g.height != h || g.width != w) throw ShapeError("stack of grids with unequal shapes");
    v.insert(v.end(), g.data.begin(), g.data.end());
  }
  return Tensor(Shape{static_cast<int>(grids.size()), 1, h, w}, std::move(v));
}

float Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on non-scalar tensor " + shape().str());
  return impl_->values[0];
}

std::span<float> Tensor::mutable_grad() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->values.size(), 0.0f);
  return impl_->grad;
}

Grid Tensor::to_grid(int n, int c) const {
  const Shape& s = shape();
  if (n < 0 || n >= s.n || c < 0 || c >= s.c) throw ShapeError("to_grid index out of range");
  const auto off = (static_cast<std::size_t>(n) * s.c + c) * s.plane();
  std::vector<float> v(impl_->values.begin() + off, impl_->values.begin() + off + s.plane());
  return Grid(s.h, s.w, std::move(v));
}

Tensor Tensor::detach() const { return Tensor(shape(), impl_->values); }

// ---------------------------------------------------------------------------

Tape::~Tape() { clear(); }

void Tape::watch(const Tensor& leaf) {
  auto& impl = leaf.impl();
  if (impl->tape == this) return;
  if (impl->tape != nullptr) throw Error(ErrorKind::Usage, "tensor already watched by another tape");
  impl->tape = this;
  impl->node = -1;
  leaves_.push_back(impl);
}

Tensor Tape::record(std::string_view op, Shape shape, std::vector<float> values,
                    std::vector<detail::ImplPtr> inputs, BackwardFn backward) {
  auto out = std::make_shared<detail::TensorImpl>();
  out->shape = shape;
  out->values = std::move(values);
  out->tape = this;
  out->node = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{op, out, std::move(inputs), std::move(backward)});
  return Tensor(out);
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.tape() != this) {
    throw Error(ErrorKind::Usage, "backward() called on a value that is not on this tape");
  }
  if (loss.numel() != 1) throw ShapeError("backward() needs a scalar loss, got " + loss.shape().str());
  auto& root = loss.impl();
  root->grad.assign(1, 1.0f);
  if (root->node >= 0) {
    for (int i = root->node; i >= 0; --i) {
      Node& node = nodes_[static_cast<std::size_t>(i)];
      if (node.out->grad.empty()) continue;  // unreachable from the loss
      node.backward(*node.out);
    }
  }
  clear();
}

std::vector<std::string_view> Tape::op_names() const {
  std::vector<std::string_view> names;
  names.reserve(nodes_.size());
  for (const Node& n : nodes_) names.push_back(n.op);
  return names;
}

void Tape::clear() {
  for (Node& n : nodes_) {
    n.out->tape = nullptr;
    n.out->node = -1;
    n.out->grad.clear();
    n.out->grad.shrink_to_fit();
  }
  nodes_.clear();
  for (auto& weak : leaves_) {
    if (auto leaf = weak.lock(); leaf && leaf->tape == this) leaf->tape = nullptr;
  }
  leaves_.clear();
}

float* grad_target(const detail::ImplPtr& in, const Tape* tape) {
  if (!in || in->tape != tape || tape == nullptr) return nullptr;
  if (in->grad.empty()) in->grad.assign(in->values.size(), 0.0f);
  return in->grad.data();
}

}  // namespace wbk
