#pragma once

#include <initializer_list>
#include <string_view>
#include <vector>

#include "wbk/tensor.hpp"

namespace wbk::detail {

Tape* common_tape(std::initializer_list<const Tensor*> inputs);
void require_same_shape(const char* op, const Tensor& a, const Tensor& b);

// Returns an untracked tensor when no input is on a tape; otherwise records
// the op with the backward closure built by `make_backward(tape)`.
template <class MakeBackward>
Tensor emit(std::string_view op, Shape shape, std::vector<float> values,
            std::initializer_list<const Tensor*> inputs, MakeBackward&& make_backward) {
  Tape* tape = common_tape(inputs);
  if (tape == nullptr) return Tensor(shape, std::move(values));
  std::vector<ImplPtr> ins;
  for (const Tensor* t : inputs) {
    if (t != nullptr && t->defined()) ins.push_back(t->impl());
  }
  return tape->record(op, shape, std::move(values), std::move(ins), make_backward(tape));
}

}  // namespace wbk::detail
