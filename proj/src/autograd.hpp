#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "dfres/errors.hpp"
#include "dfres/tensor.hpp"

namespace dfres::detail {

template <typename T>
using ImplPtr = std::shared_ptr<TensorImpl<T>>;

// Grad buffer of an input when it participates in backprop, else nullptr.
template <typename T>
inline T* grad_of(const ImplPtr<T>& impl) {
  if (!impl || !impl->requires_grad) return nullptr;
  return impl->ensure_grad().data();
}

template <typename T>
inline void require_finite(const char* op, const Buffer<T>& data) {
  for (const T v : data) {
    if (!std::isfinite(v)) throw NumericalError(std::string(op) + " produced a non-finite value");
  }
}

// Wraps freshly computed data as an op result, recording a graph node when
// grad mode is on and any input requires grad.
template <typename T, typename Backward>
Tensor<T> make_result(const char* op, Shape shape, Buffer<T> data,
                      const std::vector<Tensor<T>>& inputs, Backward&& backward) {
  require_finite(op, data);
  auto impl = std::make_shared<TensorImpl<T>>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  bool needs_grad = false;
  if (GradMode::enabled()) {
    for (const auto& in : inputs) needs_grad = needs_grad || (in.defined() && in.requires_grad());
  }
  if (needs_grad) {
    auto node = std::make_shared<Node<T>>();
    node->name = op;
    for (const auto& in : inputs) {
      if (in.defined() && in.requires_grad()) node->inputs.push_back(in.impl());
    }
    node->backward = std::forward<Backward>(backward);
    impl->requires_grad = true;
    impl->grad_fn = std::move(node);
  }
  return Tensor<T>(std::move(impl));
}

template <typename T, typename Backward>
Tensor<T> make_result(const char* op, Shape shape, Buffer<T> data,
                      std::initializer_list<Tensor<T>> inputs, Backward&& backward) {
  return make_result<T>(op, std::move(shape), std::move(data), std::vector<Tensor<T>>(inputs),
                        std::forward<Backward>(backward));
}

}  // namespace dfres::detail
