#pragma once

// Differentiable operations over dfres::Tensor. Feature maps are [C,H,W]
// (no batch axis); matrices are [rows, cols]. Broadcasting is limited to
// the per-channel conv bias and scalar multipliers.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "dfres/tensor.hpp"

namespace dfres {

// Cross-correlation with zero padding. input [C_in,H,W], weight
// [C_out,C_in,k,k] with k odd, bias [C_out] or an undefined tensor.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 std::size_t stride = 1, std::size_t pad = 0);

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
// a^T x b, without materializing the transpose.
template <typename T>
Tensor<T> matmul_tn(const Tensor<T>& a, const Tensor<T>& b);
// a x b^T, without materializing the transpose.
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> transpose(const Tensor<T>& a);

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& y);
template <typename T>
Tensor<T> softmax_cols(const Tensor<T>& y);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& x, T factor);
template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T offset);
// x * s for a learnable one-element tensor s.
template <typename T>
Tensor<T> scale_by(const Tensor<T>& x, const Tensor<T>& s);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);
template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T negative_slope);
template <typename T>
Tensor<T> clamp01(const Tensor<T>& x);
template <typename T>
Tensor<T> square(const Tensor<T>& x);
template <typename T>
Tensor<T> sqrt(const Tensor<T>& x);
template <typename T>
Tensor<T> abs(const Tensor<T>& x);

// All parts must agree on every extent except `axis`.
template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> parts, std::size_t axis);
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);

struct GradcheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

using ScalarFn = std::function<Tensor<double>(std::span<const Tensor<double>>)>;

// Compares backward() against central differences on every coordinate of
// every input. fn must return a one-element tensor. Relative error per
// coordinate is |a - n| / max(|a|, |n|, floor). Central differences at step
// 1e-5 carry ~1e-10 rounding noise on O(1) outputs, so gradients below the
// floor are held to an absolute tolerance of rel * floor instead.
GradcheckResult gradcheck(const ScalarFn& fn, std::span<Tensor<double>> inputs,
                          double eps = 1e-5, double floor = 1e-6);

}  // namespace dfres
