#pragma once

// Self-attention over the pixels of one feature map, plus its linear-cost
// reassociation used at test time.
//
// With Q, K in R^{q x n} and V in R^{C x n} taken from 1x1 convolutions of
// the feature map (n = h*w):
//   SA  = V x softmax_rows(Q^T x K)^T * scale
//   ESA = V x softmax_cols(K^T) x softmax_rows(Q) * scale
// and the module output is feat + (SA or ESA) reshaped to [C,h,w]. ESA never
// forms an n x n matrix.

#include <string>

#include "dfres/layers.hpp"
#include "dfres/tensor.hpp"

namespace dfres {

enum class AttentionMode { SA, ESA, None };

std::string to_string(AttentionMode mode);
AttentionMode attention_mode_from_string(const std::string& name);

template <typename T>
struct SAModule {
  Conv<T> entry;   // C -> C, 3x3; applied by the caller before sa/esa_forward
  Conv<T> query;   // C -> C/8, 1x1
  Conv<T> key;     // C -> C/8, 1x1
  Conv<T> value;   // C -> C, 1x1
  Tensor<T> scale;  // [1]

  std::size_t param_count() const {
    return entry.param_count() + query.param_count() + key.param_count() + value.param_count() +
           scale.numel();
  }
};

// feat is the entry-conv output [C,h,w].
template <typename T>
Tensor<T> sa_forward(const Tensor<T>& feat, const SAModule<T>& module);

template <typename T>
Tensor<T> esa_forward(const Tensor<T>& feat, const SAModule<T>& module);

// Dispatches on mode; None returns feat unchanged.
template <typename T>
Tensor<T> attention_forward(AttentionMode mode, const Tensor<T>& feat, const SAModule<T>& module);

// softmax_rows(Q^T x K), the [n,n] attention matrix used by sa_forward.
template <typename T>
Tensor<T> sa_attention_matrix(const Tensor<T>& feat, const SAModule<T>& module);

// With both softmaxes replaced by rho(Y) = Y / n, SA and ESA are the same
// triple product in two association orders: V x ((Q^T K)^T / n) versus
// (V x K^T) x (Q / n). Returns the max elementwise |difference|.
// q, k: [qk, n]; v: [C, n].
template <typename T>
T linear_norm_equivalence_check(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v);

// With the real softmaxes: max |SA core - ESA core| / max |SA core|, where
// the cores are the bracketed products before scaling.
template <typename T>
T softmax_path_deviation(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v);

}  // namespace dfres
