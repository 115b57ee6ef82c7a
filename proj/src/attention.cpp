#include "dfres/attention.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dfres/errors.hpp"
#include "dfres/ops.hpp"

namespace dfres {

std::string to_string(AttentionMode mode) {
  switch (mode) {
    case AttentionMode::SA: return "sa";
    case AttentionMode::ESA: return "esa";
    case AttentionMode::None: return "none";
  }
  return "?";
}

AttentionMode attention_mode_from_string(const std::string& name) {
  if (name == "sa") return AttentionMode::SA;
  if (name == "esa") return AttentionMode::ESA;
  if (name == "none") return AttentionMode::None;
  throw std::invalid_argument("unknown attention mode '" + name + "'");
}

namespace {

template <typename T>
struct Projections {
  Tensor<T> q, k, v;  // [qk,n], [qk,n], [C,n]
};

template <typename T>
Projections<T> project(const Tensor<T>& feat, const SAModule<T>& m) {
  if (feat.rank() != 3) throw DimensionError("attention: feat must be [C,h,w]");
  const std::size_t n = feat.dim(1) * feat.dim(2);
  return {reshape(m.query(feat), {m.query.out_channels(), n}),
          reshape(m.key(feat), {m.key.out_channels(), n}),
          reshape(m.value(feat), {m.value.out_channels(), n})};
}

template <typename T>
Tensor<T> finish(const Tensor<T>& feat, const Tensor<T>& core, const SAModule<T>& m) {
  return add(feat, reshape(scale_by(core, m.scale), feat.shape()));
}

}  // namespace

template <typename T>
Tensor<T> sa_attention_matrix(const Tensor<T>& feat, const SAModule<T>& module) {
  const auto p = project(feat, module);
  return softmax_rows(matmul_tn(p.q, p.k));
}

template <typename T>
Tensor<T> sa_forward(const Tensor<T>& feat, const SAModule<T>& module) {
  const auto p = project(feat, module);
  const Tensor<T> attn = softmax_rows(matmul_tn(p.q, p.k));
  return finish(feat, matmul_nt(p.v, attn), module);
}

template <typename T>
Tensor<T> esa_forward(const Tensor<T>& feat, const SAModule<T>& module) {
  const auto p = project(feat, module);
  const Tensor<T> keys = softmax_cols(transpose(p.k));  // [n, qk]
  const Tensor<T> queries = softmax_rows(p.q);          // [qk, n]
  return finish(feat, matmul(matmul(p.v, keys), queries), module);
}

template <typename T>
Tensor<T> attention_forward(AttentionMode mode, const Tensor<T>& feat, const SAModule<T>& module) {
  switch (mode) {
    case AttentionMode::SA: return sa_forward(feat, module);
    case AttentionMode::ESA: return esa_forward(feat, module);
    case AttentionMode::None: return feat;
  }
  return feat;
}

namespace {

template <typename T>
void check_qkv(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v) {
  if (q.rank() != 2 || k.shape() != q.shape() || v.rank() != 2 || v.dim(1) != q.dim(1)) {
    throw DimensionError("attention check: expected q,k [d,n] and v [C,n]");
  }
}

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  T worst = T(0);
  for (std::size_t i = 0; i < a.numel(); ++i) worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  return worst;
}

}  // namespace

template <typename T>
T linear_norm_equivalence_check(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v) {
  check_qkv(q, k, v);
  NoGradGuard no_grad;
  const T inv_n = T(1) / static_cast<T>(q.dim(1));
  // V x ((Q^T K)^T / n)
  const Tensor<T> quadratic = matmul_nt(v, mul_scalar(matmul_tn(q, k), inv_n));
  // (V x K^T) x (Q / n)
  const Tensor<T> linear = matmul(matmul_nt(v, k), mul_scalar(q, inv_n));
  return max_abs_diff(quadratic, linear);
}

template <typename T>
T softmax_path_deviation(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v) {
  check_qkv(q, k, v);
  NoGradGuard no_grad;
  const Tensor<T> sa = matmul_nt(v, softmax_rows(matmul_tn(q, k)));
  const Tensor<T> esa = matmul(matmul(v, softmax_cols(transpose(k))), softmax_rows(q));
  T peak = T(0);
  for (const T x : sa.data()) peak = std::max(peak, std::abs(x));
  return max_abs_diff(sa, esa) / std::max(peak, T(1e-30));
}

#define DFRES_INSTANTIATE_ATTENTION(T)                                                        \
  template Tensor<T> sa_forward(const Tensor<T>&, const SAModule<T>&);                        \
  template Tensor<T> esa_forward(const Tensor<T>&, const SAModule<T>&);                       \
  template Tensor<T> attention_forward(AttentionMode, const Tensor<T>&, const SAModule<T>&);  \
  template Tensor<T> sa_attention_matrix(const Tensor<T>&, const SAModule<T>&);               \
  template T linear_norm_equivalence_check(const Tensor<T>&, const Tensor<T>&,                \
                                           const Tensor<T>&);                                 \
  template T softmax_path_deviation(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);

DFRES_INSTANTIATE_ATTENTION(float)
DFRES_INSTANTIATE_ATTENTION(double)

#undef DFRES_INSTANTIATE_ATTENTION

}  // namespace dfres
