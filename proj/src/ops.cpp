#include "dfres/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "autograd.hpp"
#include "dfres/errors.hpp"
#include "dfres/kernels.hpp"

namespace dfres {

using detail::grad_of;
using detail::ImplPtr;
using detail::make_result;

namespace {

template <typename T>
void require_rank(const Tensor<T>& t, std::size_t rank, const char* op, const char* what) {
  if (!t.defined() || t.rank() != rank) {
    throw DimensionError(std::string(op) + ": " + what + " must have rank " +
                         std::to_string(rank) +
                         (t.defined() ? ", got " + shape_str(t.shape()) : ", got undefined"));
  }
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

// Elementwise unary op with derivative expressed through input x and output y.
template <typename T, typename F, typename DF>
Tensor<T> unary(const char* op, const Tensor<T>& x, F f, DF df) {
  const auto xs = x.data();
  Buffer<T> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = f(xs[i]);
  ImplPtr<T> xi = x.impl();
  return make_result<T>(op, x.shape(), std::move(out), {x}, [xi, df](const auto& o) {
    T* gx = grad_of(xi);
    if (!gx) return;
    for (std::size_t i = 0; i < o.grad.size(); ++i) gx[i] += o.grad[i] * df(xi->data[i], o.data[i]);
  });
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 std::size_t stride, std::size_t pad) {
  require_rank(input, 3, "conv2d", "input");
  require_rank(weight, 4, "conv2d", "weight");
  const std::size_t in_c = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t out_c = weight.dim(0), k = weight.dim(2);
  if (weight.dim(1) != in_c || weight.dim(3) != k || k % 2 == 0) {
    throw DimensionError("conv2d: weight " + shape_str(weight.shape()) +
                         " incompatible with input " + shape_str(input.shape()));
  }
  if (bias.defined() && bias.shape() != Shape{out_c}) {
    throw DimensionError("conv2d: bias must be [" + std::to_string(out_c) + "]");
  }
  if (stride == 0 || h + 2 * pad < k || w + 2 * pad < k) {
    throw DimensionError("conv2d: kernel does not fit input " + shape_str(input.shape()));
  }
  const std::size_t oh = (h + 2 * pad - k) / stride + 1;
  const std::size_t ow = (w + 2 * pad - k) / stride + 1;
  const std::size_t plane = oh * ow;
  const std::size_t ck = in_c * k * k;
  const bool pointwise = k == 1 && stride == 1 && pad == 0;

  Buffer<T> out(out_c * plane);
  {
    Buffer<T> cols;
    const T* col_ptr = input.data().data();
    if (!pointwise) {
      cols.resize(ck * plane);
      kernels::im2col(input.data().data(), in_c, h, w, k, stride, pad, cols.data());
      col_ptr = cols.data();
    }
    kernels::gemm(false, false, out_c, plane, ck, weight.data().data(), col_ptr, out.data(), false);
  }
  if (bias.defined()) {
    const auto b = bias.data();
    for (std::size_t o = 0; o < out_c; ++o) {
      T* row = out.data() + o * plane;
      for (std::size_t p = 0; p < plane; ++p) row[p] += b[o];
    }
  }

  ImplPtr<T> xi = input.impl(), wi = weight.impl(), bi = bias.impl();
  return make_result<T>(
      "conv2d", {out_c, oh, ow}, std::move(out), {input, weight, bias},
      [=](const auto& o) {
        const T* g = o.grad.data();
        if (T* gb = grad_of(bi)) {
          for (std::size_t c = 0; c < out_c; ++c) {
            T s = T(0);
            for (std::size_t p = 0; p < plane; ++p) s += g[c * plane + p];
            gb[c] += s;
          }
        }
        T* gw = grad_of(wi);
        T* gx = grad_of(xi);
        if (!gw && !gx) return;
        if (pointwise) {
          if (gw) kernels::gemm(false, true, out_c, ck, plane, g, xi->data.data(), gw, true);
          if (gx) kernels::gemm(true, false, ck, plane, out_c, wi->data.data(), g, gx, true);
          return;
        }
        Buffer<T> cols(ck * plane);
        if (gw) {
          kernels::im2col(xi->data.data(), in_c, h, w, k, stride, pad, cols.data());
          kernels::gemm(false, true, out_c, ck, plane, g, cols.data(), gw, true);
        }
        if (gx) {
          kernels::gemm(true, false, ck, plane, out_c, wi->data.data(), g, cols.data(), false);
          kernels::col2im(cols.data(), in_c, h, w, k, stride, pad, gx);
        }
      });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a, 2, "matmul", "a");
  require_rank(b, 2, "matmul", "b");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  Buffer<T> out(m * n);
  kernels::gemm(false, false, m, n, k, a.data().data(), b.data().data(), out.data(), false);
  ImplPtr<T> ai = a.impl(), bi = b.impl();
  return make_result<T>("matmul", {m, n}, std::move(out), {a, b}, [=](const auto& o) {
    if (T* ga = grad_of(ai)) kernels::gemm(false, true, m, k, n, o.grad.data(), bi->data.data(), ga, true);
    if (T* gb = grad_of(bi)) kernels::gemm(true, false, k, n, m, ai->data.data(), o.grad.data(), gb, true);
  });
}

template <typename T>
Tensor<T> matmul_tn(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a, 2, "matmul_tn", "a");
  require_rank(b, 2, "matmul_tn", "b");
  const std::size_t k = a.dim(0), m = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul_tn: inner dimensions differ " + shape_str(a.shape()) + "^T x " +
                         shape_str(b.shape()));
  }
  Buffer<T> out(m * n);
  kernels::gemm(true, false, m, n, k, a.data().data(), b.data().data(), out.data(), false);
  ImplPtr<T> ai = a.impl(), bi = b.impl();
  return make_result<T>("matmul_tn", {m, n}, std::move(out), {a, b}, [=](const auto& o) {
    // a is [k,m]: ga = b * g^T ; gb = a * g
    if (T* ga = grad_of(ai)) kernels::gemm(false, true, k, m, n, bi->data.data(), o.grad.data(), ga, true);
    if (T* gb = grad_of(bi)) kernels::gemm(false, false, k, n, m, ai->data.data(), o.grad.data(), gb, true);
  });
}

template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a, 2, "matmul_nt", "a");
  require_rank(b, 2, "matmul_nt", "b");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) {
    throw DimensionError("matmul_nt: inner dimensions differ " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()) + "^T");
  }
  Buffer<T> out(m * n);
  kernels::gemm(false, true, m, n, k, a.data().data(), b.data().data(), out.data(), false);
  ImplPtr<T> ai = a.impl(), bi = b.impl();
  return make_result<T>("matmul_nt", {m, n}, std::move(out), {a, b}, [=](const auto& o) {
    // b is [n,k]: ga = g * b ; gb = g^T * a
    if (T* ga = grad_of(ai)) kernels::gemm(false, false, m, k, n, o.grad.data(), bi->data.data(), ga, true);
    if (T* gb = grad_of(bi)) kernels::gemm(true, false, n, k, m, o.grad.data(), ai->data.data(), gb, true);
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  require_rank(a, 2, "transpose", "a");
  const std::size_t m = a.dim(0), n = a.dim(1);
  const auto src = a.data();
  Buffer<T> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = src[i * n + j];
  }
  ImplPtr<T> ai = a.impl();
  return make_result<T>("transpose", {n, m}, std::move(out), {a}, [=](const auto& o) {
    T* ga = grad_of(ai);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += o.grad[j * m + i];
    }
  });
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& y) {
  require_rank(y, 2, "softmax_rows", "input");
  const std::size_t m = y.dim(0), n = y.dim(1);
  Buffer<T> out(m * n);
  kernels::softmax_rows(y.data().data(), m, n, out.data());
  ImplPtr<T> yi = y.impl();
  return make_result<T>("softmax_rows", {m, n}, std::move(out), {y}, [=](const auto& o) {
    T* gy = grad_of(yi);
    for (std::size_t r = 0; r < m; ++r) {
      const T* s = o.data.data() + r * n;
      const T* g = o.grad.data() + r * n;
      T inner = T(0);
      for (std::size_t j = 0; j < n; ++j) inner += g[j] * s[j];
      for (std::size_t j = 0; j < n; ++j) gy[r * n + j] += s[j] * (g[j] - inner);
    }
  });
}

template <typename T>
Tensor<T> softmax_cols(const Tensor<T>& y) {
  require_rank(y, 2, "softmax_cols", "input");
  const std::size_t m = y.dim(0), n = y.dim(1);
  const auto src = y.data();
  Buffer<T> out(m * n);
  for (std::size_t c = 0; c < n; ++c) {
    T peak = src[c];
    for (std::size_t r = 1; r < m; ++r) peak = std::max(peak, src[r * n + c]);
    T total = T(0);
    for (std::size_t r = 0; r < m; ++r) {
      out[r * n + c] = std::exp(src[r * n + c] - peak);
      total += out[r * n + c];
    }
    const T inv = T(1) / total;
    for (std::size_t r = 0; r < m; ++r) out[r * n + c] *= inv;
  }
  ImplPtr<T> yi = y.impl();
  return make_result<T>("softmax_cols", {m, n}, std::move(out), {y}, [=](const auto& o) {
    T* gy = grad_of(yi);
    for (std::size_t c = 0; c < n; ++c) {
      T inner = T(0);
      for (std::size_t r = 0; r < m; ++r) inner += o.grad[r * n + c] * o.data[r * n + c];
      for (std::size_t r = 0; r < m; ++r) {
        gy[r * n + c] += o.data[r * n + c] * (o.grad[r * n + c] - inner);
      }
    }
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  const auto x = a.data(), y = b.data();
  Buffer<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  ImplPtr<T> ai = a.impl(), bi = b.impl();
  return make_result<T>("add", a.shape(), std::move(out), {a, b}, [=](const auto& o) {
    if (T* ga = grad_of(ai)) for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i];
    if (T* gb = grad_of(bi)) for (std::size_t i = 0; i < o.grad.size(); ++i) gb[i] += o.grad[i];
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  const auto x = a.data(), y = b.data();
  Buffer<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  ImplPtr<T> ai = a.impl(), bi = b.impl();
  return make_result<T>("sub", a.shape(), std::move(out), {a, b}, [=](const auto& o) {
    if (T* ga = grad_of(ai)) for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i];
    if (T* gb = grad_of(bi)) for (std::size_t i = 0; i < o.grad.size(); ++i) gb[i] -= o.grad[i];
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  const auto x = a.data(), y = b.data();
  Buffer<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  ImplPtr<T> ai = a.impl(), bi = b.impl();
  return make_result<T>("mul", a.shape(), std::move(out), {a, b}, [=](const auto& o) {
    if (T* ga = grad_of(ai)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i] * bi->data[i];
    }
    if (T* gb = grad_of(bi)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) gb[i] += o.grad[i] * ai->data[i];
    }
  });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& x, T factor) {
  return unary<T>("mul_scalar", x, [factor](T v) { return v * factor; },
                  [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T offset) {
  return unary<T>("add_scalar", x, [offset](T v) { return v + offset; },
                  [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> scale_by(const Tensor<T>& x, const Tensor<T>& s) {
  if (!s.defined() || s.numel() != 1) throw DimensionError("scale_by: scale must have one element");
  const T factor = s.item();
  const auto xs = x.data();
  Buffer<T> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = xs[i] * factor;
  ImplPtr<T> xi = x.impl(), si = s.impl();
  return make_result<T>("scale_by", x.shape(), std::move(out), {x, s}, [=](const auto& o) {
    if (T* gx = grad_of(xi)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) gx[i] += o.grad[i] * factor;
    }
    if (T* gs = grad_of(si)) {
      T acc = T(0);
      for (std::size_t i = 0; i < o.grad.size(); ++i) acc += o.grad[i] * xi->data[i];
      gs[0] += acc;
    }
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return unary<T>("relu", x, [](T v) { return v > T(0) ? v : T(0); },
                  [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T negative_slope) {
  return unary<T>("leaky_relu", x,
                  [negative_slope](T v) { return v > T(0) ? v : v * negative_slope; },
                  [negative_slope](T v, T) { return v > T(0) ? T(1) : negative_slope; });
}

template <typename T>
Tensor<T> clamp01(const Tensor<T>& x) {
  return unary<T>("clamp01", x, [](T v) { return std::clamp(v, T(0), T(1)); },
                  [](T v, T) { return (v > T(0) && v < T(1)) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
  return unary<T>("square", x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& x) {
  return unary<T>("sqrt", x, [](T v) { return std::sqrt(v); },
                  [](T, T y) { return T(0.5) / y; });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
  return unary<T>("abs", x, [](T v) { return std::abs(v); },
                  [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw DimensionError("concat: axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == first[d];
    if (!ok) {
      throw DimensionError("concat: " + shape_str(s) + " incompatible with " + shape_str(first));
    }
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  const std::size_t row = out_shape[axis] * inner;

  Buffer<T> out(shape_numel(out_shape));
  std::vector<std::size_t> starts;
  std::vector<ImplPtr<T>> impls;
  std::size_t start = 0;
  for (const auto& p : parts) {
    const std::size_t chunk = p.dim(axis) * inner;
    const auto src = p.data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(src.data() + o * chunk, chunk, out.data() + o * row + start);
    }
    starts.push_back(start);
    impls.push_back(p.impl());
    start += chunk;
  }
  return make_result<T>(
      "concat", out_shape, std::move(out), std::vector<Tensor<T>>(parts.begin(), parts.end()),
      [=](const auto& o) {
        for (std::size_t i = 0; i < impls.size(); ++i) {
          T* g = grad_of(impls[i]);
          if (!g) continue;
          const std::size_t chunk = impls[i]->shape[axis] * inner;
          for (std::size_t r = 0; r < outer; ++r) {
            const T* src = o.grad.data() + r * row + starts[i];
            for (std::size_t j = 0; j < chunk; ++j) g[r * chunk + j] += src[j];
          }
        }
      });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  const auto xs = x.data();
  Buffer<T> out(xs.begin(), xs.end());
  ImplPtr<T> xi = x.impl();
  return make_result<T>("reshape", std::move(shape), std::move(out), {x}, [=](const auto& o) {
    T* gx = grad_of(xi);
    for (std::size_t i = 0; i < o.grad.size(); ++i) gx[i] += o.grad[i];
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = T(0);
  for (const T v : x.data()) acc += v;
  ImplPtr<T> xi = x.impl();
  return make_result<T>("sum", {1}, Buffer<T>{acc}, {x}, [=](const auto& o) {
    T* gx = grad_of(xi);
    for (std::size_t i = 0; i < xi->data.size(); ++i) gx[i] += o.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  T acc = T(0);
  for (const T v : x.data()) acc += v;
  const T inv = T(1) / static_cast<T>(x.numel());
  ImplPtr<T> xi = x.impl();
  return make_result<T>("mean", {1}, Buffer<T>{acc * inv}, {x}, [=](const auto& o) {
    T* gx = grad_of(xi);
    for (std::size_t i = 0; i < xi->data.size(); ++i) gx[i] += o.grad[0] * inv;
  });
}

GradcheckResult gradcheck(const ScalarFn& fn, std::span<Tensor<double>> inputs, double eps,
                          double floor) {
  for (auto& in : inputs) {
    if (!in.is_leaf()) throw std::invalid_argument("gradcheck: inputs must be leaf tensors");
    in.set_requires_grad(true);
    in.zero_grad();
  }
  const Tensor<double> out = fn(inputs);
  if (out.numel() != 1) throw DimensionError("gradcheck: function must return a scalar");
  out.backward();

  GradcheckResult result;
  NoGradGuard no_grad;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto values = inputs[i].mutable_data();
    const std::vector<double> analytic = inputs[i].has_grad()
                                             ? std::vector<double>(inputs[i].grad().begin(),
                                                                   inputs[i].grad().end())
                                             : std::vector<double>(values.size(), 0.0);
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double saved = values[j];
      values[j] = saved + eps;
      const double up = fn(inputs).item();
      values[j] = saved - eps;
      const double down = fn(inputs).item();
      values[j] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double denom = std::max({std::abs(analytic[j]), std::abs(numeric), floor});
      const double rel = std::abs(analytic[j] - numeric) / denom;
      if (rel > result.max_rel_error) {
        result = {rel, i, j, analytic[j], numeric};
      }
    }
  }
  return result;
}

#define DFRES_INSTANTIATE_OPS(T)                                                              \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t, \
                            std::size_t);                                                      \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> matmul_tn(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> matmul_nt(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> transpose(const Tensor<T>&);                                              \
  template Tensor<T> softmax_rows(const Tensor<T>&);                                           \
  template Tensor<T> softmax_cols(const Tensor<T>&);                                           \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> mul_scalar(const Tensor<T>&, T);                                          \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                          \
  template Tensor<T> scale_by(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> relu(const Tensor<T>&);                                                   \
  template Tensor<T> leaky_relu(const Tensor<T>&, T);                                          \
  template Tensor<T> clamp01(const Tensor<T>&);                                                \
  template Tensor<T> square(const Tensor<T>&);                                                 \
  template Tensor<T> sqrt(const Tensor<T>&);                                                   \
  template Tensor<T> abs(const Tensor<T>&);                                                    \
  template Tensor<T> concat(std::span<const Tensor<T>>, std::size_t);                          \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                         \
  template Tensor<T> sum(const Tensor<T>&);                                                    \
  template Tensor<T> mean(const Tensor<T>&);

DFRES_INSTANTIATE_OPS(float)
DFRES_INSTANTIATE_OPS(double)

#undef DFRES_INSTANTIATE_OPS

}  // namespace dfres
