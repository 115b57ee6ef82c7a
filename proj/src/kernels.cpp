#include "dfres/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "bilinear.hpp"
#include "dfres/tensor.hpp"

namespace dfres::kernels {

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_num_threads(int n) {
#ifdef _OPENMP
  omp_set_num_threads(std::max(1, n));
#else
  (void)n;
#endif
}

namespace {

// Register tile: kRows rows of C by kVecs SIMD vectors, accumulated over the
// whole K range before a single store. Each element is summed over
// kk = 0..k-1 in order regardless of the tile it falls in.
constexpr std::size_t kRows = 4;
constexpr std::size_t kVecs = 4;

template <typename T>
struct Simd {
  typedef T vec __attribute__((vector_size(64)));
  static constexpr std::size_t lanes = 64 / sizeof(T);
  static constexpr std::size_t width = lanes * kVecs;

  static vec load(const T* p) {
    vec v;
    std::memcpy(&v, p, sizeof v);
    return v;
  }
  static void store(T* p, vec v) { std::memcpy(p, &v, sizeof v); }
};

template <typename T>
inline void full_tile(std::size_t k, const T* a, const std::size_t* a_rows, std::size_t a_k_stride,
                      const T* b, std::size_t ldb, T* c, std::size_t ldc, bool accumulate) {
  using S = Simd<T>;
  using vec = typename S::vec;
  vec acc[kRows][kVecs];
  for (std::size_t r = 0; r < kRows; ++r) {
    for (std::size_t v = 0; v < kVecs; ++v) {
      acc[r][v] = accumulate ? S::load(c + r * ldc + v * S::lanes) : vec{};
    }
  }
  for (std::size_t kk = 0; kk < k; ++kk) {
    const T* brow = b + kk * ldb;
    vec bv[kVecs];
    for (std::size_t v = 0; v < kVecs; ++v) bv[v] = S::load(brow + v * S::lanes);
    for (std::size_t r = 0; r < kRows; ++r) {
      const T alpha = a[a_rows[r] + kk * a_k_stride];
      for (std::size_t v = 0; v < kVecs; ++v) acc[r][v] += alpha * bv[v];
    }
  }
  for (std::size_t r = 0; r < kRows; ++r) {
    for (std::size_t v = 0; v < kVecs; ++v) S::store(c + r * ldc + v * S::lanes, acc[r][v]);
  }
}

// C[4,4] block of A * B^T from contiguous rows: vector partial sums over K,
// then a fixed-order lane reduction plus a scalar tail.
template <typename T>
inline void dot_block(std::size_t k, const T* const* a_rows, const T* const* b_rows, T* out) {
  using S = Simd<T>;
  using vec = typename S::vec;
  vec acc[kRows][kRows] = {};
  std::size_t kk = 0;
  for (; kk + S::lanes <= k; kk += S::lanes) {
    vec av[kRows], bv[kRows];
    for (std::size_t r = 0; r < kRows; ++r) av[r] = S::load(a_rows[r] + kk);
    for (std::size_t q = 0; q < kRows; ++q) bv[q] = S::load(b_rows[q] + kk);
    for (std::size_t r = 0; r < kRows; ++r) {
      for (std::size_t q = 0; q < kRows; ++q) acc[r][q] += av[r] * bv[q];
    }
  }
  for (std::size_t r = 0; r < kRows; ++r) {
    for (std::size_t q = 0; q < kRows; ++q) {
      T lanes[S::lanes];
      std::memcpy(lanes, &acc[r][q], sizeof lanes);
      for (std::size_t span = S::lanes / 2; span > 0; span /= 2) {
        for (std::size_t l = 0; l < span; ++l) lanes[l] += lanes[l + span];
      }
      T tail = T(0);
      for (std::size_t t = kk; t < k; ++t) tail += a_rows[r][t] * b_rows[q][t];
      out[r * kRows + q] = lanes[0] + tail;
    }
  }
}

// C = A * B^T with A [M,K] and B [N,K] both row-major.
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate) {
  const auto row_tiles = static_cast<std::int64_t>((m + kRows - 1) / kRows);
  const auto col_tiles = static_cast<std::int64_t>((n + kRows - 1) / kRows);
#pragma omp parallel for collapse(2) schedule(static)
  for (std::int64_t it = 0; it < row_tiles; ++it) {
    for (std::int64_t jt = 0; jt < col_tiles; ++jt) {
      const std::size_t i0 = static_cast<std::size_t>(it) * kRows;
      const std::size_t j0 = static_cast<std::size_t>(jt) * kRows;
      const std::size_t rows = std::min(kRows, m - i0);
      const std::size_t cols = std::min(kRows, n - j0);
      const T* a_rows[kRows];
      const T* b_rows[kRows];
      for (std::size_t r = 0; r < kRows; ++r) {
        a_rows[r] = a + (i0 + std::min(r, rows - 1)) * k;
        b_rows[r] = b + (j0 + std::min(r, cols - 1)) * k;
      }
      T out[kRows * kRows];
      dot_block(k, a_rows, b_rows, out);
      for (std::size_t r = 0; r < rows; ++r) {
        T* c_row = c + (i0 + r) * n + j0;
        for (std::size_t q = 0; q < cols; ++q) {
          c_row[q] = accumulate ? c_row[q] + out[r * kRows + q] : out[r * kRows + q];
        }
      }
    }
  }
}

// out[K, ldo] = op(in) with zero padding past column n. op transposes an
// [N,K] input when `transposed`, else copies a [K,N] input.
template <typename T>
void pack_panel(const T* in, bool transposed, std::size_t n, std::size_t k, std::size_t ldo,
                T* out) {
  constexpr std::size_t B = 16;
  const auto kb = static_cast<std::int64_t>((k + B - 1) / B);
#pragma omp parallel for schedule(static)
  for (std::int64_t bb = 0; bb < kb; ++bb) {
    const std::size_t k0 = static_cast<std::size_t>(bb) * B;
    const std::size_t k1 = std::min(k, k0 + B);
    if (!transposed) {
      for (std::size_t kk = k0; kk < k1; ++kk) {
        std::copy_n(in + kk * n, n, out + kk * ldo);
        std::fill(out + kk * ldo + n, out + (kk + 1) * ldo, T(0));
      }
      continue;
    }
    for (std::size_t j0 = 0; j0 < n; j0 += B) {
      const std::size_t j1 = std::min(n, j0 + B);
      for (std::size_t j = j0; j < j1; ++j) {
        for (std::size_t kk = k0; kk < k1; ++kk) out[kk * ldo + j] = in[j * k + kk];
      }
    }
    for (std::size_t kk = k0; kk < k1; ++kk) std::fill(out + kk * ldo + n, out + (kk + 1) * ldo, T(0));
  }
}

}  // namespace

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a,
          const T* b, T* c, bool accumulate) {
  if (m == 0 || n == 0) return;
  if (k == 0) {
    if (!accumulate) std::fill(c, c + m * n, T(0));
    return;
  }
  if (trans_b && !trans_a && k >= Simd<T>::lanes) {
    gemm_nt(m, n, k, a, b, c, accumulate);
    return;
  }
  constexpr std::size_t NC = Simd<T>::width;
  // B is packed to a zero-padded [K, ldb] panel when it is transposed or its
  // width is not a whole number of tiles, so every tile runs the vector path.
  Buffer<T> packed;
  std::size_t ldb = n;
  if (trans_b || n % NC != 0) {
    ldb = (n + NC - 1) / NC * NC;
    packed.resize(k * ldb);
    pack_panel(b, trans_b, n, k, ldb, packed.data());
    b = packed.data();
  }
  const std::size_t a_row_stride = trans_a ? 1 : k;
  const std::size_t a_k_stride = trans_a ? m : 1;
  const auto row_tiles = static_cast<std::int64_t>((m + kRows - 1) / kRows);
  const auto col_tiles = static_cast<std::int64_t>(ldb / NC);
#pragma omp parallel for collapse(2) schedule(static)
  for (std::int64_t it = 0; it < row_tiles; ++it) {
    for (std::int64_t jt = 0; jt < col_tiles; ++jt) {
      const std::size_t i0 = static_cast<std::size_t>(it) * kRows;
      const std::size_t j0 = static_cast<std::size_t>(jt) * NC;
      const std::size_t rows = std::min(kRows, m - i0);
      const std::size_t cols = std::min(NC, n - j0);
      // Rows past m repeat the last row; their results are discarded.
      std::size_t a_rows[kRows];
      for (std::size_t r = 0; r < kRows; ++r) a_rows[r] = (i0 + std::min(r, rows - 1)) * a_row_stride;
      if (rows == kRows && cols == NC) {
        full_tile<T>(k, a, a_rows, a_k_stride, b + j0, ldb, c + i0 * n + j0, n, accumulate);
        continue;
      }
      alignas(64) T tmp[kRows * NC];
      for (std::size_t r = 0; r < kRows; ++r) {
        for (std::size_t j = 0; j < NC; ++j) {
          tmp[r * NC + j] = (accumulate && r < rows && j < cols) ? c[(i0 + r) * n + j0 + j] : T(0);
        }
      }
      full_tile<T>(k, a, a_rows, a_k_stride, b + j0, ldb, tmp, NC, accumulate);
      for (std::size_t r = 0; r < rows; ++r) std::copy_n(tmp + r * NC, cols, c + (i0 + r) * n + j0);
    }
  }
}

template <typename T>
void im2col(const T* in, std::size_t channels, std::size_t height, std::size_t width,
            std::size_t ksize, std::size_t stride, std::size_t pad, T* cols) {
  const std::size_t out_h = (height + 2 * pad - ksize) / stride + 1;
  const std::size_t out_w = (width + 2 * pad - ksize) / stride + 1;
  const std::size_t plane = out_h * out_w;
  const auto rows = static_cast<std::int64_t>(channels * ksize * ksize);
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < rows; ++r) {
    const auto row = static_cast<std::size_t>(r);
    const std::size_t ch = row / (ksize * ksize);
    const std::size_t ky = (row / ksize) % ksize;
    const std::size_t kx = row % ksize;
    const T* src = in + ch * height * width;
    T* dst = cols + row * plane;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
      T* out_row = dst + oy * out_w;
      if (iy < 0 || iy >= static_cast<long>(height)) {
        std::fill(out_row, out_row + out_w, T(0));
        continue;
      }
      const T* src_row = src + static_cast<std::size_t>(iy) * width;
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
        out_row[ox] = (ix < 0 || ix >= static_cast<long>(width)) ? T(0) : src_row[ix];
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, std::size_t channels, std::size_t height, std::size_t width,
            std::size_t ksize, std::size_t stride, std::size_t pad, T* in_grad) {
  const std::size_t out_h = (height + 2 * pad - ksize) / stride + 1;
  const std::size_t out_w = (width + 2 * pad - ksize) / stride + 1;
  const std::size_t plane = out_h * out_w;
  const auto nch = static_cast<std::int64_t>(channels);
#pragma omp parallel for schedule(static)
  for (std::int64_t c = 0; c < nch; ++c) {
    const auto ch = static_cast<std::size_t>(c);
    T* dst = in_grad + ch * height * width;
    for (std::size_t ky = 0; ky < ksize; ++ky) {
      for (std::size_t kx = 0; kx < ksize; ++kx) {
        const T* src = cols + ((ch * ksize + ky) * ksize + kx) * plane;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
          if (iy < 0 || iy >= static_cast<long>(height)) continue;
          T* dst_row = dst + static_cast<std::size_t>(iy) * width;
          const T* src_row = src + oy * out_w;
          for (std::size_t ox = 0; ox < out_w; ++ox) {
            const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
            if (ix >= 0 && ix < static_cast<long>(width)) dst_row[ix] += src_row[ox];
          }
        }
      }
    }
  }
}

namespace {

template <typename T>
std::vector<detail::BilinearStencil<T>> build_stencils(const T* offsets, std::size_t height,
                                                       std::size_t width) {
  const std::size_t plane = height * width;
  std::vector<detail::BilinearStencil<T>> stencils(9 * plane);
  const auto total = static_cast<std::int64_t>(9 * plane);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < total; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    const std::size_t tap = idx / plane;
    const std::size_t p = idx % plane;
    const T py = static_cast<T>(p / width) + static_cast<T>(tap / 3) - T(1);
    const T px = static_cast<T>(p % width) + static_cast<T>(tap % 3) - T(1);
    const T dy = offsets[(2 * tap) * plane + p];
    const T dx = offsets[(2 * tap + 1) * plane + p];
    stencils[idx] = detail::make_stencil(py + dy, px + dx, height, width);
  }
  return stencils;
}

}  // namespace

template <typename T>
void deform_im2col(const T* in, const T* offsets, std::size_t channels, std::size_t height,
                   std::size_t width, T* cols) {
  const std::size_t plane = height * width;
  const auto stencils = build_stencils(offsets, height, width);
  const auto rows = static_cast<std::int64_t>(channels * 9);
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < rows; ++r) {
    const auto row = static_cast<std::size_t>(r);
    const T* src = in + (row / 9) * plane;
    const auto* st = stencils.data() + (row % 9) * plane;
    T* dst = cols + row * plane;
    for (std::size_t p = 0; p < plane; ++p) dst[p] = detail::sample(st[p], src);
  }
}

template <typename T>
void deform_col2im(const T* cols_grad, const T* in, const T* offsets, std::size_t channels,
                   std::size_t height, std::size_t width, T* in_grad, T* offset_grad) {
  const std::size_t plane = height * width;
  const auto stencils = build_stencils(offsets, height, width);
  if (in_grad != nullptr) {
    const auto nch = static_cast<std::int64_t>(channels);
#pragma omp parallel for schedule(static)
    for (std::int64_t c = 0; c < nch; ++c) {
      const auto ch = static_cast<std::size_t>(c);
      T* dst = in_grad + ch * plane;
      for (std::size_t tap = 0; tap < 9; ++tap) {
        const T* g = cols_grad + (ch * 9 + tap) * plane;
        const auto* st = stencils.data() + tap * plane;
        for (std::size_t p = 0; p < plane; ++p) {
          for (int k = 0; k < 4; ++k) {
            if (st[p].index[k] >= 0) dst[st[p].index[k]] += st[p].weight[k] * g[p];
          }
        }
      }
    }
  }
  if (offset_grad != nullptr) {
    const auto total = static_cast<std::int64_t>(9 * plane);
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < total; ++i) {
      const auto idx = static_cast<std::size_t>(i);
      const std::size_t tap = idx / plane;
      const std::size_t p = idx % plane;
      const auto& st = stencils[idx];
      T gy = T(0);
      T gx = T(0);
      for (std::size_t ch = 0; ch < channels; ++ch) {
        T dy, dx;
        detail::sample_coord_grad(st, in + ch * plane, dy, dx);
        const T g = cols_grad[(ch * 9 + tap) * plane + p];
        gy += g * dy;
        gx += g * dx;
      }
      offset_grad[(2 * tap) * plane + p] += gy;
      offset_grad[(2 * tap + 1) * plane + p] += gx;
    }
  }
}

template <typename T>
void softmax_rows(const T* in, std::size_t m, std::size_t n, T* out) {
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* src = in + static_cast<std::size_t>(r) * n;
    T* dst = out + static_cast<std::size_t>(r) * n;
    const T peak = *std::max_element(src, src + n);
    T total = T(0);
    for (std::size_t j = 0; j < n; ++j) {
      dst[j] = std::exp(src[j] - peak);
      total += dst[j];
    }
    const T inv = T(1) / total;
    for (std::size_t j = 0; j < n; ++j) dst[j] *= inv;
  }
}

namespace reference {

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a,
          const T* b, T* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T sum = T(0);
      for (std::size_t kk = 0; kk < k; ++kk) {
        const T av = trans_a ? a[kk * m + i] : a[i * k + kk];
        const T bv = trans_b ? b[j * k + kk] : b[kk * n + j];
        sum += av * bv;
      }
      c[i * n + j] = accumulate ? c[i * n + j] + sum : sum;
    }
  }
}

template <typename T>
void conv2d(const T* in, std::size_t in_channels, std::size_t height, std::size_t width,
            const T* weight, const T* bias, std::size_t out_channels, std::size_t ksize,
            std::size_t stride, std::size_t pad, T* out) {
  const std::size_t out_h = (height + 2 * pad - ksize) / stride + 1;
  const std::size_t out_w = (width + 2 * pad - ksize) / stride + 1;
  for (std::size_t o = 0; o < out_channels; ++o) {
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        T sum = bias ? bias[o] : T(0);
        for (std::size_t c = 0; c < in_channels; ++c) {
          for (std::size_t ky = 0; ky < ksize; ++ky) {
            for (std::size_t kx = 0; kx < ksize; ++kx) {
              const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
              const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(height) ||
                  ix >= static_cast<long>(width)) {
                continue;
              }
              sum += weight[((o * in_channels + c) * ksize + ky) * ksize + kx] *
                     in[(c * height + static_cast<std::size_t>(iy)) * width +
                        static_cast<std::size_t>(ix)];
            }
          }
        }
        out[(o * out_h + oy) * out_w + ox] = sum;
      }
    }
  }
}

template <typename T>
void deform_conv2d(const T* in, const T* offsets, std::size_t in_channels, std::size_t height,
                   std::size_t width, const T* weight, const T* bias, std::size_t out_channels,
                   T* out) {
  const std::size_t plane = height * width;
  for (std::size_t o = 0; o < out_channels; ++o) {
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        const std::size_t p = y * width + x;
        T sum = bias ? bias[o] : T(0);
        for (std::size_t c = 0; c < in_channels; ++c) {
          for (std::size_t tap = 0; tap < 9; ++tap) {
            const T sy = static_cast<T>(y) + static_cast<T>(tap / 3) - T(1) +
                         offsets[(2 * tap) * plane + p];
            const T sx = static_cast<T>(x) + static_cast<T>(tap % 3) - T(1) +
                         offsets[(2 * tap + 1) * plane + p];
            // Direct four-corner evaluation, independent of the stencil helper.
            const T fy = std::floor(sy);
            const T fx = std::floor(sx);
            const T ly = sy - fy;
            const T lx = sx - fx;
            T v = T(0);
            for (int dy = 0; dy < 2; ++dy) {
              for (int dx = 0; dx < 2; ++dx) {
                const long yy = static_cast<long>(fy) + dy;
                const long xx = static_cast<long>(fx) + dx;
                if (yy < 0 || xx < 0 || yy >= static_cast<long>(height) ||
                    xx >= static_cast<long>(width)) {
                  continue;
                }
                const T wgt = (dy ? ly : T(1) - ly) * (dx ? lx : T(1) - lx);
                v += wgt * in[c * plane + static_cast<std::size_t>(yy) * width +
                              static_cast<std::size_t>(xx)];
              }
            }
            sum += weight[(o * in_channels + c) * 9 + tap] * v;
          }
        }
        out[o * plane + p] = sum;
      }
    }
  }
}

template <typename T>
void softmax_rows(const T* in, std::size_t m, std::size_t n, T* out) {
  for (std::size_t r = 0; r < m; ++r) {
    T peak = in[r * n];
    for (std::size_t j = 1; j < n; ++j) peak = std::max(peak, in[r * n + j]);
    T total = T(0);
    for (std::size_t j = 0; j < n; ++j) total += std::exp(in[r * n + j] - peak);
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = std::exp(in[r * n + j] - peak) / total;
  }
}

}  // namespace reference

#define DFRES_INSTANTIATE_KERNELS(T)                                                          \
  template void gemm<T>(bool, bool, std::size_t, std::size_t, std::size_t, const T*, const T*, \
                        T*, bool);                                                             \
  template void im2col<T>(const T*, std::size_t, std::size_t, std::size_t, std::size_t,        \
                          std::size_t, std::size_t, T*);                                       \
  template void col2im<T>(const T*, std::size_t, std::size_t, std::size_t, std::size_t,        \
                          std::size_t, std::size_t, T*);                                       \
  template void deform_im2col<T>(const T*, const T*, std::size_t, std::size_t, std::size_t,    \
                                 T*);                                                          \
  template void deform_col2im<T>(const T*, const T*, const T*, std::size_t, std::size_t,       \
                                 std::size_t, T*, T*);                                         \
  template void softmax_rows<T>(const T*, std::size_t, std::size_t, T*);                       \
  template void reference::gemm<T>(bool, bool, std::size_t, std::size_t, std::size_t,          \
                                   const T*, const T*, T*, bool);                              \
  template void reference::conv2d<T>(const T*, std::size_t, std::size_t, std::size_t,          \
                                     const T*, const T*, std::size_t, std::size_t,             \
                                     std::size_t, std::size_t, T*);                            \
  template void reference::deform_conv2d<T>(const T*, const T*, std::size_t, std::size_t,      \
                                            std::size_t, const T*, const T*, std::size_t, T*); \
  template void reference::softmax_rows<T>(const T*, std::size_t, std::size_t, T*);

DFRES_INSTANTIATE_KERNELS(float)
DFRES_INSTANTIATE_KERNELS(double)

#undef DFRES_INSTANTIATE_KERNELS

}  // namespace dfres::kernels
