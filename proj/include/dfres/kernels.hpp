#pragma once

// OpenMP compute kernels behind the autograd ops, plus a naive serial
// reference for each one (namespace `reference`) kept for tests and the
// benchmark target.
//
// Every parallel kernel assigns each output element to exactly one thread
// and sums its terms in a fixed order, so results do not depend on the
// thread count.

#include <cstddef>

namespace dfres::kernels {

// Number of OpenMP threads kernels will use; 1 when built without OpenMP.
int max_threads();
void set_num_threads(int n);

// C[M,N] = op(A) * op(B)  (+ C when accumulate). Row-major, no leading
// dimension padding. op(A) is A[M,K] or, with trans_a, A[K,M].
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a,
          const T* b, T* c, bool accumulate);

// Square kernels only. cols has shape [channels*ksize*ksize, out_h*out_w].
template <typename T>
void im2col(const T* in, std::size_t channels, std::size_t height, std::size_t width,
            std::size_t ksize, std::size_t stride, std::size_t pad, T* cols);

// Adjoint of im2col; accumulates into in_grad.
template <typename T>
void col2im(const T* cols, std::size_t channels, std::size_t height, std::size_t width,
            std::size_t ksize, std::size_t stride, std::size_t pad, T* in_grad);

// 3x3 deformable sampling columns. offsets is [18,H,W] with channel 2t = dy
// and 2t+1 = dx for tap t = ky*3 + kx. Tap (ky,kx) at pixel (y,x) samples
// the input at (y + ky - 1 + dy, x + kx - 1 + dx) with bilinear weights;
// neighbours outside the map read zero.
template <typename T>
void deform_im2col(const T* in, const T* offsets, std::size_t channels, std::size_t height,
                   std::size_t width, T* cols);

// Adjoint of deform_im2col given column grads. Either output may be null.
// in_grad and offset_grad are accumulated into.
template <typename T>
void deform_col2im(const T* cols_grad, const T* in, const T* offsets, std::size_t channels,
                   std::size_t height, std::size_t width, T* in_grad, T* offset_grad);

// Row-wise max-subtracted softmax of an [m,n] matrix.
template <typename T>
void softmax_rows(const T* in, std::size_t m, std::size_t n, T* out);

namespace reference {

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a,
          const T* b, T* c, bool accumulate);

// Direct 6-deep loop convolution (cross-correlation, zero padding).
template <typename T>
void conv2d(const T* in, std::size_t in_channels, std::size_t height, std::size_t width,
            const T* weight, const T* bias, std::size_t out_channels, std::size_t ksize,
            std::size_t stride, std::size_t pad, T* out);

// Per-output-pixel deformable 3x3 convolution with pad 1.
template <typename T>
void deform_conv2d(const T* in, const T* offsets, std::size_t in_channels, std::size_t height,
                   std::size_t width, const T* weight, const T* bias, std::size_t out_channels,
                   T* out);

template <typename T>
void softmax_rows(const T* in, std::size_t m, std::size_t n, T* out);

}  // namespace reference

}  // namespace dfres::kernels
