#include "dfres/deform.hpp"

#include <array>
#include <stdexcept>

#include "autograd.hpp"
#include "bilinear.hpp"
#include "dfres/errors.hpp"
#include "dfres/kernels.hpp"

namespace dfres {

using detail::grad_of;
using detail::ImplPtr;
using detail::make_result;

template <typename T>
Tensor<T> bilinear_sample(const Tensor<T>& feat, const Tensor<T>& coords) {
  if (feat.rank() != 3) throw DimensionError("bilinear_sample: feat must be [C,h,w]");
  if (coords.numel() != 2) throw DimensionError("bilinear_sample: coords must hold (y, x)");
  const std::size_t channels = feat.dim(0), h = feat.dim(1), w = feat.dim(2);
  const std::size_t plane = h * w;
  const auto st = detail::make_stencil(coords.data()[0], coords.data()[1], h, w);
  Buffer<T> out(channels);
  for (std::size_t c = 0; c < channels; ++c) out[c] = detail::sample(st, feat.data().data() + c * plane);
  ImplPtr<T> fi = feat.impl(), ci = coords.impl();
  return make_result<T>("bilinear_sample", {channels}, std::move(out), {feat, coords},
                        [=](const auto& o) {
                          if (T* gf = grad_of(fi)) {
                            for (std::size_t c = 0; c < channels; ++c) {
                              for (int k = 0; k < 4; ++k) {
                                if (st.index[k] >= 0) gf[c * plane + st.index[k]] += st.weight[k] * o.grad[c];
                              }
                            }
                          }
                          if (T* gc = grad_of(ci)) {
                            for (std::size_t c = 0; c < channels; ++c) {
                              T dy, dx;
                              detail::sample_coord_grad(st, fi->data.data() + c * plane, dy, dx);
                              gc[0] += o.grad[c] * dy;
                              gc[1] += o.grad[c] * dx;
                            }
                          }
                        });
}

template <typename T>
Tensor<T> deform_conv2d(const Tensor<T>& input, const Tensor<T>& offsets, const Tensor<T>& weight,
                        const Tensor<T>& bias) {
  if (input.rank() != 3) throw DimensionError("deform_conv2d: input must be [C,H,W]");
  const std::size_t in_c = input.dim(0), h = input.dim(1), w = input.dim(2);
  if (offsets.shape() != Shape{kOffsetChannels, h, w}) {
    throw DimensionError("deform_conv2d: offsets must be [18," + std::to_string(h) + "," +
                         std::to_string(w) + "], got " + shape_str(offsets.shape()));
  }
  if (weight.rank() != 4 || weight.dim(1) != in_c || weight.dim(2) != 3 || weight.dim(3) != 3) {
    throw DimensionError("deform_conv2d: weight " + shape_str(weight.shape()) +
                         " incompatible with input " + shape_str(input.shape()));
  }
  const std::size_t out_c = weight.dim(0);
  if (bias.defined() && bias.shape() != Shape{out_c}) {
    throw DimensionError("deform_conv2d: bias must be [" + std::to_string(out_c) + "]");
  }
  const std::size_t plane = h * w;
  const std::size_t ck = in_c * 9;

  Buffer<T> out(out_c * plane);
  {
    Buffer<T> cols(ck * plane);
    kernels::deform_im2col(input.data().data(), offsets.data().data(), in_c, h, w, cols.data());
    kernels::gemm(false, false, out_c, plane, ck, weight.data().data(), cols.data(), out.data(), false);
  }
  if (bias.defined()) {
    for (std::size_t o = 0; o < out_c; ++o) {
      for (std::size_t p = 0; p < plane; ++p) out[o * plane + p] += bias.data()[o];
    }
  }

  ImplPtr<T> xi = input.impl(), oi = offsets.impl(), wi = weight.impl(), bi = bias.impl();
  return make_result<T>(
      "deform_conv2d", {out_c, h, w}, std::move(out), {input, offsets, weight, bias},
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
        T* go = grad_of(oi);
        Buffer<T> cols(ck * plane);
        if (gw) {
          kernels::deform_im2col(xi->data.data(), oi->data.data(), in_c, h, w, cols.data());
          kernels::gemm(false, true, out_c, ck, plane, g, cols.data(), gw, true);
        }
        if (gx || go) {
          kernels::gemm(true, false, ck, plane, out_c, wi->data.data(), g, cols.data(), false);
          kernels::deform_col2im(cols.data(), xi->data.data(), oi->data.data(), in_c, h, w, gx, go);
        }
      });
}

std::string to_string(OffsetMode mode) {
  return mode == OffsetMode::Regular ? "regular" : "dfres";
}

OffsetMode offset_mode_from_string(const std::string& name) {
  if (name == "regular") return OffsetMode::Regular;
  if (name == "dfres") return OffsetMode::DfRes;
  throw std::invalid_argument("unknown offset mode '" + name + "'");
}

template <typename T>
std::size_t DfResBlock<T>::param_count() const {
  std::size_t n = offset_first.param_count() + deform_first.param_count() +
                  deform_second.param_count();
  if (mode == OffsetMode::DfRes) n += offset_second.param_count();
  return n;
}

template <typename T>
Tensor<T> offset_estimate(const Conv<T>& offset_conv, const Tensor<T>& reference,
                          const Tensor<T>& current) {
  if (reference.shape() != current.shape()) {
    throw DimensionError("offset_estimate: reference " + shape_str(reference.shape()) +
                         " vs current " + shape_str(current.shape()));
  }
  const std::array<Tensor<T>, 2> parts{reference, current};
  return offset_conv(concat<T>(parts, 0));
}

template <typename T>
AlignResult<T> dfres_forward(const Tensor<T>& reference, const Tensor<T>& supporting,
                             const DfResBlock<T>& block) {
  const Tensor<T> first_offsets = offset_estimate(block.offset_first, reference, supporting);
  const Tensor<T> mid =
      leaky_relu(block.deform_first(supporting, first_offsets), static_cast<T>(kAlignSlope));
  const Tensor<T> second_offsets = block.mode == OffsetMode::DfRes
                                       ? offset_estimate(block.offset_second, reference, mid)
                                       : first_offsets;
  return {add(supporting, block.deform_second(mid, second_offsets)), second_offsets};
}

template <typename T>
AlignResult<T> delta_dfres_forward(const Tensor<T>& reference, const Tensor<T>& supporting,
                                   const Tensor<T>& accumulated, const DeltaDfResBlock<T>& block) {
  const Tensor<T> delta = offset_estimate(block.offset_delta, reference, supporting);
  const Tensor<T> offsets = accumulated.defined() ? add(accumulated, delta) : delta;
  return {add(supporting, block.deform(supporting, offsets)), offsets};
}

#define DFRES_INSTANTIATE_DEFORM(T)                                                          \
  template Tensor<T> bilinear_sample(const Tensor<T>&, const Tensor<T>&);                     \
  template Tensor<T> deform_conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,      \
                                   const Tensor<T>&);                                         \
  template struct DfResBlock<T>;                                                              \
  template Tensor<T> offset_estimate(const Conv<T>&, const Tensor<T>&, const Tensor<T>&);     \
  template AlignResult<T> dfres_forward(const Tensor<T>&, const Tensor<T>&,                   \
                                        const DfResBlock<T>&);                                \
  template AlignResult<T> delta_dfres_forward(const Tensor<T>&, const Tensor<T>&,             \
                                              const Tensor<T>&, const DeltaDfResBlock<T>&);

DFRES_INSTANTIATE_DEFORM(float)
DFRES_INSTANTIATE_DEFORM(double)

#undef DFRES_INSTANTIATE_DEFORM

}  // namespace dfres
