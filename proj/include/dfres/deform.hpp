#pragma once

// Deformable 3x3 convolution and the feature-alignment blocks built on it.
//
// Offset maps are [18,H,W]: channel 2t holds the vertical and 2t+1 the
// horizontal displacement (in pixels) of tap t = ky*3 + kx. One offset map is
// shared by all input channels (a single deformable group).

#include <cstddef>
#include <string>

#include "dfres/layers.hpp"
#include "dfres/tensor.hpp"

namespace dfres {

inline constexpr std::size_t kOffsetChannels = 18;
inline constexpr double kAlignSlope = 0.1;

// Bilinear read of every channel of feat [C,h,w] at coords [2] = (y, x).
// Neighbours outside the map read zero. Differentiable in feat and coords.
template <typename T>
Tensor<T> bilinear_sample(const Tensor<T>& feat, const Tensor<T>& coords);

// input [C_in,H,W], offsets [18,H,W], weight [C_out,C_in,3,3], bias [C_out]
// or undefined. Output [C_out,H,W]; zero offsets reduce to conv2d(pad=1).
template <typename T>
Tensor<T> deform_conv2d(const Tensor<T>& input, const Tensor<T>& offsets, const Tensor<T>& weight,
                        const Tensor<T>& bias);

template <typename T>
struct DeformConv2d {
  Tensor<T> weight;  // [out, in, 3, 3]
  Tensor<T> bias;    // [out]
  Tensor<T> operator()(const Tensor<T>& x, const Tensor<T>& offsets) const {
    return deform_conv2d(x, offsets, weight, bias);
  }
  std::size_t param_count() const { return weight.numel() + bias.numel(); }
};

// How the second deformable layer of a DfRes block gets its offsets.
//   regular: one offset conv on concat(ref, sup), reused by both layers.
//   dfres:   a second offset conv re-estimates offsets from
//            concat(ref, intermediate feature).
enum class OffsetMode { Regular, DfRes };

std::string to_string(OffsetMode mode);
OffsetMode offset_mode_from_string(const std::string& name);

template <typename T>
struct DfResBlock {
  OffsetMode mode = OffsetMode::DfRes;
  Conv<T> offset_first;   // [18, 2C, 3, 3]
  Conv<T> offset_second;  // dfres mode only
  DeformConv2d<T> deform_first;
  DeformConv2d<T> deform_second;

  std::size_t param_count() const;
};

template <typename T>
struct DeltaDfResBlock {
  Conv<T> offset_delta;  // [18, 2C, 3, 3]
  DeformConv2d<T> deform;

  std::size_t param_count() const { return offset_delta.param_count() + deform.param_count(); }
};

template <typename T>
struct AlignResult {
  Tensor<T> feature;
  // dfres: offsets of the last deformable layer; delta: accumulated offsets.
  Tensor<T> offsets;
};

// conv(concat(reference, current)) -> [18,h,w]
template <typename T>
Tensor<T> offset_estimate(const Conv<T>& offset_conv, const Tensor<T>& reference,
                          const Tensor<T>& current);

// sup + deform_second(lrelu(deform_first(sup, o1)), o2)
template <typename T>
AlignResult<T> dfres_forward(const Tensor<T>& reference, const Tensor<T>& supporting,
                             const DfResBlock<T>& block);

// offsets = accumulated + offset_delta(concat(ref, sup));
// returns (sup + deform(sup, offsets), offsets). Pass an undefined
// accumulated tensor for the first block of a chain.
template <typename T>
AlignResult<T> delta_dfres_forward(const Tensor<T>& reference, const Tensor<T>& supporting,
                                   const Tensor<T>& accumulated, const DeltaDfResBlock<T>& block);

}  // namespace dfres
