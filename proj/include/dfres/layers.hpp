#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

#include "dfres/ops.hpp"
#include "dfres/tensor.hpp"

namespace dfres {

// Same-size convolution (stride 1, pad k/2) with bias.
template <typename T>
struct Conv {
  Tensor<T> weight;  // [out, in, k, k]
  Tensor<T> bias;    // [out]

  Tensor<T> operator()(const Tensor<T>& x) const {
    return conv2d(x, weight, bias, 1, weight.dim(2) / 2);
  }
  std::size_t in_channels() const { return weight.dim(1); }
  std::size_t out_channels() const { return weight.dim(0); }
  std::size_t param_count() const { return weight.numel() + bias.numel(); }
};

// Zero-filled trainable conv.
template <typename T>
Conv<T> make_conv(std::size_t in_channels, std::size_t out_channels, std::size_t ksize);

// Deterministic 64-bit seed derived from a base seed and a parameter name
// (FNV-1a over the name mixed with the seed), so that a parameter's initial
// value does not depend on which other parameters exist.
std::uint64_t name_seed(std::uint64_t seed, std::string_view name);

// He (fan-in) normal init scaled by `gain`; bias zeroed.
template <typename T>
void he_init(Conv<T>& conv, std::uint64_t seed, double gain = 1.0);

// x + second(relu(first(x)))
template <typename T>
struct ResBlock {
  Conv<T> first;
  Conv<T> second;
  std::size_t param_count() const { return first.param_count() + second.param_count(); }
};

template <typename T>
Tensor<T> res_block_forward(const Tensor<T>& x, const ResBlock<T>& block);

}  // namespace dfres
