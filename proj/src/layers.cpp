#include "dfres/layers.hpp"

#include <cmath>
#include <random>

namespace dfres {

template <typename T>
Conv<T> make_conv(std::size_t in_channels, std::size_t out_channels, std::size_t ksize) {
  return {Tensor<T>::zeros({out_channels, in_channels, ksize, ksize}, true),
          Tensor<T>::zeros({out_channels}, true)};
}

std::uint64_t name_seed(std::uint64_t seed, std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ (seed * 0x9e3779b97f4a7c15ULL);
  for (const char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <typename T>
void he_init(Conv<T>& conv, std::uint64_t seed, double gain) {
  const std::size_t fan_in = conv.weight.dim(1) * conv.weight.dim(2) * conv.weight.dim(3);
  const double stddev = gain * std::sqrt(2.0 / static_cast<double>(fan_in));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, stddev);
  for (auto& w : conv.weight.mutable_data()) w = static_cast<T>(normal(rng));
  for (auto& b : conv.bias.mutable_data()) b = T(0);
}

template <typename T>
Tensor<T> res_block_forward(const Tensor<T>& x, const ResBlock<T>& block) {
  return add(x, block.second(relu(block.first(x))));
}

template Conv<float> make_conv<float>(std::size_t, std::size_t, std::size_t);
template Conv<double> make_conv<double>(std::size_t, std::size_t, std::size_t);
template void he_init<float>(Conv<float>&, std::uint64_t, double);
template void he_init<double>(Conv<double>&, std::uint64_t, double);
template Tensor<float> res_block_forward(const Tensor<float>&, const ResBlock<float>&);
template Tensor<double> res_block_forward(const Tensor<double>&, const ResBlock<double>&);

}  // namespace dfres
