#include <array>

#include "dfres/attention.hpp"
#include "dfres/deform.hpp"
#include "dfres/layers.hpp"
#include "dfres/losses.hpp"
#include "grad_helpers.hpp"

using namespace dfres;
using gradtest::check;
using gradtest::project;
using gradtest::rand_tensor;
using Td = Tensor<double>;
using Inputs = std::span<const Td>;

TEST_CASE("gradcheck conv2d with padding and stride") {
  std::mt19937_64 rng(1);
  for (std::size_t stride : {1u, 2u}) {
    for (std::size_t pad : {0u, 1u}) {
      auto x = rand_tensor(rng, {3, 6, 5});
      auto w = rand_tensor(rng, {4, 3, 3, 3});
      auto b = rand_tensor(rng, {4});
      check([&](Inputs in) { return project(conv2d(in[0], in[1], in[2], stride, pad)); },
            {x, w, b});
    }
  }
}

TEST_CASE("gradcheck 1x1 conv without bias") {
  std::mt19937_64 rng(2);
  auto x = rand_tensor(rng, {5, 4, 4});
  auto w = rand_tensor(rng, {2, 5, 1, 1});
  check([](Inputs in) { return project(conv2d(in[0], in[1], Td{}, 1, 0)); }, {x, w});
}

TEST_CASE("gradcheck matmul variants") {
  std::mt19937_64 rng(3);
  auto a = rand_tensor(rng, {5, 7});
  auto b = rand_tensor(rng, {7, 4});
  auto at = rand_tensor(rng, {7, 5});
  auto bt = rand_tensor(rng, {4, 7});
  check([](Inputs in) { return project(matmul(in[0], in[1])); }, {a, b});
  check([](Inputs in) { return project(matmul_tn(in[0], in[1])); }, {at, b});
  check([](Inputs in) { return project(matmul_nt(in[0], in[1])); }, {a, bt});
  check([](Inputs in) { return project(transpose(in[0])); }, {a});
}

TEST_CASE("gradcheck softmaxes") {
  std::mt19937_64 rng(4);
  auto y = rand_tensor(rng, {4, 6}, -3.0, 3.0);
  check([](Inputs in) { return project(softmax_rows(in[0])); }, {y});
  check([](Inputs in) { return project(softmax_cols(in[0])); }, {y});
}

TEST_CASE("gradcheck elementwise ops") {
  std::mt19937_64 rng(5);
  auto a = rand_tensor(rng, {3, 4});
  auto b = rand_tensor(rng, {3, 4});
  auto pos = rand_tensor(rng, {3, 4}, 0.5, 2.0);
  auto s = rand_tensor(rng, {1});
  check([](Inputs in) { return project(add(in[0], in[1])); }, {a, b});
  check([](Inputs in) { return project(sub(in[0], in[1])); }, {a, b});
  check([](Inputs in) { return project(mul(in[0], in[1])); }, {a, b});
  check([](Inputs in) { return project(mul_scalar(in[0], 1.7)); }, {a});
  check([](Inputs in) { return project(add_scalar(in[0], -0.3)); }, {a});
  check([](Inputs in) { return project(scale_by(in[0], in[1])); }, {a, s});
  check([](Inputs in) { return project(square(in[0])); }, {a});
  check([](Inputs in) { return project(sqrt(in[0])); }, {pos});
  // Kinks at zero: random draws stay away from them with probability ~1.
  check([](Inputs in) { return project(relu(in[0])); }, {a});
  check([](Inputs in) { return project(leaky_relu(in[0], 0.1)); }, {a});
  check([](Inputs in) { return project(abs(in[0])); }, {a});
  check([](Inputs in) { return project(clamp01(in[0])); }, {a});
  check([](Inputs in) { return mean(in[0]); }, {a});
}

TEST_CASE("gradcheck concat and reshape") {
  std::mt19937_64 rng(6);
  auto a = rand_tensor(rng, {2, 3, 4});
  auto b = rand_tensor(rng, {5, 3, 4});
  check(
      [](Inputs in) {
        const std::array<Td, 2> parts{in[0], in[1]};
        return project(concat<double>(parts, 0));
      },
      {a, b});
  auto c = rand_tensor(rng, {2, 3, 2});
  check(
      [](Inputs in) {
        const std::array<Td, 2> parts{in[0], in[1]};
        return project(concat<double>(parts, 2));
      },
      {a, c});
  check([](Inputs in) { return project(reshape(in[0], {6, 4})); }, {a});
}

TEST_CASE("gradcheck bilinear_sample at non-lattice points") {
  std::mt19937_64 rng(7);
  auto feat = rand_tensor(rng, {3, 5, 6});
  // Interior, near a border, and partly outside the map.
  for (auto [y, x] : std::array<std::pair<double, double>, 4>{
           {{1.3, 2.6}, {0.2, 4.7}, {-0.4, 1.5}, {4.35, 5.4}}}) {
    auto coords = oracle::tensor<double>({y, x}, {2});
    check([](Inputs in) { return project(bilinear_sample(in[0], in[1])); }, {feat, coords});
  }
}

TEST_CASE("gradcheck deform_conv2d with non-lattice offsets") {
  std::mt19937_64 rng(8);
  const std::size_t h = 5, w = 6;
  auto x = rand_tensor(rng, {3, h, w});
  auto off = oracle::tensor<double>(oracle::off_lattice_offsets(rng, h, w), {18, h, w});
  auto wt = rand_tensor(rng, {4, 3, 3, 3});
  auto b = rand_tensor(rng, {4});
  check([](Inputs in) { return project(deform_conv2d(in[0], in[1], in[2], in[3])); },
        {x, off, wt, b});
}

namespace {

Conv<double> rand_conv(std::mt19937_64& rng, std::size_t in, std::size_t out, std::size_t k,
                       double scale = 0.3, double bias_lo = -0.1, double bias_hi = 0.1) {
  Conv<double> c;
  c.weight = rand_tensor(rng, {out, in, k, k}, -scale, scale);
  c.bias = rand_tensor(rng, {out}, bias_lo, bias_hi);
  return c;
}

// Offset convs with small weights around a fractional bias keep every
// sampling position strictly between lattice points.
Conv<double> offset_conv(std::mt19937_64& rng, std::size_t channels) {
  return rand_conv(rng, 2 * channels, kOffsetChannels, 3, 0.01, 0.3, 0.7);
}

DeformConv2d<double> rand_deform(std::mt19937_64& rng, std::size_t c) {
  return {rand_tensor(rng, {c, c, 3, 3}, -0.3, 0.3), rand_tensor(rng, {c}, -0.1, 0.1)};
}

std::vector<Td> conv_params(const Conv<double>& c) { return {c.weight, c.bias}; }

void append(std::vector<Td>& to, const std::vector<Td>& from) {
  to.insert(to.end(), from.begin(), from.end());
}

}  // namespace

TEST_CASE("gradcheck residual block") {
  std::mt19937_64 rng(9);
  ResBlock<double> block{rand_conv(rng, 4, 4, 3), rand_conv(rng, 4, 4, 3)};
  auto x = rand_tensor(rng, {4, 4, 5});
  std::vector<Td> inputs{x};
  append(inputs, conv_params(block.first));
  append(inputs, conv_params(block.second));
  check([&](Inputs in) { return project(res_block_forward(in[0], block)); }, inputs);
}

TEST_CASE("gradcheck DfRes block in both offset modes") {
  for (auto mode : {OffsetMode::DfRes, OffsetMode::Regular}) {
    CAPTURE(to_string(mode));
    std::mt19937_64 rng(10);
    const std::size_t c = 3;
    DfResBlock<double> block;
    block.mode = mode;
    block.offset_first = offset_conv(rng, c);
    if (mode == OffsetMode::DfRes) block.offset_second = offset_conv(rng, c);
    block.deform_first = rand_deform(rng, c);
    block.deform_second = rand_deform(rng, c);
    auto ref = rand_tensor(rng, {c, 4, 5});
    auto sup = rand_tensor(rng, {c, 4, 5});
    std::vector<Td> inputs{ref, sup};
    append(inputs, conv_params(block.offset_first));
    if (mode == OffsetMode::DfRes) append(inputs, conv_params(block.offset_second));
    append(inputs, {block.deform_first.weight, block.deform_first.bias, block.deform_second.weight,
                    block.deform_second.bias});
    check(
        [&](Inputs in) {
          const auto r = dfres_forward(in[0], in[1], block);
          return add(project(r.feature), project(r.offsets, 7));
        },
        inputs);
  }
}

TEST_CASE("gradcheck chained delta DfRes blocks") {
  std::mt19937_64 rng(11);
  const std::size_t c = 3;
  std::array<DeltaDfResBlock<double>, 2> chain;
  for (auto& b : chain) {
    b.offset_delta = rand_conv(rng, 2 * c, kOffsetChannels, 3, 0.01, 0.15, 0.35);
    b.deform = rand_deform(rng, c);
  }
  auto ref = rand_tensor(rng, {c, 4, 5});
  auto sup = rand_tensor(rng, {c, 4, 5});
  std::vector<Td> inputs{ref, sup};
  for (auto& b : chain) {
    append(inputs, conv_params(b.offset_delta));
    append(inputs, {b.deform.weight, b.deform.bias});
  }
  check(
      [&](Inputs in) {
        Td feat = in[1], acc;
        for (const auto& b : chain) {
          const auto r = delta_dfres_forward(in[0], feat, acc, b);
          feat = r.feature;
          acc = r.offsets;
        }
        return add(project(feat), project(acc, 7));
      },
      inputs);
}

namespace {

SAModule<double> rand_sa(std::mt19937_64& rng, std::size_t c, std::size_t qk) {
  SAModule<double> m;
  m.entry = rand_conv(rng, c, c, 3);
  m.query = rand_conv(rng, c, qk, 1, 0.8);
  m.key = rand_conv(rng, c, qk, 1, 0.8);
  m.value = rand_conv(rng, c, c, 1, 0.8);
  m.scale = oracle::tensor<double>({0.7}, {1});
  return m;
}

std::vector<Td> sa_params(const SAModule<double>& m) {
  return {m.query.weight, m.query.bias, m.key.weight, m.key.bias, m.value.weight, m.value.bias,
          m.scale};
}

}  // namespace

TEST_CASE("gradcheck self-attention module, both association orders") {
  std::mt19937_64 rng(12);
  const auto m = rand_sa(rng, 8, 2);
  auto feat = rand_tensor(rng, {8, 3, 4});
  std::vector<Td> inputs{feat};
  append(inputs, sa_params(m));
  check([&](Inputs in) { return project(sa_forward(in[0], m)); }, inputs);
  check([&](Inputs in) { return project(esa_forward(in[0], m)); }, inputs);
}

TEST_CASE("gradcheck losses") {
  std::mt19937_64 rng(13);
  auto pred = rand_tensor(rng, {3, 4, 5}, 0.0, 1.0);
  auto gt = rand_tensor(rng, {3, 4, 5}, 0.0, 1.0);
  check([](Inputs in) { return charbonnier(in[0], in[1], kCharbonnierEps); }, {pred, gt});
  check([](Inputs in) { return charbonnier(in[0], in[1], 0.5); }, {pred, gt});
  check([](Inputs in) { return l1_loss(in[0], in[1]); }, {pred, gt});
  check([](Inputs in) { return total_loss(in[0], in[1]); }, {pred, gt});
}
