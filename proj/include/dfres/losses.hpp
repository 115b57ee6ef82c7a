#pragma once

#include "dfres/tensor.hpp"

namespace dfres {

inline constexpr double kCharbonnierEps = 1e-3;

// mean(sqrt((pred - gt)^2 + eps^2))
template <typename T>
Tensor<T> charbonnier(const Tensor<T>& pred, const Tensor<T>& gt, T eps);

// mean(|pred - gt|)
template <typename T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& gt);

struct LossWeights {
  double l1 = 1.0;
  double charbonnier = 0.1;
  double charbonnier_eps = kCharbonnierEps;
};

// l1 * L1(pred, gt) + charbonnier * Cb(pred, gt, eps)
template <typename T>
Tensor<T> total_loss(const Tensor<T>& pred, const Tensor<T>& gt, const LossWeights& weights = {});

}  // namespace dfres
