#include "dfres/losses.hpp"

#include "dfres/errors.hpp"
#include "dfres/ops.hpp"

namespace dfres {

template <typename T>
Tensor<T> charbonnier(const Tensor<T>& pred, const Tensor<T>& gt, T eps) {
  if (pred.shape() != gt.shape()) throw DimensionError("charbonnier: shape mismatch");
  return mean(sqrt(add_scalar(square(sub(pred, gt)), eps * eps)));
}

template <typename T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& gt) {
  if (pred.shape() != gt.shape()) throw DimensionError("l1_loss: shape mismatch");
  return mean(abs(sub(pred, gt)));
}

template <typename T>
Tensor<T> total_loss(const Tensor<T>& pred, const Tensor<T>& gt, const LossWeights& w) {
  const Tensor<T> l1 = mul_scalar(l1_loss(pred, gt), static_cast<T>(w.l1));
  const Tensor<T> cb = mul_scalar(charbonnier(pred, gt, static_cast<T>(w.charbonnier_eps)),
                                  static_cast<T>(w.charbonnier));
  return add(l1, cb);
}

template Tensor<float> charbonnier(const Tensor<float>&, const Tensor<float>&, float);
template Tensor<double> charbonnier(const Tensor<double>&, const Tensor<double>&, double);
template Tensor<float> l1_loss(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> l1_loss(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> total_loss(const Tensor<float>&, const Tensor<float>&, const LossWeights&);
template Tensor<double> total_loss(const Tensor<double>&, const Tensor<double>&, const LossWeights&);

}  // namespace dfres
