#include "resseg/losses.hpp"

#include <algorithm>
#include <cmath>

namespace resseg {

namespace {

void check_same(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw ShapeError(std::string(op) + ": prediction " + a.str() + " vs target " + b.str());
}

}  // namespace

template <typename Scalar>
Var<Scalar> bce_loss(const Var<Scalar>& p, const Tensor<Scalar>& g) {
  check_same(p.shape(), g.shape(), "bce_loss");
  const Tensor<Scalar>& pv = p.value();
  const double m = static_cast<double>(pv.size());
  double total = 0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double pi = std::clamp<double>(pv[i], kBceClamp, 1.0 - kBceClamp);
    total -= g[i] * std::log(pi) + (1.0 - g[i]) * std::log(1.0 - pi);
  }
  return make_result<Scalar>(Tensor<Scalar>::scalar(static_cast<Scalar>(total / m)), {p}, "bce_loss",
                             [g, m](Node<Scalar>& self) {
                               auto& np = *self.inputs[0];
                               Tensor<Scalar>& gp = np.grad_buffer();
                               const double up = self.grad[0] / m;
                               for (std::size_t i = 0; i < gp.size(); ++i) {
                                 const double pi = np.value[i];
                                 if (pi < kBceClamp || pi > 1.0 - kBceClamp) continue;
                                 gp[i] += static_cast<Scalar>(
                                     -up * (g[i] / pi - (1.0 - g[i]) / (1.0 - pi)));
                               }
                             });
}

template <typename Scalar>
Var<Scalar> dice_loss(const Var<Scalar>& p, const Tensor<Scalar>& g) {
  check_same(p.shape(), g.shape(), "dice_loss");
  const Tensor<Scalar>& pv = p.value();
  double inter = 0, sum_g = 0, sum_p = 0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    inter += static_cast<double>(g[i]) * pv[i];
    sum_g += g[i];
    sum_p += pv[i];
  }
  const double num = 2.0 * inter + kDiceSmoothing;
  const double den = sum_g + sum_p + kDiceSmoothing;
  return make_result<Scalar>(Tensor<Scalar>::scalar(static_cast<Scalar>(1.0 - num / den)), {p},
                             "dice_loss", [g, num, den](Node<Scalar>& self) {
                               auto& np = *self.inputs[0];
                               Tensor<Scalar>& gp = np.grad_buffer();
                               const double up = self.grad[0];
                               for (std::size_t i = 0; i < gp.size(); ++i) {
                                 gp[i] += static_cast<Scalar>(-up * (2.0 * g[i] * den - num) /
                                                              (den * den));
                               }
                             });
}

template <typename Scalar>
Var<Scalar> seg_loss(const Var<Scalar>& p, const Tensor<Scalar>& g, LossWeights weights) {
  return add(mul_const(bce_loss(p, g), static_cast<Scalar>(weights.bce)),
             mul_const(dice_loss(p, g), static_cast<Scalar>(weights.dice)));
}

template <typename Scalar>
Tensor<Scalar> binarize(const Tensor<Scalar>& p, double threshold) {
  Tensor<Scalar> out(p.shape());
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = p[i] >= threshold ? Scalar(1) : Scalar(0);
  return out;
}

#define RESSEG_INSTANTIATE_LOSSES(T)                                    \
  template Var<T> bce_loss(const Var<T>&, const Tensor<T>&);            \
  template Var<T> dice_loss(const Var<T>&, const Tensor<T>&);           \
  template Var<T> seg_loss(const Var<T>&, const Tensor<T>&, LossWeights); \
  template Tensor<T> binarize(const Tensor<T>&, double);

RESSEG_INSTANTIATE_LOSSES(float)
RESSEG_INSTANTIATE_LOSSES(double)

}  // namespace resseg
