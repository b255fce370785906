#pragma once

#include "resseg/autodiff.hpp"

namespace resseg {

inline constexpr double kBceClamp = 1e-7;
inline constexpr double kDiceSmoothing = 1.0;

/// Mean binary cross entropy. `p` is clamped to [1e-7, 1 - 1e-7]; clamped
/// entries receive zero gradient.
template <typename Scalar>
Var<Scalar> bce_loss(const Var<Scalar>& p, const Tensor<Scalar>& g);

/// 1 - (2·Σgp + s) / (Σg + Σp + s) with s = 1, pooled over the whole tensor.
template <typename Scalar>
Var<Scalar> dice_loss(const Var<Scalar>& p, const Tensor<Scalar>& g);

struct LossWeights {
  double bce = 1.0;
  double dice = 1.0;
};

template <typename Scalar>
Var<Scalar> seg_loss(const Var<Scalar>& p, const Tensor<Scalar>& g, LossWeights weights = {});

/// 1 where p >= threshold, else 0.
template <typename Scalar>
Tensor<Scalar> binarize(const Tensor<Scalar>& p, double threshold = 0.5);

}  // namespace resseg
