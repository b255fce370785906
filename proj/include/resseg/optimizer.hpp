#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "resseg/autodiff.hpp"

namespace resseg {

/// A named learnable tensor. Layer-adaptive parameters (conv weights) get the
/// LAMB trust ratio; 1-D parameters (biases, BN affine, attention scalars)
/// use ratio 1.
template <typename Scalar>
struct Parameter {
  std::string name;
  Var<Scalar> var;
  bool layer_adaptive = false;
};

struct LambHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-6;
  double weight_decay = 0.0;
};

template <typename Scalar>
struct LambState {
  struct Moments {
    Tensor<Scalar> m;
    Tensor<Scalar> v;
  };

  LambHyper hyper;
  std::uint64_t step = 0;
  std::map<std::string, Moments> moments;
};

/// ‖w‖/‖u‖, or exactly 1 when either norm is zero.
double trust_ratio(double weight_norm, double update_norm);

/// One LAMB update from the gradients currently held by `params`. A
/// parameter with no gradient buffer is treated as having zero gradient.
/// Throws NumericError, leaving parameters and state untouched, if any
/// gradient is non-finite.
template <typename Scalar>
void lamb_step(std::span<Parameter<Scalar>> params, LambState<Scalar>& state);

/// Uniform on [-a, a] with a = sqrt(6 / (fan_in + fan_out)).
template <typename Scalar>
Tensor<Scalar> xavier_init(Shape shape, int fan_in, int fan_out, std::uint64_t seed);

}  // namespace resseg
