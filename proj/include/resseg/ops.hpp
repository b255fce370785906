#pragma once

#include <optional>
#include <string>

#include "resseg/autodiff.hpp"

namespace resseg {

enum class Mode { Train, Eval };

/// Geometry of a (possibly grouped) 2-D convolution.
///
/// For a regular convolution the weight is laid out (out, in/groups, kh, kw).
/// For a transposed convolution `in_channels` is the channel count of the
/// tensor being upsampled and the weight is laid out (in, out/groups, kh, kw),
/// i.e. the same tensor a matching forward convolution out->in would use.
struct Conv2dSpec {
  int in_channels = 1;
  int out_channels = 1;
  int kh = 1;
  int kw = 1;
  int stride = 1;
  int padding = 0;
  int groups = 1;
  bool has_bias = true;

  void validate() const;

  Shape weight_shape() const {
    return Shape{out_channels, in_channels / groups, kh, kw};
  }
  Shape transposed_weight_shape() const {
    return Shape{in_channels, out_channels / groups, kh, kw};
  }
  Shape bias_shape() const { return Shape{1, out_channels, 1, 1}; }

  /// out·(in/groups)·kh·kw (+ out when biased). Same for both directions.
  long long param_count() const {
    return static_cast<long long>(out_channels) * (in_channels / groups) * kh * kw +
           (has_bias ? out_channels : 0);
  }

  int out_extent(int in) const { return (in + 2 * padding - kh) / stride + 1; }
  int out_extent_w(int in) const { return (in + 2 * padding - kw) / stride + 1; }
  int transposed_out_extent(int in) const { return (in - 1) * stride - 2 * padding + kh; }
  int transposed_out_extent_w(int in) const { return (in - 1) * stride - 2 * padding + kw; }
};

template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Conv2dSpec& spec, const Var<Scalar>& weight,
                   const std::optional<Var<Scalar>>& bias);

template <typename Scalar>
Var<Scalar> transpose_conv2d(const Var<Scalar>& x, const Conv2dSpec& spec,
                             const Var<Scalar>& weight, const std::optional<Var<Scalar>>& bias);

/// Learnable affine (gamma, beta) plus running statistics for one BN layer.
template <typename Scalar>
struct BatchNormState {
  Var<Scalar> gamma;
  Var<Scalar> beta;
  Tensor<Scalar> running_mean;
  Tensor<Scalar> running_var;
  Scalar momentum = Scalar(0.1);
  Scalar epsilon = Scalar(1e-5);

  static BatchNormState make(int channels, Scalar momentum = Scalar(0.1),
                             Scalar epsilon = Scalar(1e-5));
  int channels() const { return gamma.shape().c; }
};

/// Train mode normalises with batch statistics over (N,H,W) and blends them
/// into the running statistics (unbiased variance, PyTorch convention). Eval
/// mode is the fixed per-channel affine map given by the running statistics.
template <typename Scalar>
Var<Scalar> batchnorm2d(const Var<Scalar>& x, BatchNormState<Scalar>& state, Mode mode);

/// Exact erf form: x·Φ(x).
template <typename Scalar>
Var<Scalar> gelu(const Var<Scalar>& x);

template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& x);

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& x);

/// Window max; gradient goes to the first maximal element in row-major order.
template <typename Scalar>
Var<Scalar> maxpool2d(const Var<Scalar>& x, int kernel = 2, int stride = 2);

/// sigmoid(global max over H,W) per channel -> (N,C,1,1).
template <typename Scalar>
Var<Scalar> channel_attention(const Var<Scalar>& x);

/// Softmax over all H·W positions of the channel-mean map -> (N,1,H,W).
template <typename Scalar>
Var<Scalar> spatial_attention(const Var<Scalar>& x);

template <typename Scalar>
Var<Scalar> concat_channels(const Var<Scalar>& a, const Var<Scalar>& b);

// Scalar reference functions shared by the kernels above.
double gelu_value(double x);
double gelu_derivative(double x);
double sigmoid_value(double x);

}  // namespace resseg
