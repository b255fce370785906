#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "resseg/model_config.hpp"
#include "resseg/ops.hpp"
#include "resseg/optimizer.hpp"

namespace resseg {

/// Convolution (or transposed convolution) with its learnables.
template <typename Scalar>
struct ConvLayer {
  Conv2dSpec spec;
  bool transposed = false;
  Var<Scalar> weight;
  std::optional<Var<Scalar>> bias;

  static ConvLayer make(const Conv2dSpec& spec, bool transposed, std::uint64_t seed);
  Var<Scalar> operator()(const Var<Scalar>& x) const;
};

/// Residual attention block:
///   out = F_conv + alpha·(R ⊙ F_c) + beta·(R ⊙ F_s)
/// where F_conv is conv1x1 -> conv3x3 (grouped) -> conv1x1, each followed by
/// BN and GELU; R is the block input or its 1x1 projection when widths
/// differ; F_c / F_s are the channel and spatial attention maps of R.
template <typename Scalar>
struct ResAttnBlock {
  int f_in = 0;
  int f_out = 0;
  int groups_mid = 1;
  ConvLayer<Scalar> conv1, conv2, conv3;
  BatchNormState<Scalar> bn1, bn2, bn3;
  std::optional<ConvLayer<Scalar>> projection;
  Var<Scalar> alpha;
  Var<Scalar> beta;

  static ResAttnBlock make(int f_in, int f_out, const ModelConfig& cfg,
                           const std::function<std::uint64_t()>& next_seed);
  /// The conv-bn-gelu chain alone.
  Var<Scalar> main_path(const Var<Scalar>& x, Mode mode);
  Var<Scalar> residual(const Var<Scalar>& x) const;
};

template <typename Scalar>
Var<Scalar> resattn_forward(const Var<Scalar>& x, ResAttnBlock<Scalar>& block, Mode mode);

/// Baseline U-Net unit: (conv3x3 -> BN -> ReLU) x 2.
template <typename Scalar>
struct DoubleConvBlock {
  int f_in = 0;
  int f_out = 0;
  ConvLayer<Scalar> conv1, conv2;
  BatchNormState<Scalar> bn1, bn2;

  static DoubleConvBlock make(int f_in, int f_out, const ModelConfig& cfg,
                              const std::function<std::uint64_t()>& next_seed);
  Var<Scalar> forward(const Var<Scalar>& x, Mode mode);
};

template <typename Scalar>
using Block = std::variant<ResAttnBlock<Scalar>, DoubleConvBlock<Scalar>>;

/// The encoder-decoder network. Parameters are shared handles: updating the
/// tensors returned by `parameters()` updates the model.
template <typename Scalar>
class Model {
 public:
  explicit Model(ModelConfig config, std::uint64_t seed = 0);
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  /// (N, C_in, H, W) -> (N, C_out, H, W) probabilities in (0,1).
  Var<Scalar> forward(const Var<Scalar>& x, Mode mode);
  /// Eval-mode forward without building a graph.
  Tensor<Scalar> predict(const Tensor<Scalar>& x);

  const ModelConfig& config() const { return config_; }

  std::vector<Parameter<Scalar>> parameters();
  /// BN running statistics, keyed like parameters.
  std::vector<std::pair<std::string, Tensor<Scalar>*>> buffers();
  long long param_count();
  void zero_grad();

  std::vector<std::vector<Block<Scalar>>>& encoder() { return encoder_; }
  std::vector<std::vector<Block<Scalar>>>& decoder() { return decoder_; }
  std::vector<ConvLayer<Scalar>>& upsamplers() { return ups_; }
  ConvLayer<Scalar>& head() { return head_; }

 private:
  ModelConfig config_;
  std::vector<std::vector<Block<Scalar>>> encoder_;
  std::vector<ConvLayer<Scalar>> ups_;
  std::vector<std::vector<Block<Scalar>>> decoder_;
  ConvLayer<Scalar> head_;
};

}  // namespace resseg
