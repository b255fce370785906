#pragma once

#include <string>
#include <vector>

#include "resseg/model_config.hpp"
#include "resseg/tensor.hpp"

namespace resseg {

/// One row of the per-layer cost table (batch size 1).
struct LayerCost {
  std::string name;
  std::string kind;
  Shape output;
  long long params = 0;
  long long macs = 0;
  /// Non-convolution arithmetic, one op per produced element.
  long long elementwise = 0;

  long long flops() const { return 2 * macs + elementwise; }
};

/// Walks the same layer plan `Model` builds and costs every layer.
/// Convolution MACs = output elements · (C_in/groups) · kh · kw; transposed
/// convolution MACs = input elements · (C_out/groups) · kh · kw. BN,
/// activations, pooling, attention products and merges count one op per
/// element they produce.
std::vector<LayerCost> describe_layers(const ModelConfig& cfg, int height = 224, int width = 224);

/// Learnable scalars: conv weights and biases, BN gamma/beta, block alpha/beta.
long long param_count(const ModelConfig& cfg);

/// 2·MACs + elementwise ops for one (1, C_in, height, width) input.
long long flops_count(const ModelConfig& cfg, int height = 224, int width = 224);

std::string format_layer_table(const std::vector<LayerCost>& rows);

}  // namespace resseg
