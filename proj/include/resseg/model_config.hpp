#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace resseg {

enum class BlockKind { ResAttn, DoubleConv };
enum class SkipMode { Sum, Concat };

/// Declarative description of the U-shaped network.
///
/// Encoder stage i runs `encoder_blocks[i]` blocks at `encoder_widths[i]`
/// channels followed by a 2x2 max-pool (none after the last stage). Decoder
/// stage j upsamples with a 2x2/stride-2 transposed convolution to the width
/// of the matching encoder stage, merges the skip (sum or concat), then runs
/// `decoder_blocks[j]` blocks ending at `decoder_widths[j]` channels. A 1x1
/// convolution and a sigmoid produce the output map.
struct ModelConfig {
  std::vector<int> encoder_widths{32, 64, 128, 256, 512};
  std::vector<int> encoder_blocks{2, 2, 2, 2, 6};
  std::vector<int> decoder_widths{256, 128, 64, 64};
  std::vector<int> decoder_blocks{1, 1, 1, 1};
  BlockKind block = BlockKind::ResAttn;
  SkipMode skip = SkipMode::Sum;
  /// Mid 3x3 convolution uses gcd(group_base, f_out) groups; 1 disables.
  int group_base = 32;
  bool conv_bias = true;
  int input_channels = 3;
  int output_channels = 1;
  double alpha_init = 1.0;
  double beta_init = 1.0;
  double bn_momentum = 0.1;
  double bn_epsilon = 1e-5;

  /// Lightweight residual-attention network (default).
  static ModelConfig proposed() { return ModelConfig{}; }
  /// Classic U-Net baseline: widths 64..1024, double 3x3 conv + BN + ReLU
  /// blocks without conv bias, concatenated skips.
  static ModelConfig vanilla_unet();
  /// Narrow three-stage network for desk-scale runs and tests.
  static ModelConfig reduced();
  static ModelConfig preset(const std::string& name);

  void validate() const;
  int groups_for(int f_out) const;
  /// Input H and W must be multiples of this.
  int downsample_factor() const { return 1 << (static_cast<int>(encoder_widths.size()) - 1); }

  /// Recognised keys, in serialisation order.
  static const std::vector<std::string>& keys();
  /// Returns false for keys that do not belong to the model.
  bool apply(const std::string& key, const std::string& value);
  std::vector<std::pair<std::string, std::string>> to_pairs() const;
  std::string to_text() const;
  static ModelConfig from_text(const std::string& text);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

std::string format_int_list(const std::vector<int>& v);
std::vector<int> parse_int_list(const std::string& s);

}  // namespace resseg
