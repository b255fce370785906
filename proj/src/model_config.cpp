#include "resseg/model_config.hpp"

#include <numeric>
#include <sstream>

#include "resseg/error.hpp"
#include "resseg/keyvalue.hpp"

namespace resseg {

std::string format_int_list(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    out.push_back(static_cast<int>(parse_int("list", item)));
  }
  return out;
}

ModelConfig ModelConfig::vanilla_unet() {
  ModelConfig c;
  c.encoder_widths = {64, 128, 256, 512, 1024};
  c.encoder_blocks = {1, 1, 1, 1, 1};
  c.decoder_widths = {512, 256, 128, 64};
  c.decoder_blocks = {1, 1, 1, 1};
  c.block = BlockKind::DoubleConv;
  c.skip = SkipMode::Concat;
  c.group_base = 1;
  c.conv_bias = false;
  return c;
}

ModelConfig ModelConfig::reduced() {
  ModelConfig c;
  c.encoder_widths = {8, 16, 32};
  c.encoder_blocks = {2, 2, 2};
  c.decoder_widths = {16, 16};
  c.decoder_blocks = {1, 1};
  return c;
}

ModelConfig ModelConfig::preset(const std::string& name) {
  if (name == "proposed") return proposed();
  if (name == "vanilla") return vanilla_unet();
  if (name == "reduced") return reduced();
  throw ConfigError("unknown model preset '" + name + "' (expected proposed|vanilla|reduced)");
}

int ModelConfig::groups_for(int f_out) const {
  return std::gcd(group_base, f_out);
}

void ModelConfig::validate() const {
  const auto fail = [](const std::string& m) { throw ConfigError("model config: " + m); };
  if (encoder_widths.empty()) fail("encoder_widths is empty");
  if (encoder_blocks.size() != encoder_widths.size())
    fail("encoder_blocks has " + std::to_string(encoder_blocks.size()) + " entries, expected " +
         std::to_string(encoder_widths.size()));
  if (decoder_widths.size() + 1 != encoder_widths.size())
    fail("decoder_widths must have one entry fewer than encoder_widths");
  if (decoder_blocks.size() != decoder_widths.size())
    fail("decoder_blocks must match decoder_widths in length");
  for (int w : encoder_widths)
    if (w <= 0) fail("encoder widths must be positive");
  for (int w : decoder_widths)
    if (w <= 0) fail("decoder widths must be positive");
  for (int b : encoder_blocks)
    if (b <= 0) fail("every encoder stage needs at least one block");
  for (int b : decoder_blocks)
    if (b <= 0) fail("every decoder stage needs at least one block");
  if (group_base <= 0) fail("group_base must be positive");
  if (input_channels <= 0 || output_channels <= 0) fail("channel counts must be positive");
  if (bn_momentum < 0 || bn_momentum > 1) fail("bn_momentum must lie in [0,1]");
  if (bn_epsilon <= 0) fail("bn_epsilon must be positive");
}

const std::vector<std::string>& ModelConfig::keys() {
  static const std::vector<std::string> k{
      "encoder_widths", "encoder_blocks", "decoder_widths", "decoder_blocks",
      "block",          "skip",           "group_base",     "conv_bias",
      "input_channels", "output_channels", "alpha_init",    "beta_init",
      "bn_momentum",    "bn_epsilon"};
  return k;
}

bool ModelConfig::apply(const std::string& key, const std::string& value) {
  if (key == "encoder_widths") encoder_widths = parse_int_list(value);
  else if (key == "encoder_blocks") encoder_blocks = parse_int_list(value);
  else if (key == "decoder_widths") decoder_widths = parse_int_list(value);
  else if (key == "decoder_blocks") decoder_blocks = parse_int_list(value);
  else if (key == "block") {
    if (value == "resattn") block = BlockKind::ResAttn;
    else if (value == "double_conv") block = BlockKind::DoubleConv;
    else throw ConfigError("block: expected resattn|double_conv, got '" + value + "'");
  } else if (key == "skip") {
    if (value == "sum") skip = SkipMode::Sum;
    else if (value == "concat") skip = SkipMode::Concat;
    else throw ConfigError("skip: expected sum|concat, got '" + value + "'");
  } else if (key == "group_base") group_base = static_cast<int>(parse_int(key, value));
  else if (key == "conv_bias") conv_bias = parse_bool(key, value);
  else if (key == "input_channels") input_channels = static_cast<int>(parse_int(key, value));
  else if (key == "output_channels") output_channels = static_cast<int>(parse_int(key, value));
  else if (key == "alpha_init") alpha_init = parse_double(key, value);
  else if (key == "beta_init") beta_init = parse_double(key, value);
  else if (key == "bn_momentum") bn_momentum = parse_double(key, value);
  else if (key == "bn_epsilon") bn_epsilon = parse_double(key, value);
  else return false;
  return true;
}

std::vector<std::pair<std::string, std::string>> ModelConfig::to_pairs() const {
  return {
      {"encoder_widths", format_int_list(encoder_widths)},
      {"encoder_blocks", format_int_list(encoder_blocks)},
      {"decoder_widths", format_int_list(decoder_widths)},
      {"decoder_blocks", format_int_list(decoder_blocks)},
      {"block", block == BlockKind::ResAttn ? "resattn" : "double_conv"},
      {"skip", skip == SkipMode::Sum ? "sum" : "concat"},
      {"group_base", std::to_string(group_base)},
      {"conv_bias", conv_bias ? "true" : "false"},
      {"input_channels", std::to_string(input_channels)},
      {"output_channels", std::to_string(output_channels)},
      {"alpha_init", format_double(alpha_init)},
      {"beta_init", format_double(beta_init)},
      {"bn_momentum", format_double(bn_momentum)},
      {"bn_epsilon", format_double(bn_epsilon)},
  };
}

std::string ModelConfig::to_text() const { return format_key_values(to_pairs()); }

ModelConfig ModelConfig::from_text(const std::string& text) {
  ModelConfig c;
  for (const auto& [k, v] : parse_key_values(text)) {
    if (!c.apply(k, v)) throw ConfigError("unknown model config key '" + k + "'");
  }
  c.validate();
  return c;
}

}  // namespace resseg
