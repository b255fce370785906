#include "resseg/run_config.hpp"

#include <charconv>
#include <functional>
#include <map>

namespace resseg {

namespace {

struct DoubleKey {
  const char* key;
  double RunConfig::*outer;
  double AugmentParams::*aug;
};

// Plain double-valued keys; exactly one of the member pointers is set.
const std::vector<DoubleKey>& double_keys() {
  static const std::vector<DoubleKey> k{
      {"threshold", &RunConfig::threshold, nullptr},
      {"aug_p_hflip", nullptr, &AugmentParams::p_hflip},
      {"aug_p_vflip", nullptr, &AugmentParams::p_vflip},
      {"aug_p_rot90", nullptr, &AugmentParams::p_rot90},
      {"aug_p_crop", nullptr, &AugmentParams::p_crop},
      {"aug_crop_scale_min", nullptr, &AugmentParams::crop_scale_min},
      {"aug_crop_scale_max", nullptr, &AugmentParams::crop_scale_max},
      {"aug_crop_ratio_min", nullptr, &AugmentParams::crop_ratio_min},
      {"aug_crop_ratio_max", nullptr, &AugmentParams::crop_ratio_max},
      {"aug_p_affine", nullptr, &AugmentParams::p_affine},
      {"aug_affine_degrees", nullptr, &AugmentParams::affine_degrees},
      {"aug_affine_translate", nullptr, &AugmentParams::affine_translate},
      {"aug_p_hsv", nullptr, &AugmentParams::p_hsv},
      {"aug_hue_shift", nullptr, &AugmentParams::hue_shift},
      {"aug_saturation_scale", nullptr, &AugmentParams::saturation_scale},
      {"aug_value_scale", nullptr, &AugmentParams::value_scale},
      {"aug_p_blur", nullptr, &AugmentParams::p_blur},
      {"aug_p_noise", nullptr, &AugmentParams::p_noise},
      {"aug_noise_sigma", nullptr, &AugmentParams::noise_sigma},
  };
  return k;
}

}  // namespace

void RunConfig::apply(const std::string& key, const std::string& value) {
  if (key == "model") {
    preset = value;
    model = ModelConfig::preset(value);
  } else if (model.apply(key, value)) {
  } else if (key == "lr") optimizer.lr = parse_double(key, value);
  else if (key == "beta1") optimizer.beta1 = parse_double(key, value);
  else if (key == "beta2") optimizer.beta2 = parse_double(key, value);
  else if (key == "epsilon") optimizer.epsilon = parse_double(key, value);
  else if (key == "weight_decay") optimizer.weight_decay = parse_double(key, value);
  else if (key == "batch") batch = static_cast<int>(parse_int(key, value));
  else if (key == "epochs") epochs = static_cast<int>(parse_int(key, value));
  else if (key == "bce_weight") loss.bce = parse_double(key, value);
  else if (key == "dice_weight") loss.dice = parse_double(key, value);
  else if (key == "tta") tta = parse_bool(key, value);
  else if (key == "seed") {
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), seed);
    if (ec != std::errc() || ptr != value.data() + value.size()) {
      throw ConfigError("seed: expected unsigned 64-bit integer, got '" + value + "'");
    }
  } else if (key == "augment") augment = parse_bool(key, value);
  else if (key == "patch_size") patch_size = static_cast<int>(parse_int(key, value));
  else {
    for (const auto& d : double_keys()) {
      if (key == d.key) {
        const double v = parse_double(key, value);
        if (d.outer) this->*d.outer = v;
        else aug.*d.aug = v;
        return;
      }
    }
    throw ConfigError("unknown config key '" + key + "'");
  }
}

void RunConfig::apply_all(const KeyValues& kv) {
  for (const auto& [k, v] : kv)
    if (k == "model") apply(k, v);
  for (const auto& [k, v] : kv)
    if (k != "model") apply(k, v);
}

void RunConfig::validate() const {
  model.validate();
  if (batch < 1) throw ConfigError("batch must be >= 1");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (optimizer.lr <= 0) throw ConfigError("lr must be positive");
  if (threshold <= 0 || threshold >= 1) throw ConfigError("threshold must lie in (0,1)");
  if (patch_size < 1 || patch_size % model.downsample_factor() != 0) {
    throw ConfigError("patch_size " + std::to_string(patch_size) + " must be a positive multiple of " +
                      std::to_string(model.downsample_factor()));
  }
  if (aug.crop_scale_min <= 0 || aug.crop_scale_min > aug.crop_scale_max || aug.crop_scale_max > 1) {
    throw ConfigError("crop scale range must satisfy 0 < min <= max <= 1");
  }
  if (aug.crop_ratio_min <= 0 || aug.crop_ratio_min > aug.crop_ratio_max) {
    throw ConfigError("crop ratio range must satisfy 0 < min <= max");
  }
}

KeyValues RunConfig::to_pairs() const {
  KeyValues kv{{"model", preset}};
  for (auto& p : model.to_pairs()) kv.push_back(std::move(p));
  kv.insert(kv.end(), {
                          {"lr", format_double(optimizer.lr)},
                          {"beta1", format_double(optimizer.beta1)},
                          {"beta2", format_double(optimizer.beta2)},
                          {"epsilon", format_double(optimizer.epsilon)},
                          {"weight_decay", format_double(optimizer.weight_decay)},
                          {"batch", std::to_string(batch)},
                          {"epochs", std::to_string(epochs)},
                          {"bce_weight", format_double(loss.bce)},
                          {"dice_weight", format_double(loss.dice)},
                          {"tta", tta ? "true" : "false"},
                          {"seed", std::to_string(seed)},
                          {"augment", augment ? "true" : "false"},
                          {"patch_size", std::to_string(patch_size)},
                      });
  for (const auto& d : double_keys()) kv.emplace_back(d.key, format_double(d.outer ? this->*d.outer : aug.*d.aug));
  return kv;
}

RunConfig RunConfig::from_text(const std::string& text) {
  RunConfig c;
  c.apply_all(parse_key_values(text));
  c.validate();
  return c;
}

}  // namespace resseg
