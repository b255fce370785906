#pragma once

#include <cstdint>
#include <string>

#include "resseg/augment.hpp"
#include "resseg/keyvalue.hpp"
#include "resseg/losses.hpp"
#include "resseg/model_config.hpp"
#include "resseg/optimizer.hpp"

namespace resseg {

/// Everything a command needs besides its paths. Serialised as flat
/// key=value text; `model=<preset>` selects the starting ModelConfig and is
/// applied before any other key regardless of its position.
struct RunConfig {
  std::string preset = "proposed";
  ModelConfig model;
  LambHyper optimizer;
  int batch = 16;
  int epochs = 100;
  LossWeights loss;
  double threshold = 0.5;
  bool tta = false;
  std::uint64_t seed = 0;
  bool augment = true;
  AugmentParams aug;
  int patch_size = 224;

  /// Throws ConfigError on unknown keys or bad values.
  void apply(const std::string& key, const std::string& value);
  void apply_all(const KeyValues& kv);
  void validate() const;

  KeyValues to_pairs() const;
  std::string to_text() const { return format_key_values(to_pairs()); }
  static RunConfig from_text(const std::string& text);
};

}  // namespace resseg
