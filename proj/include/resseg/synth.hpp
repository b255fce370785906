#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "resseg/image_io.hpp"

namespace resseg {

/// Pixel (x, y) is foreground when its centre (x + 0.5, y + 0.5) satisfies
/// (u/a)^2 + (v/b)^2 <= 1, with (u, v) the offset from (cx, cy) rotated by
/// -theta.
struct Ellipse {
  double cx = 0;
  double cy = 0;
  double a = 1;
  double b = 1;
  double theta = 0;

  bool contains(double px, double py) const;
};

struct SynthSample {
  Sample sample;
  std::vector<Ellipse> ellipses;
};

/// 1-3 reddish ellipses on a textured skin-tone background. Deterministic
/// for a given seed.
SynthSample synth_sample(std::uint64_t seed, int height = 224, int width = 224);

struct SynthLayout {
  int train = 16;
  int validation = 4;
  int height = 224;
  int width = 224;
};

/// Writes root/{train,validation}/{images,labels}/synth_NNNN.png.
void write_synth_corpus(const std::filesystem::path& root, const SynthLayout& layout, std::uint64_t seed);

}  // namespace resseg
