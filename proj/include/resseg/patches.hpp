#pragma once

#include <span>
#include <utility>
#include <vector>

#include "resseg/tensor.hpp"

namespace resseg {

inline constexpr int kPatchSize = 224;

/// Non-overlapping tiling of an image zero-padded on the right and bottom
/// to multiples of `size`. Origins are (y, x), row-major.
struct PatchGrid {
  int height = 0;
  int width = 0;
  int padded_height = 0;
  int padded_width = 0;
  int size = kPatchSize;
  std::vector<std::pair<int, int>> origins;

  static PatchGrid make(int height, int width, int size = kPatchSize);
  std::size_t count() const { return origins.size(); }
};

struct PatchSet {
  std::vector<Tensor<float>> patches;
  PatchGrid grid;
};

/// Tiles a (1,C,H,W) tensor into (1,C,size,size) patches.
PatchSet extract_patches(const Tensor<float>& t, int size = kPatchSize);
/// Inverse of extract_patches, cropped back to the original extent.
Tensor<float> stitch_patches(std::span<const Tensor<float>> patches, const PatchGrid& grid);

}  // namespace resseg
