#pragma once

#include <functional>
#include <span>

#include "resseg/dihedral.hpp"
#include "resseg/patches.hpp"

namespace resseg {

/// Maps a (1,C,size,size) patch to a (1,1,size,size) probability map.
using Predictor = std::function<Tensor<float>(const Tensor<float>&)>;

/// Foreground where at least half the votes are foreground (ties go to
/// foreground).
Tensor<float> majority_vote(std::span<const Tensor<float>> votes);

/// Tile, predict every patch, stitch: (1,C,H,W) -> (1,1,H,W) probabilities.
Tensor<float> predict_probabilities(const Predictor& predict, const Tensor<float>& image,
                                    int patch_size = kPatchSize);

/// One binarized vote per transform (predicted in the transformed frame and
/// mapped back), fused by majority vote.
Tensor<float> tta_predict(const Predictor& predict, const Tensor<float>& image,
                          std::span<const DihedralTransform> transforms, double threshold = 0.5,
                          int patch_size = kPatchSize);

}  // namespace resseg
