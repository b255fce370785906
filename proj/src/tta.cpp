#include "resseg/tta.hpp"

#include "resseg/losses.hpp"

namespace resseg {

Tensor<float> majority_vote(std::span<const Tensor<float>> votes) {
  if (votes.empty()) throw ShapeError("majority_vote: no votes");
  const Shape s = votes.front().shape();
  std::vector<int> tally(s.count(), 0);
  for (std::size_t k = 0; k < votes.size(); ++k) {
    const Tensor<float>& v = votes[k];
    if (v.shape() != s) {
      throw ShapeError("majority_vote: vote " + std::to_string(k) + " has shape " + v.shape().str() +
                       ", expected " + s.str());
    }
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (v[i] == 1.0f) ++tally[i];
      else if (v[i] != 0.0f) throw DataError("majority_vote: vote " + std::to_string(k) + " is not binary");
    }
  }
  const int k = static_cast<int>(votes.size());
  Tensor<float> out(s);
  for (std::size_t i = 0; i < tally.size(); ++i) out[i] = 2 * tally[i] >= k ? 1.0f : 0.0f;
  return out;
}

Tensor<float> predict_probabilities(const Predictor& predict, const Tensor<float>& image, int patch_size) {
  PatchSet set = extract_patches(image, patch_size);
  std::vector<Tensor<float>> out;
  out.reserve(set.patches.size());
  for (const auto& p : set.patches) {
    Tensor<float> y = predict(p);
    if (y.shape() != Shape{1, 1, patch_size, patch_size}) {
      throw ShapeError("predictor returned " + y.shape().str() + " for patch " + p.shape().str());
    }
    out.push_back(std::move(y));
  }
  return stitch_patches(out, set.grid);
}

Tensor<float> tta_predict(const Predictor& predict, const Tensor<float>& image,
                          std::span<const DihedralTransform> transforms, double threshold, int patch_size) {
  if (transforms.empty()) throw ConfigError("tta_predict: empty transform list");
  std::vector<Tensor<float>> votes;
  votes.reserve(transforms.size());
  for (const auto& d : transforms) {
    const Tensor<float> prob = predict_probabilities(predict, apply_dihedral(image, d), patch_size);
    votes.push_back(binarize(apply_dihedral(prob, d.inverse()), threshold));
  }
  return majority_vote(votes);
}

}  // namespace resseg
