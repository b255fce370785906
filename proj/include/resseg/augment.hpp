#pragma once

#include <cstdint>
#include <random>

#include "resseg/image_io.hpp"

namespace resseg {

/// Source of uniform draws on [0,1). Every probabilistic gate fires iff its
/// draw is below the gate probability.
class UniformSource {
 public:
  virtual ~UniformSource() = default;
  virtual double uniform() = 0;
};

class Mt64Uniform final : public UniformSource {
 public:
  explicit Mt64Uniform(std::uint64_t seed) : engine_(seed) {}
  /// 53 high bits of one mt19937_64 word; identical on every platform.
  double uniform() override { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 engine_;
};

struct AugmentParams {
  double p_hflip = 0.5;
  double p_vflip = 0.5;
  /// Rotation by k·90°, k uniform in {1,2,3}.
  double p_rot90 = 0.75;
  double p_crop = 1.0;
  double crop_scale_min = 0.5;
  double crop_scale_max = 1.0;
  double crop_ratio_min = 3.0 / 4.0;
  double crop_ratio_max = 4.0 / 3.0;
  double p_affine = 0.3;
  double affine_degrees = 10.0;
  double affine_translate = 0.05;
  double p_hsv = 0.3;
  double hue_shift = 0.02;
  double saturation_scale = 0.1;
  double value_scale = 0.1;
  double p_blur = 0.3;
  double p_noise = 0.3;
  double noise_sigma = 0.02;
};

/// Geometric ops (flips, rot90, resized crop, affine) hit image and mask
/// alike, the mask with nearest-neighbour sampling so it stays binary.
/// Photometric ops (HSV jitter, 3x3 median, Gaussian noise) touch only the
/// image, which is clamped to [0,1] at the end.
Sample augment_train(const Sample& s, UniformSource& rng, const AugmentParams& params = {});

// Building blocks, exposed for testing.
Tensor<float> flip_cols(const Tensor<float>& t);
Tensor<float> resize_bilinear(const Tensor<float>& t, int y0, int x0, int h, int w, int out_h, int out_w);
Tensor<float> resize_nearest(const Tensor<float>& t, int y0, int x0, int h, int w, int out_h, int out_w);
Tensor<float> median3x3(const Tensor<float>& t);
void rgb_to_hsv(float r, float g, float b, float& h, float& s, float& v);
void hsv_to_rgb(float h, float s, float v, float& r, float& g, float& b);

}  // namespace resseg
