#include "resseg/synth.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "resseg/augment.hpp"

namespace resseg {

bool Ellipse::contains(double px, double py) const {
  const double dx = px - cx, dy = py - cy;
  const double c = std::cos(theta), s = std::sin(theta);
  const double u = c * dx + s * dy;
  const double v = -s * dx + c * dy;
  return (u / a) * (u / a) + (v / b) * (v / b) <= 1.0;
}

SynthSample synth_sample(std::uint64_t seed, int height, int width) {
  Mt64Uniform rng(seed);
  auto between = [&](double lo, double hi) { return lo + (hi - lo) * rng.uniform(); };
  const double side = std::min(height, width);

  SynthSample out;
  const int count = 1 + std::min(2, static_cast<int>(rng.uniform() * 3));
  for (int i = 0; i < count; ++i) {
    Ellipse e;
    e.cx = between(0.2, 0.8) * width;
    e.cy = between(0.2, 0.8) * height;
    e.a = between(0.08, 0.2) * side;
    e.b = between(0.08, 0.2) * side;
    e.theta = between(0.0, std::numbers::pi);
    out.ellipses.push_back(e);
  }

  // Skin tone with two low-frequency ripples; wound tone per image.
  const double skin[3] = {between(0.75, 0.92), between(0.55, 0.70), between(0.45, 0.60)};
  const double wound[3] = {between(0.50, 0.70), between(0.08, 0.22), between(0.08, 0.22)};
  const double f1 = between(0.02, 0.06), f2 = between(0.02, 0.06);
  const double ph1 = between(0.0, 2 * std::numbers::pi), ph2 = between(0.0, 2 * std::numbers::pi);

  Tensor<float> image(Shape{1, 3, height, width});
  Tensor<float> mask(Shape{1, 1, height, width});
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      bool inside = false;
      for (const auto& e : out.ellipses) inside = inside || e.contains(x + 0.5, y + 0.5);
      const double ripple = 0.04 * std::sin(f1 * x + ph1) * std::cos(f2 * y + ph2);
      for (int c = 0; c < 3; ++c) {
        const double base = inside ? wound[c] : skin[c];
        const double v = base + ripple + 0.03 * (rng.uniform() - 0.5);
        image(0, c, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
      mask(0, 0, y, x) = inside ? 1.0f : 0.0f;
    }
  // Quantise to what a PNG round trip yields.
  out.sample.image = raster_to_image(image_to_raster(image));
  out.sample.mask = std::move(mask);
  return out;
}

void write_synth_corpus(const std::filesystem::path& root, const SynthLayout& layout, std::uint64_t seed) {
  if (layout.train < 1) throw ConfigError("synth: need at least one training image");
  if (layout.validation < 0) throw ConfigError("synth: negative validation count");
  std::uint64_t index = 0;
  auto emit = [&](const char* split, int n) {
    const auto images = root / split / "images";
    const auto labels = root / split / "labels";
    std::filesystem::create_directories(images);
    std::filesystem::create_directories(labels);
    for (int i = 0; i < n; ++i) {
      // Per-image seeds from a splitmix step keep images independent.
      std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * ++index;
      z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
      z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
      z ^= z >> 31;
      const SynthSample s = synth_sample(z, layout.height, layout.width);
      char name[32];
      std::snprintf(name, sizeof name, "synth_%04d.png", i);
      save_image(images / name, s.sample.image);
      save_mask(labels / name, s.sample.mask);
    }
  };
  emit("train", layout.train);
  emit("validation", layout.validation);
}

}  // namespace resseg
