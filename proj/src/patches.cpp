#include "resseg/patches.hpp"

#include <algorithm>

namespace resseg {

PatchGrid PatchGrid::make(int height, int width, int size) {
  if (height < 1 || width < 1 || size < 1) {
    throw ShapeError("patch grid needs positive extents, got " + std::to_string(height) + "x" +
                     std::to_string(width) + " / " + std::to_string(size));
  }
  PatchGrid g;
  g.height = height;
  g.width = width;
  g.size = size;
  g.padded_height = (height + size - 1) / size * size;
  g.padded_width = (width + size - 1) / size * size;
  for (int y = 0; y < g.padded_height; y += size)
    for (int x = 0; x < g.padded_width; x += size) g.origins.emplace_back(y, x);
  return g;
}

PatchSet extract_patches(const Tensor<float>& t, int size) {
  const Shape s = t.shape();
  if (s.n != 1) throw ShapeError("extract_patches: expected a single image, got " + s.str());
  PatchSet out{{}, PatchGrid::make(s.h, s.w, size)};
  out.patches.reserve(out.grid.count());
  for (const auto& [oy, ox] : out.grid.origins) {
    Tensor<float> p(Shape{1, s.c, size, size});
    const int rows = std::min(size, s.h - oy);
    const int cols = std::min(size, s.w - ox);
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < rows; ++y) {
        const float* src = t.plane_ptr(0, c) + static_cast<std::size_t>(oy + y) * s.w + ox;
        std::copy_n(src, cols, p.plane_ptr(0, c) + static_cast<std::size_t>(y) * size);
      }
    out.patches.push_back(std::move(p));
  }
  return out;
}

Tensor<float> stitch_patches(std::span<const Tensor<float>> patches, const PatchGrid& grid) {
  if (patches.size() != grid.count()) {
    throw ShapeError("stitch_patches: grid has " + std::to_string(grid.count()) + " tiles, got " +
                     std::to_string(patches.size()) + " patches");
  }
  if (patches.empty()) throw ShapeError("stitch_patches: empty grid");
  const int channels = patches.front().shape().c;
  const Shape expected{1, channels, grid.size, grid.size};
  Tensor<float> out(Shape{1, channels, grid.height, grid.width});
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const Tensor<float>& p = patches[i];
    if (p.shape() != expected) {
      throw ShapeError("stitch_patches: patch " + std::to_string(i) + " has shape " + p.shape().str() +
                       ", expected " + expected.str());
    }
    const auto [oy, ox] = grid.origins[i];
    const int rows = std::min(grid.size, grid.height - oy);
    const int cols = std::min(grid.size, grid.width - ox);
    for (int c = 0; c < channels; ++c)
      for (int y = 0; y < rows; ++y) {
        const float* src = p.plane_ptr(0, c) + static_cast<std::size_t>(y) * grid.size;
        std::copy_n(src, cols, out.plane_ptr(0, c) + static_cast<std::size_t>(oy + y) * grid.width + ox);
      }
  }
  return out;
}

}  // namespace resseg
