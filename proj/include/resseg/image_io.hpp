#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "resseg/tensor.hpp"

namespace resseg {

/// 8-bit interleaved raster, row-major.
struct Raster {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;
};

/// Decodes any PNG into `channels` (1 = gray, 3 = RGB) 8-bit samples.
Raster read_png(const std::filesystem::path& path, int channels);
void write_png(const std::filesystem::path& path, const Raster& raster);

/// An RGB image and its binary mask, as (1,3,H,W) in [0,1] and (1,1,H,W)
/// in {0,1}.
struct Sample {
  Tensor<float> image;
  Tensor<float> mask;
};

Tensor<float> raster_to_image(const Raster& r);
/// 255 -> 1, 0 -> 0; any other value is a DataError naming the value and
/// its position.
Tensor<float> raster_to_mask(const Raster& r, const std::string& origin = "mask");
/// Rounds [0,1] values to 8 bits.
Raster image_to_raster(const Tensor<float>& image);
/// Binary (1,1,H,W) -> 0/255 gray.
Raster mask_to_raster(const Tensor<float>& mask);

Tensor<float> load_image(const std::filesystem::path& path);
Tensor<float> load_mask(const std::filesystem::path& path);
void save_mask(const std::filesystem::path& path, const Tensor<float>& mask);
void save_image(const std::filesystem::path& path, const Tensor<float>& image);

/// Missing files are IoErrors, non-binary masks DataErrors, and differing
/// image/mask extents ShapeErrors.
Sample load_sample(const std::filesystem::path& image_path, const std::filesystem::path& mask_path);

}  // namespace resseg
