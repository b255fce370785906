#include "resseg/image_io.hpp"

#include <png.h>

#include <cmath>

namespace resseg {

namespace {

void require_file(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) throw IoError("missing file: " + path.string());
}

}  // namespace

Raster read_png(const std::filesystem::path& path, int channels) {
  if (channels != 1 && channels != 3) throw ShapeError("read_png: channels must be 1 or 3");
  require_file(path);
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw IoError("cannot decode " + path.string() + ": " + img.message);
  }
  img.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  Raster r;
  r.width = static_cast<int>(img.width);
  r.height = static_cast<int>(img.height);
  r.channels = channels;
  r.pixels.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, r.pixels.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw IoError("cannot decode " + path.string() + ": " + msg);
  }
  return r;
}

void write_png(const std::filesystem::path& path, const Raster& raster) {
  if (raster.channels != 1 && raster.channels != 3) throw ShapeError("write_png: channels must be 1 or 3");
  if (raster.pixels.size() != static_cast<std::size_t>(raster.width) * raster.height * raster.channels) {
    throw ShapeError("write_png: pixel buffer does not match extents");
  }
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(raster.width);
  img.height = static_cast<png_uint_32>(raster.height);
  img.format = raster.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, raster.pixels.data(), 0, nullptr)) {
    throw IoError("cannot write " + path.string() + ": " + img.message);
  }
}

Tensor<float> raster_to_image(const Raster& r) {
  Tensor<float> t(Shape{1, r.channels, r.height, r.width});
  for (int y = 0; y < r.height; ++y)
    for (int x = 0; x < r.width; ++x)
      for (int c = 0; c < r.channels; ++c)
        t(0, c, y, x) = r.pixels[(static_cast<std::size_t>(y) * r.width + x) * r.channels + c] / 255.0f;
  return t;
}

Tensor<float> raster_to_mask(const Raster& r, const std::string& origin) {
  if (r.channels != 1) throw ShapeError(origin + ": mask must be single-channel");
  Tensor<float> t(Shape{1, 1, r.height, r.width});
  for (std::size_t i = 0; i < r.pixels.size(); ++i) {
    const std::uint8_t v = r.pixels[i];
    if (v != 0 && v != 255) {
      throw DataError(origin + ": non-binary mask value " + std::to_string(v) + " at (y=" +
                      std::to_string(i / r.width) + ", x=" + std::to_string(i % r.width) + ")");
    }
    t[i] = v == 255 ? 1.0f : 0.0f;
  }
  return t;
}

Raster image_to_raster(const Tensor<float>& image) {
  const Shape s = image.shape();
  if (s.n != 1 || (s.c != 1 && s.c != 3)) throw ShapeError("image_to_raster: expected (1,1|3,H,W), got " + s.str());
  Raster r{s.w, s.h, s.c, std::vector<std::uint8_t>(s.count())};
  for (int y = 0; y < s.h; ++y)
    for (int x = 0; x < s.w; ++x)
      for (int c = 0; c < s.c; ++c) {
        const float v = std::clamp(image(0, c, y, x), 0.0f, 1.0f);
        r.pixels[(static_cast<std::size_t>(y) * s.w + x) * s.c + c] =
            static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
  return r;
}

Raster mask_to_raster(const Tensor<float>& mask) {
  const Shape s = mask.shape();
  if (s.n != 1 || s.c != 1) throw ShapeError("mask_to_raster: expected (1,1,H,W), got " + s.str());
  Raster r{s.w, s.h, 1, std::vector<std::uint8_t>(s.count())};
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const float v = mask[i];
    if (v != 0.0f && v != 1.0f) throw DataError("mask_to_raster: non-binary value " + std::to_string(v));
    r.pixels[i] = v == 1.0f ? 255 : 0;
  }
  return r;
}

Tensor<float> load_image(const std::filesystem::path& path) { return raster_to_image(read_png(path, 3)); }

Tensor<float> load_mask(const std::filesystem::path& path) {
  return raster_to_mask(read_png(path, 1), path.string());
}

void save_mask(const std::filesystem::path& path, const Tensor<float>& mask) {
  write_png(path, mask_to_raster(mask));
}

void save_image(const std::filesystem::path& path, const Tensor<float>& image) {
  write_png(path, image_to_raster(image));
}

Sample load_sample(const std::filesystem::path& image_path, const std::filesystem::path& mask_path) {
  require_file(image_path);
  require_file(mask_path);
  Sample s{load_image(image_path), load_mask(mask_path)};
  const Shape a = s.image.shape();
  const Shape b = s.mask.shape();
  if (a.h != b.h || a.w != b.w) {
    throw ShapeError("image " + image_path.string() + " is " + std::to_string(a.w) + "x" +
                     std::to_string(a.h) + " but mask " + mask_path.string() + " is " +
                     std::to_string(b.w) + "x" + std::to_string(b.h));
  }
  return s;
}

}  // namespace resseg
