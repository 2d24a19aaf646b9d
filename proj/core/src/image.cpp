#include "c3vg/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "c3vg/errors.hpp"

namespace c3vg {

namespace {

std::vector<std::uint8_t> read_png_pixels(const std::filesystem::path& path, std::uint32_t format, int& height,
                                          int& width) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw Error("cannot read PNG " + path.string() + ": " + img.message);
  }
  img.format = format;
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, pixels.data(), 0, nullptr)) {
    png_image_free(&img);
    throw Error("cannot decode PNG " + path.string() + ": " + img.message);
  }
  height = static_cast<int>(img.height);
  width = static_cast<int>(img.width);
  return pixels;
}

void write_png_pixels(const std::filesystem::path& path, int height, int width, std::uint32_t format,
                      const std::uint8_t* pixels) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(width);
  img.height = static_cast<png_uint_32>(height);
  img.format = format;
  if (!png_image_write_to_file(&img, path.c_str(), 0, pixels, 0, nullptr)) {
    throw Error("cannot write PNG " + path.string() + ": " + img.message, /*bad_input=*/false);
  }
}

}  // namespace

Image read_png(const std::filesystem::path& path) {
  Image image;
  image.rgb = read_png_pixels(path, PNG_FORMAT_RGB, image.height, image.width);
  return image;
}

void write_png(const std::filesystem::path& path, const Image& image) {
  write_png_pixels(path, image.height, image.width, PNG_FORMAT_RGB, image.rgb.data());
}

void write_gray_png(const std::filesystem::path& path, int height, int width, std::span<const std::uint8_t> pixels) {
  if (pixels.size() != static_cast<std::size_t>(height) * width) throw ShapeMismatch("gray image size mismatch");
  write_png_pixels(path, height, width, PNG_FORMAT_GRAY, pixels.data());
}

BinaryMask read_mask_png(const std::filesystem::path& path) {
  int h = 0, w = 0;
  auto pixels = read_png_pixels(path, PNG_FORMAT_GRAY, h, w);
  return BinaryMask(h, w, std::move(pixels));
}

void write_mask_png(const std::filesystem::path& path, const BinaryMask& mask) {
  std::vector<std::uint8_t> pixels(mask.cells().begin(), mask.cells().end());
  for (auto& p : pixels) p = p ? 255 : 0;
  write_gray_png(path, mask.height(), mask.width(), pixels);
}

Image resize_bilinear(const Image& image, int height, int width) {
  if (image.height == height && image.width == width) return image;
  Image out(height, width);
  const double sy = static_cast<double>(image.height) / height;
  const double sx = static_cast<double>(image.width) / width;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, image.height - 1);
    const double ty = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, image.width - 1);
      const double tx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = image.at(y0, x0, c) * (1 - tx) + image.at(y0, x1, c) * tx;
        const double bottom = image.at(y1, x0, c) * (1 - tx) + image.at(y1, x1, c) * tx;
        out.at(y, x, c) = static_cast<std::uint8_t>(std::lround(top * (1 - ty) + bottom * ty));
      }
    }
  }
  return out;
}

BinaryMask resize_nearest(const BinaryMask& mask, int height, int width) {
  if (mask.height() == height && mask.width() == width) return mask;
  BinaryMask out(height, width);
  for (int y = 0; y < height; ++y) {
    const int sy = std::min(mask.height() - 1, static_cast<int>((y + 0.5) * mask.height() / height));
    for (int x = 0; x < width; ++x) {
      const int sx = std::min(mask.width() - 1, static_cast<int>((x + 0.5) * mask.width() / width));
      out.set(y, x, mask.at(sy, sx));
    }
  }
  return out;
}

}  // namespace c3vg
