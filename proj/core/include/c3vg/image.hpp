#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "c3vg/geometry.hpp"

namespace c3vg {

// 8-bit RGB, interleaved row-major (HWC).
struct Image {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(int h, int w) : height(h), width(w), rgb(static_cast<std::size_t>(h) * w * 3, 0) {}

  std::uint8_t& at(int y, int x, int c) { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  std::uint8_t at(int y, int x, int c) const { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  // Channel value in [0, 1].
  float value(int c, int y, int x) const { return static_cast<float>(at(y, x, c)) / 255.0f; }

  friend bool operator==(const Image&, const Image&) = default;
};

Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& image);
void write_gray_png(const std::filesystem::path& path, int height, int width, std::span<const std::uint8_t> pixels);

// Any non-zero pixel of the (grayscale-converted) PNG is foreground.
BinaryMask read_mask_png(const std::filesystem::path& path);
void write_mask_png(const std::filesystem::path& path, const BinaryMask& mask);

// Bilinear, half-pixel centres.
Image resize_bilinear(const Image& image, int height, int width);
BinaryMask resize_nearest(const BinaryMask& mask, int height, int width);

}  // namespace c3vg
