#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "docspot/geometry.hpp"

namespace docspot {

/// Row-major 8-bit grayscale image (0 = black, 255 = white).
class GrayImage {
 public:
  GrayImage() = default;
  GrayImage(int width, int height, std::uint8_t fill = 255);
  GrayImage(int width, int height, std::vector<std::uint8_t> pixels);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  bool empty() const noexcept { return pixels_.empty(); }
  std::size_t size() const noexcept { return pixels_.size(); }

  std::uint8_t at(int x, int y) const noexcept {
    return pixels_[static_cast<std::size_t>(y) * width_ + x];
  }
  std::uint8_t& at(int x, int y) noexcept {
    return pixels_[static_cast<std::size_t>(y) * width_ + x];
  }

  std::span<const std::uint8_t> pixels() const noexcept { return pixels_; }
  std::span<std::uint8_t> pixels() noexcept { return pixels_; }

  BBox bounds() const { return BBox(0, 0, width_, height_); }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

/// Binary mask with the same layout as a GrayImage; nonzero = foreground.
struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  bool at(int x, int y) const noexcept {
    return bits[static_cast<std::size_t>(y) * width + x] != 0;
  }
  std::size_t count() const noexcept;
};

/// Reads a binary PGM ("P5") with maxval 255. Anything else is a FormatError.
GrayImage read_pgm(const std::filesystem::path& path);
void write_pgm(const GrayImage& img, const std::filesystem::path& path);

/// Copies the region `box`, which must lie inside the image.
GrayImage crop(const GrayImage& img, const BBox& box);

/// Bilinear resampling with pixel-center alignment.
GrayImage resize_bilinear(const GrayImage& img, int width, int height);

}  // namespace docspot
