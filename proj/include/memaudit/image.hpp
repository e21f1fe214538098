#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace memaudit {

// Grayscale raster with luminance values in [0, 1], row-major.
class PixelImage {
 public:
  // Throws InvalidArgument if a dimension is zero, the pixel count does not
  // match, or any value is outside [0, 1] (NaN included).
  PixelImage(std::size_t width, std::size_t height, std::vector<double> pixels);

  static PixelImage filled(std::size_t width, std::size_t height, double value);

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  std::size_t size() const { return pixels_.size(); }
  std::span<const double> pixels() const { return pixels_; }
  double at(std::size_t x, std::size_t y) const { return pixels_[y * width_ + x]; }

  bool same_shape(std::size_t w, std::size_t h) const { return w == width_ && h == height_; }

  friend bool operator==(const PixelImage&, const PixelImage&) = default;

 private:
  std::size_t width_;
  std::size_t height_;
  std::vector<double> pixels_;
};

// Per-pixel foreground/background partition; true marks foreground.
class BinaryMask {
 public:
  BinaryMask(std::size_t width, std::size_t height, std::vector<std::uint8_t> bits);

  static BinaryMask filled(std::size_t width, std::size_t height, bool foreground);

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  std::size_t size() const { return bits_.size(); }
  bool at(std::size_t x, std::size_t y) const { return bits_[y * width_ + x] != 0; }
  bool operator[](std::size_t i) const { return bits_[i] != 0; }

  std::size_t foreground_count() const { return foreground_count_; }
  std::size_t background_count() const { return bits_.size() - foreground_count_; }

  friend bool operator==(const BinaryMask& a, const BinaryMask& b) {
    return a.width_ == b.width_ && a.height_ == b.height_ && a.bits_ == b.bits_;
  }

 private:
  std::size_t width_;
  std::size_t height_;
  std::vector<std::uint8_t> bits_;  // 0 or 1
  std::size_t foreground_count_;
};

// An image together with its segmentation. Dimensions always agree.
class MaskedImage {
 public:
  MaskedImage(PixelImage image, BinaryMask mask);

  const PixelImage& image() const { return image_; }
  const BinaryMask& mask() const { return mask_; }

 private:
  PixelImage image_;
  BinaryMask mask_;
};

enum class Region { kForeground, kBackground };

// Zeroes every pixel outside `region`; pixels inside are copied unchanged.
PixelImage apply_mask(const PixelImage& img, const BinaryMask& mask, Region region);

// |S_f| / (width * height).
double foreground_proportion(const BinaryMask& mask);

BinaryMask complement(const BinaryMask& mask);

// Bilinear resampling with pixel-center alignment and edge clamping. Same
// dimensions returns an exact copy.
PixelImage resize(const PixelImage& img, std::size_t width, std::size_t height);

// Nearest-neighbour resampling; masks never get fractional membership.
BinaryMask resize(const BinaryMask& mask, std::size_t width, std::size_t height);

}  // namespace memaudit
