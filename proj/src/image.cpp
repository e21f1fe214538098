#include "memaudit/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "memaudit/error.hpp"

namespace memaudit {

namespace {

void check_dims(std::size_t width, std::size_t height, std::size_t count, const char* what) {
  if (width == 0 || height == 0) {
    throw InvalidArgument(std::string(what) + ": zero dimension");
  }
  if (count != width * height) {
    throw InvalidArgument(std::string(what) + ": data length " + std::to_string(count) +
                          " does not match " + std::to_string(width) + "x" +
                          std::to_string(height));
  }
}

// Source coordinate and interpolation weight for one output sample.
struct Tap {
  std::size_t lo;
  std::size_t hi;
  double frac;
};

std::vector<Tap> bilinear_taps(std::size_t src, std::size_t dst) {
  std::vector<Tap> taps(dst);
  const double scale = static_cast<double>(src) / static_cast<double>(dst);
  for (std::size_t i = 0; i < dst; ++i) {
    double pos = (static_cast<double>(i) + 0.5) * scale - 0.5;
    pos = std::clamp(pos, 0.0, static_cast<double>(src - 1));
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, src - 1);
    taps[i] = {lo, hi, pos - static_cast<double>(lo)};
  }
  return taps;
}

}  // namespace

PixelImage::PixelImage(std::size_t width, std::size_t height, std::vector<double> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
  check_dims(width_, height_, pixels_.size(), "PixelImage");
  for (double v : pixels_) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw InvalidArgument("PixelImage: pixel value " + std::to_string(v) + " outside [0, 1]");
    }
  }
}

PixelImage PixelImage::filled(std::size_t width, std::size_t height, double value) {
  return PixelImage(width, height, std::vector<double>(width * height, value));
}

BinaryMask::BinaryMask(std::size_t width, std::size_t height, std::vector<std::uint8_t> bits)
    : width_(width), height_(height), bits_(std::move(bits)), foreground_count_(0) {
  check_dims(width_, height_, bits_.size(), "BinaryMask");
  for (auto& b : bits_) {
    b = b != 0 ? 1 : 0;
    foreground_count_ += b;
  }
}

BinaryMask BinaryMask::filled(std::size_t width, std::size_t height, bool foreground) {
  return BinaryMask(width, height, std::vector<std::uint8_t>(width * height, foreground ? 1 : 0));
}

MaskedImage::MaskedImage(PixelImage image, BinaryMask mask)
    : image_(std::move(image)), mask_(std::move(mask)) {
  if (!image_.same_shape(mask_.width(), mask_.height())) {
    throw InvalidArgument("MaskedImage: image and mask dimensions differ");
  }
}

PixelImage apply_mask(const PixelImage& img, const BinaryMask& mask, Region region) {
  if (!img.same_shape(mask.width(), mask.height())) {
    throw InvalidArgument("apply_mask: image is " + std::to_string(img.width()) + "x" +
                          std::to_string(img.height()) + ", mask is " +
                          std::to_string(mask.width()) + "x" + std::to_string(mask.height()));
  }
  const bool keep_fg = region == Region::kForeground;
  const auto src = img.pixels();
  std::vector<double> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    out[i] = mask[i] == keep_fg ? src[i] : 0.0;
  }
  return PixelImage(img.width(), img.height(), std::move(out));
}

double foreground_proportion(const BinaryMask& mask) {
  return static_cast<double>(mask.foreground_count()) / static_cast<double>(mask.size());
}

BinaryMask complement(const BinaryMask& mask) {
  std::vector<std::uint8_t> bits(mask.size());
  for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = mask[i] ? 0 : 1;
  return BinaryMask(mask.width(), mask.height(), std::move(bits));
}

PixelImage resize(const PixelImage& img, std::size_t width, std::size_t height) {
  if (width == 0 || height == 0) throw InvalidArgument("resize: zero target dimension");
  if (img.same_shape(width, height)) return img;

  const auto xs = bilinear_taps(img.width(), width);
  const auto ys = bilinear_taps(img.height(), height);
  std::vector<double> out(width * height);
  for (std::size_t y = 0; y < height; ++y) {
    const Tap& ty = ys[y];
    for (std::size_t x = 0; x < width; ++x) {
      const Tap& tx = xs[x];
      const double top = img.at(tx.lo, ty.lo) * (1.0 - tx.frac) + img.at(tx.hi, ty.lo) * tx.frac;
      const double bottom =
          img.at(tx.lo, ty.hi) * (1.0 - tx.frac) + img.at(tx.hi, ty.hi) * tx.frac;
      // Convex combination; the clamp only absorbs rounding at the ends.
      out[y * width + x] = std::clamp(top * (1.0 - ty.frac) + bottom * ty.frac, 0.0, 1.0);
    }
  }
  return PixelImage(width, height, std::move(out));
}

BinaryMask resize(const BinaryMask& mask, std::size_t width, std::size_t height) {
  if (width == 0 || height == 0) throw InvalidArgument("resize: zero target dimension");
  if (mask.width() == width && mask.height() == height) return mask;

  std::vector<std::uint8_t> bits(width * height);
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t sy = std::min((2 * y + 1) * mask.height() / (2 * height), mask.height() - 1);
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t sx = std::min((2 * x + 1) * mask.width() / (2 * width), mask.width() - 1);
      bits[y * width + x] = mask.at(sx, sy) ? 1 : 0;
    }
  }
  return BinaryMask(width, height, std::move(bits));
}

}  // namespace memaudit
