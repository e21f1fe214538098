#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "memaudit/codec.hpp"
#include "memaudit/image.hpp"

namespace testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("memaudit-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline memaudit::PixelImage random_image(std::mt19937_64& rng, std::size_t w, std::size_t h) {
  std::vector<double> px(w * h);
  for (double& v : px) v = uniform01(rng);
  return memaudit::PixelImage(w, h, std::move(px));
}

// Random values quantized to 8 bits, so PNG round trips are lossless.
inline memaudit::PixelImage random_image_8bit(std::mt19937_64& rng, std::size_t w, std::size_t h) {
  std::vector<double> px(w * h);
  for (double& v : px) v = static_cast<double>(rng() % 256) / 255.0;
  return memaudit::PixelImage(w, h, std::move(px));
}

// Smooth random field: a few random sinusoids, useful where noise would give
// near-zero structure everywhere.
inline memaudit::PixelImage smooth_image(std::mt19937_64& rng, std::size_t w, std::size_t h) {
  double fx[3], fy[3], ph[3];
  for (int i = 0; i < 3; ++i) {
    fx[i] = 0.02 + 0.15 * uniform01(rng);
    fy[i] = 0.02 + 0.15 * uniform01(rng);
    ph[i] = 6.283185307179586 * uniform01(rng);
  }
  std::vector<double> px(w * h);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double v = 0.0;
      for (int i = 0; i < 3; ++i) {
        v += std::sin(fx[i] * static_cast<double>(x) + fy[i] * static_cast<double>(y) + ph[i]);
      }
      px[y * w + x] = std::round((0.5 + v / 6.0) * 255.0) / 255.0;
    }
  }
  return memaudit::PixelImage(w, h, std::move(px));
}

// Foreground is the axis-aligned box [x0, x1) x [y0, y1).
inline memaudit::BinaryMask box_mask(std::size_t w, std::size_t h, std::size_t x0, std::size_t y0,
                                     std::size_t x1, std::size_t y1) {
  std::vector<std::uint8_t> bits(w * h, 0);
  for (std::size_t y = y0; y < y1; ++y) {
    for (std::size_t x = x0; x < x1; ++x) bits[y * w + x] = 1;
  }
  return memaudit::BinaryMask(w, h, std::move(bits));
}

// Foreground is the first `count` pixels in row-major order.
inline memaudit::BinaryMask prefix_mask(std::size_t w, std::size_t h, std::size_t count) {
  std::vector<std::uint8_t> bits(w * h, 0);
  for (std::size_t i = 0; i < count; ++i) bits[i] = 1;
  return memaudit::BinaryMask(w, h, std::move(bits));
}

// Pixels inside `mask` from `fg`, the rest from `bg`.
inline memaudit::PixelImage composite(const memaudit::PixelImage& fg,
                                      const memaudit::PixelImage& bg,
                                      const memaudit::BinaryMask& mask) {
  std::vector<double> px(fg.size());
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = mask[i] ? fg.pixels()[i] : bg.pixels()[i];
  return memaudit::PixelImage(fg.width(), fg.height(), std::move(px));
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

}  // namespace testing
