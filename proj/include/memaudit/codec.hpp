#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>

#include "memaudit/image.hpp"

namespace memaudit {

enum class ChannelPolicy {
  kLuma601,     // color inputs become 0.299 R + 0.587 G + 0.114 B
  kRequireGray  // color inputs are rejected
};

// Decodes PNG (8/16-bit, any color type) or baseline JPEG. Alpha is ignored.
// Throws InputError on unreadable files, unknown formats and empty rasters.
PixelImage load_image(const std::filesystem::path& path,
                      ChannelPolicy channels = ChannelPolicy::kLuma601);

struct ImageInfo {
  std::size_t width = 0;
  std::size_t height = 0;
  int channels = 0;
};

// Reads only the header. Throws InputError like load_image.
ImageInfo probe_image(const std::filesystem::path& path);

// Single-channel raster; nonzero samples are foreground.
BinaryMask load_mask(const std::filesystem::path& path);

// 8-bit writers, used for fixtures and synthetic corpora. `channels` is 1 or 3.
void write_png(const std::filesystem::path& path, std::size_t width, std::size_t height,
               int channels, std::span<const std::uint8_t> samples);
void write_jpeg(const std::filesystem::path& path, std::size_t width, std::size_t height,
                int channels, std::span<const std::uint8_t> samples, int quality = 95);

void save_png(const std::filesystem::path& path, const PixelImage& img);
void save_png(const std::filesystem::path& path, const BinaryMask& mask);

}  // namespace memaudit
