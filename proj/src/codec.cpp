#include "memaudit/codec.hpp"

#include <png.h>
// jpeglib.h needs FILE and size_t declared first.
#include <cstdio>
#include <jpeglib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <csetjmp>
#include <memory>
#include <string>
#include <vector>

#include "memaudit/error.hpp"

namespace memaudit {

namespace {

// Decoded samples, interleaved, one or three channels after alpha stripping.
struct Raster {
  std::size_t width = 0;
  std::size_t height = 0;
  int channels = 0;
  int bit_depth = 8;
  std::vector<std::uint8_t> data;
  std::string error;

  std::size_t row_bytes() const { return width * channels * (bit_depth / 8); }

  double sample(std::size_t i, int c) const {
    const std::size_t k = i * channels + c;
    if (bit_depth == 16) {
      return static_cast<double>((data[2 * k] << 8) | data[2 * k + 1]) / 65535.0;
    }
    return static_cast<double>(data[k]) / 255.0;
  }
};

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw InputError("cannot open " + path.string());
  return f;
}

void on_png_error(png_structp png, png_const_charp msg) {
  auto* out = static_cast<Raster*>(png_get_error_ptr(png));
  out->error = msg;
  std::longjmp(png_jmpbuf(png), 1);
}

void on_png_warning(png_structp, png_const_charp) {}

// Only touches `out` (owned by the caller) between setjmp and longjmp.
bool decode_png(std::FILE* file, Raster* out, bool header_only) {
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, out, on_png_error, on_png_warning);
  if (png == nullptr) return false;
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_init_io(png, file);
  png_read_info(png, info);

  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS)) {
    png_set_strip_alpha(png);
  }
  png_read_update_info(png, info);

  out->width = png_get_image_width(png, info);
  out->height = png_get_image_height(png, info);
  out->bit_depth = png_get_bit_depth(png, info);
  out->channels = png_get_channels(png, info);
  if (header_only) {
    png_destroy_read_struct(&png, &info, nullptr);
    return true;
  }
  out->data.resize(out->row_bytes() * out->height);
  std::vector<png_bytep> rows(out->height);
  for (std::size_t y = 0; y < out->height; ++y) rows[y] = out->data.data() + y * out->row_bytes();
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void on_jpeg_error(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegError*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

bool decode_jpeg(std::FILE* file, Raster* out, JpegError* err, bool header_only) {
  jpeg_decompress_struct cinfo;
  cinfo.err = jpeg_std_error(&err->mgr);
  err->mgr.error_exit = on_jpeg_error;
  if (setjmp(err->jump)) {
    jpeg_destroy_decompress(&cinfo);
    return false;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, file);
  jpeg_read_header(&cinfo, TRUE);
  if (header_only) {
    out->width = cinfo.image_width;
    out->height = cinfo.image_height;
    out->channels = cinfo.num_components == 1 ? 1 : 3;
    jpeg_destroy_decompress(&cinfo);
    return true;
  }
  cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_start_decompress(&cinfo);
  out->width = cinfo.output_width;
  out->height = cinfo.output_height;
  out->channels = cinfo.output_components;
  out->bit_depth = 8;
  out->data.resize(out->row_bytes() * out->height);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out->data.data() + cinfo.output_scanline * out->row_bytes();
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return true;
}

Raster read_raster(const std::filesystem::path& path, bool header_only = false) {
  FilePtr file = open_file(path, "rb");
  std::array<unsigned char, 8> magic{};
  const std::size_t got = std::fread(magic.data(), 1, magic.size(), file.get());
  std::rewind(file.get());

  Raster raster;
  if (got == 8 && png_sig_cmp(magic.data(), 0, 8) == 0) {
    if (!decode_png(file.get(), &raster, header_only)) {
      throw InputError("cannot decode PNG " + path.string() + ": " + raster.error);
    }
  } else if (got >= 3 && magic[0] == 0xFF && magic[1] == 0xD8 && magic[2] == 0xFF) {
    JpegError err{};
    if (!decode_jpeg(file.get(), &raster, &err, header_only)) {
      throw InputError("cannot decode JPEG " + path.string() + ": " + err.message);
    }
  } else {
    throw InputError("unsupported image format: " + path.string());
  }
  if (raster.width == 0 || raster.height == 0) {
    throw InputError("zero-dimension image: " + path.string());
  }
  return raster;
}

}  // namespace

ImageInfo probe_image(const std::filesystem::path& path) {
  const Raster r = read_raster(path, true);
  return {r.width, r.height, r.channels};
}

PixelImage load_image(const std::filesystem::path& path, ChannelPolicy channels) {
  const Raster r = read_raster(path);
  if (r.channels != 1 && channels == ChannelPolicy::kRequireGray) {
    throw InputError("expected a grayscale image: " + path.string());
  }
  const std::size_t n = r.width * r.height;
  std::vector<double> px(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (r.channels == 1) {
      px[i] = r.sample(i, 0);
    } else {
      const double luma = 0.299 * r.sample(i, 0) + 0.587 * r.sample(i, 1) + 0.114 * r.sample(i, 2);
      px[i] = std::clamp(luma, 0.0, 1.0);
    }
  }
  return PixelImage(r.width, r.height, std::move(px));
}

BinaryMask load_mask(const std::filesystem::path& path) {
  const Raster r = read_raster(path);
  if (r.channels != 1) throw InputError("mask must be single-channel: " + path.string());
  const std::size_t n = r.width * r.height;
  std::vector<std::uint8_t> bits(n);
  for (std::size_t i = 0; i < n; ++i) bits[i] = r.sample(i, 0) != 0.0 ? 1 : 0;
  return BinaryMask(r.width, r.height, std::move(bits));
}

void write_png(const std::filesystem::path& path, std::size_t width, std::size_t height,
               int channels, std::span<const std::uint8_t> samples) {
  if (channels != 1 && channels != 3) throw InvalidArgument("write_png: channels must be 1 or 3");
  if (samples.size() != width * height * channels) {
    throw InvalidArgument("write_png: sample count does not match dimensions");
  }
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, samples.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw InputError("cannot write " + path.string() + ": " + msg);
  }
}

void write_jpeg(const std::filesystem::path& path, std::size_t width, std::size_t height,
                int channels, std::span<const std::uint8_t> samples, int quality) {
  if (channels != 1 && channels != 3) throw InvalidArgument("write_jpeg: channels must be 1 or 3");
  if (samples.size() != width * height * channels) {
    throw InvalidArgument("write_jpeg: sample count does not match dimensions");
  }
  FilePtr file = open_file(path, "wb");
  jpeg_compress_struct cinfo;
  jpeg_error_mgr jerr;
  cinfo.err = jpeg_std_error(&jerr);
  jpeg_create_compress(&cinfo);
  jpeg_stdio_dest(&cinfo, file.get());
  cinfo.image_width = static_cast<JDIMENSION>(width);
  cinfo.image_height = static_cast<JDIMENSION>(height);
  cinfo.input_components = channels;
  cinfo.in_color_space = channels == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  const std::size_t stride = width * channels;
  while (cinfo.next_scanline < cinfo.image_height) {
    auto* row = const_cast<JSAMPLE*>(samples.data() + cinfo.next_scanline * stride);
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
}

void save_png(const std::filesystem::path& path, const PixelImage& img) {
  std::vector<std::uint8_t> samples(img.size());
  const auto px = img.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) {
    samples[i] = static_cast<std::uint8_t>(std::lround(px[i] * 255.0));
  }
  write_png(path, img.width(), img.height(), 1, samples);
}

void save_png(const std::filesystem::path& path, const BinaryMask& mask) {
  std::vector<std::uint8_t> samples(mask.size());
  for (std::size_t i = 0; i < samples.size(); ++i) samples[i] = mask[i] ? 255 : 0;
  write_png(path, mask.width(), mask.height(), 1, samples);
}

}  // namespace memaudit
