#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "memaudit/error.hpp"
#include "memaudit/image.hpp"

namespace memaudit {

struct SsimParams {
  int window_size = 11;  // odd, >= 3
  double window_sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;

  double c1() const { return (k1 * dynamic_range) * (k1 * dynamic_range); }
  double c2() const { return (k2 * dynamic_range) * (k2 * dynamic_range); }
  double c3() const { return c2() / 2.0; }

  void validate() const;
};

// Exponents for one scale. Only the coarsest scale's luminance exponent is
// used. Contrast and structure are evaluated as one product per window, so
// the two exponents must agree.
struct ScaleWeight {
  double luminance = 0.0;
  double contrast = 0.0;
  double structure = 0.0;

  friend bool operator==(const ScaleWeight&, const ScaleWeight&) = default;
};

enum class WeightMode { kEqual, kCustom };

struct MsSsimParams {
  // Five equal-weight scales.
  MsSsimParams();

  SsimParams base;
  int num_scales = 5;
  WeightMode weight_mode = WeightMode::kEqual;
  std::vector<ScaleWeight> weights;  // size num_scales; generated for kEqual

  // Equal, normalized exponents at every scale (the default).
  static MsSsimParams equal(int num_scales = 5, SsimParams base = {});
  // The five-scale weights of Wang, Simoncelli and Bovik (2003).
  static MsSsimParams classic(SsimParams base = {});
  static MsSsimParams custom(std::vector<ScaleWeight> weights, SsimParams base = {});

  void validate() const;

  // Weights renormalized for the first `scales` levels (scales <= num_scales).
  std::vector<ScaleWeight> effective_weights(int scales) const;
};

struct SimilarityScore {
  double value = 0.0;
  friend bool operator==(const SimilarityScore&, const SimilarityScore&) = default;
};

struct SsimComponents {
  double luminance;
  double contrast;
  double structure;
};

// Luminance, contrast and structure of two equally sized pixel groups.
// `weights` (optional, same size) selects weighted estimators; otherwise the
// plain mean and population (co)variance are used.
SsimComponents ssim_components(std::span<const double> m, std::span<const double> n,
                               const SsimParams& p, std::span<const double> weights = {});

// L1-normalized 1-D Gaussian of `size` taps centred on size / 2.
std::vector<double> gaussian_window(int size, double sigma);

// 2x2 average pool; output dims are floor(d / 2).
PixelImage downsample(const PixelImage& img);

// Number of scales usable on a width x height image: min(num_scales, deepest
// level whose pooled dims are still >= window_size). 0 if even the full
// resolution is smaller than the window.
int feasible_scales(std::size_t width, std::size_t height, const MsSsimParams& p);

// Mean SSIM over all stride-1 Gaussian windows fully inside the image.
SimilarityScore ssim(const PixelImage& a, const PixelImage& b, const SsimParams& p = {});

SimilarityScore ms_ssim(const PixelImage& a, const PixelImage& b, const MsSsimParams& p = {});

// Per-image precomputation for MS-SSIM: at every scale, the pooled pixels and
// their windowed mean and second moment. Pairing two pyramids only needs the
// windowed cross moment, so a pyramid pays off when an image is compared many
// times.
class SsimPyramid {
 public:
  SsimPyramid(const PixelImage& img, const MsSsimParams& p);

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  int scales() const { return static_cast<int>(levels_.size()); }
  std::size_t memory_bytes() const;

  struct Level {
    std::size_t width;
    std::size_t height;
    std::size_t out_width;
    std::size_t out_height;
    std::vector<double> pixels;
    std::vector<double> mean;
    std::vector<double> second_moment;
  };
  const Level& level(int j) const { return levels_[static_cast<std::size_t>(j)]; }

 private:
  std::size_t width_;
  std::size_t height_;
  std::vector<Level> levels_;
};

// Bytes a pyramid of a width x height image would occupy.
std::size_t estimate_pyramid_bytes(std::size_t width, std::size_t height, const MsSsimParams& p);

// MS-SSIM of two prepared images. Both must come from the same parameters
// and have equal dimensions. Bit-identical to ms_ssim on the source images.
SimilarityScore ms_ssim(const SsimPyramid& a, const SsimPyramid& b, const MsSsimParams& p);

struct ScoreMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;  // row-major

  double at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
  friend bool operator==(const ScoreMatrix&, const ScoreMatrix&) = default;
};

// Thrown by batch_similarity; carries the failing pair.
class PairError : public InvalidArgument {
 public:
  PairError(std::size_t query, std::size_t corpus, const std::string& what);
  std::size_t query() const { return query_; }
  std::size_t corpus() const { return corpus_; }

 private:
  std::size_t query_;
  std::size_t corpus_;
};

// matrix(i, j) = ms_ssim(queries[i], corpus[j]). Identical output for every
// worker count. jobs <= 0 means one worker per logical CPU.
ScoreMatrix batch_similarity(std::span<const PixelImage> queries,
                             std::span<const PixelImage> corpus, const MsSsimParams& p, int jobs);

}  // namespace memaudit
