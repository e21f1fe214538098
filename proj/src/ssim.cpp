#include "memaudit/ssim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>

#include "memaudit/parallel.hpp"

namespace memaudit {

namespace {

constexpr double kWeightTolerance = 1e-9;

// Valid-region separable blur: out is (w - k + 1) x (h - k + 1).
void blur_valid(const double* src, std::size_t w, std::size_t h, std::span<const double> kernel,
                std::vector<double>& tmp, std::vector<double>& out) {
  const std::size_t k = kernel.size();
  const std::size_t ow = w - k + 1;
  const std::size_t oh = h - k + 1;
  tmp.assign(h * ow, 0.0);
  for (std::size_t y = 0; y < h; ++y) {
    const double* row = src + y * w;
    double* dst = tmp.data() + y * ow;
    for (std::size_t t = 0; t < k; ++t) {
      const double g = kernel[t];
      const double* s = row + t;
      for (std::size_t x = 0; x < ow; ++x) dst[x] += g * s[x];
    }
  }
  out.assign(oh * ow, 0.0);
  for (std::size_t y = 0; y < oh; ++y) {
    double* dst = out.data() + y * ow;
    for (std::size_t t = 0; t < k; ++t) {
      const double g = kernel[t];
      const double* s = tmp.data() + (y + t) * ow;
      for (std::size_t x = 0; x < ow; ++x) dst[x] += g * s[x];
    }
  }
}

struct Scratch {
  std::vector<double> product;
  std::vector<double> tmp;
  std::vector<double> cross;
};

Scratch& scratch() {
  thread_local Scratch s;
  return s;
}

SsimPyramid::Level make_level(std::vector<double> pixels, std::size_t w, std::size_t h,
                              std::span<const double> kernel) {
  SsimPyramid::Level level;
  level.width = w;
  level.height = h;
  level.out_width = w - kernel.size() + 1;
  level.out_height = h - kernel.size() + 1;
  level.pixels = std::move(pixels);
  Scratch& s = scratch();
  blur_valid(level.pixels.data(), w, h, kernel, s.tmp, level.mean);
  s.product.resize(level.pixels.size());
  for (std::size_t i = 0; i < s.product.size(); ++i) {
    s.product[i] = level.pixels[i] * level.pixels[i];
  }
  blur_valid(s.product.data(), w, h, kernel, s.tmp, level.second_moment);
  return level;
}

std::vector<double> pool2x2(const std::vector<double>& src, std::size_t w, std::size_t h) {
  const std::size_t ow = w / 2;
  const std::size_t oh = h / 2;
  std::vector<double> out(ow * oh);
  for (std::size_t y = 0; y < oh; ++y) {
    const double* r0 = src.data() + (2 * y) * w;
    const double* r1 = r0 + w;
    for (std::size_t x = 0; x < ow; ++x) {
      out[y * ow + x] = (r0[2 * x] + r0[2 * x + 1] + r1[2 * x] + r1[2 * x + 1]) * 0.25;
    }
  }
  return out;
}

struct LevelMeans {
  double luminance = 0.0;        // mean l
  double contrast_structure = 0.0;  // mean max(c*s, 0)
  double ssim = 0.0;             // mean l*c*s
};

// One pass over the windows of a level pair. The cross moment is the only
// quantity that depends on both images.
LevelMeans compare_level(const SsimPyramid::Level& a, const SsimPyramid::Level& b,
                         std::span<const double> kernel, const SsimParams& p, bool need_luminance,
                         bool need_ssim) {
  Scratch& s = scratch();
  s.product.resize(a.pixels.size());
  for (std::size_t i = 0; i < s.product.size(); ++i) s.product[i] = a.pixels[i] * b.pixels[i];
  blur_valid(s.product.data(), a.width, a.height, kernel, s.tmp, s.cross);

  const double c1 = p.c1();
  const double c2 = p.c2();
  const std::size_t n = s.cross.size();
  double sum_l = 0.0;
  double sum_cs = 0.0;
  double sum_ssim = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double ma = a.mean[i];
    const double mb = b.mean[i];
    const double var_a = a.second_moment[i] - ma * ma;
    const double var_b = b.second_moment[i] - mb * mb;
    const double cov = s.cross[i] - ma * mb;
    // c * s with c3 = c2 / 2 collapses to one ratio.
    const double cs = (2.0 * cov + c2) / (var_a + var_b + c2);
    sum_cs += std::max(cs, 0.0);
    if (need_luminance || need_ssim) {
      const double l = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
      sum_l += l;
      sum_ssim += l * cs;
    }
  }
  const double count = static_cast<double>(n);
  return {sum_l / count, sum_cs / count, sum_ssim / count};
}

void check_same_shape(const PixelImage& a, const PixelImage& b, const char* what) {
  if (!a.same_shape(b.width(), b.height())) {
    throw InvalidArgument(std::string(what) + ": dimension mismatch " +
                          std::to_string(a.width()) + "x" + std::to_string(a.height()) + " vs " +
                          std::to_string(b.width()) + "x" + std::to_string(b.height()));
  }
}

}  // namespace

void SsimParams::validate() const {
  if (window_size < 3 || window_size % 2 == 0) {
    throw InvalidArgument("window_size must be odd and >= 3, got " + std::to_string(window_size));
  }
  if (!(window_sigma > 0.0)) throw InvalidArgument("window_sigma must be positive");
  if (!(k1 > 0.0) || !(k2 > 0.0)) throw InvalidArgument("k1 and k2 must be positive");
  if (!(dynamic_range > 0.0)) throw InvalidArgument("dynamic range must be positive");
}

MsSsimParams::MsSsimParams() {
  const double w = 1.0 / num_scales;
  weights.assign(static_cast<std::size_t>(num_scales), ScaleWeight{0.0, w, w});
  weights.back().luminance = w;
}

MsSsimParams MsSsimParams::equal(int num_scales, SsimParams base) {
  if (num_scales < 1) throw InvalidArgument("num_scales must be >= 1");
  MsSsimParams p;
  p.base = base;
  p.num_scales = num_scales;
  p.weight_mode = WeightMode::kEqual;
  const double w = 1.0 / num_scales;
  p.weights.assign(static_cast<std::size_t>(num_scales), ScaleWeight{0.0, w, w});
  p.weights.back().luminance = w;
  return p;
}

MsSsimParams MsSsimParams::classic(SsimParams base) {
  std::vector<ScaleWeight> w;
  for (double v : {0.0448, 0.2856, 0.3001, 0.2363, 0.1333}) w.push_back({0.0, v, v});
  w.back().luminance = 0.1333;
  return custom(std::move(w), base);
}

MsSsimParams MsSsimParams::custom(std::vector<ScaleWeight> weights, SsimParams base) {
  if (weights.empty()) throw InvalidArgument("custom MS-SSIM weights must not be empty");
  double sum_c = 0.0;
  double sum_s = 0.0;
  for (const auto& w : weights) {
    sum_c += w.contrast;
    sum_s += w.structure;
  }
  if (!(sum_c > 0.0) || !(sum_s > 0.0)) {
    throw InvalidArgument("custom MS-SSIM weights must have a positive sum");
  }
  for (auto& w : weights) {
    w.contrast /= sum_c;
    w.structure /= sum_s;
  }
  MsSsimParams p;
  p.base = base;
  p.num_scales = static_cast<int>(weights.size());
  p.weight_mode = WeightMode::kCustom;
  p.weights = std::move(weights);
  p.validate();
  return p;
}

void MsSsimParams::validate() const {
  base.validate();
  if (num_scales < 1) throw InvalidArgument("num_scales must be >= 1");
  if (weights.size() != static_cast<std::size_t>(num_scales)) {
    throw InvalidArgument("expected " + std::to_string(num_scales) + " scale weights, got " +
                          std::to_string(weights.size()));
  }
  double sum_c = 0.0;
  double sum_s = 0.0;
  for (const auto& w : weights) {
    if (w.luminance < 0.0 || w.contrast < 0.0 || w.structure < 0.0) {
      throw InvalidArgument("MS-SSIM weights must be nonnegative");
    }
    if (std::abs(w.contrast - w.structure) > kWeightTolerance) {
      throw InvalidArgument("contrast and structure exponents must be equal at every scale");
    }
    sum_c += w.contrast;
    sum_s += w.structure;
  }
  if (std::abs(sum_c - 1.0) > kWeightTolerance || std::abs(sum_s - 1.0) > kWeightTolerance) {
    throw InvalidArgument("contrast/structure weights must be normalized to 1");
  }
}

std::vector<ScaleWeight> MsSsimParams::effective_weights(int scales) const {
  if (scales < 1 || scales > num_scales) {
    throw InvalidArgument("effective_weights: scale count out of range");
  }
  std::vector<ScaleWeight> out(weights.begin(), weights.begin() + scales);
  if (scales == num_scales) return out;
  double sum = 0.0;
  for (const auto& w : out) sum += w.contrast;
  for (auto& w : out) {
    w.contrast /= sum;
    w.structure = w.contrast;
    w.luminance = 0.0;
  }
  out.back().luminance = out.back().contrast;
  return out;
}

SsimComponents ssim_components(std::span<const double> m, std::span<const double> n,
                               const SsimParams& p, std::span<const double> weights) {
  if (m.size() != n.size()) throw InvalidArgument("ssim_components: window size mismatch");
  if (m.empty()) throw InvalidArgument("ssim_components: empty window");
  if (!weights.empty() && weights.size() != m.size()) {
    throw InvalidArgument("ssim_components: weight count mismatch");
  }
  const double uniform = 1.0 / static_cast<double>(m.size());
  auto w = [&](std::size_t i) { return weights.empty() ? uniform : weights[i]; };

  double mu_m = 0.0;
  double mu_n = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    mu_m += w(i) * m[i];
    mu_n += w(i) * n[i];
  }
  double var_m = 0.0;
  double var_n = 0.0;
  double cov = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double dm = m[i] - mu_m;
    const double dn = n[i] - mu_n;
    var_m += w(i) * dm * dm;
    var_n += w(i) * dn * dn;
    cov += w(i) * dm * dn;
  }
  const double sd_m = std::sqrt(var_m);
  const double sd_n = std::sqrt(var_n);
  const double c1 = p.c1();
  const double c2 = p.c2();
  const double c3 = p.c3();
  return {
      (2.0 * mu_m * mu_n + c1) / (mu_m * mu_m + mu_n * mu_n + c1),
      (2.0 * sd_m * sd_n + c2) / (var_m + var_n + c2),
      (cov + c3) / (sd_m * sd_n + c3),
  };
}

std::vector<double> gaussian_window(int size, double sigma) {
  if (size < 1) throw InvalidArgument("gaussian_window: size must be positive");
  std::vector<double> g(static_cast<std::size_t>(size));
  const double centre = size / 2;
  for (int i = 0; i < size; ++i) {
    const double d = i - centre;
    g[static_cast<std::size_t>(i)] = std::exp(-(d * d) / (2.0 * sigma * sigma));
  }
  const double sum = std::accumulate(g.begin(), g.end(), 0.0);
  for (auto& v : g) v /= sum;
  return g;
}

PixelImage downsample(const PixelImage& img) {
  if (img.width() < 2 || img.height() < 2) {
    throw InvalidArgument("downsample: image must be at least 2x2");
  }
  std::vector<double> src(img.pixels().begin(), img.pixels().end());
  return PixelImage(img.width() / 2, img.height() / 2, pool2x2(src, img.width(), img.height()));
}

int feasible_scales(std::size_t width, std::size_t height, const MsSsimParams& p) {
  const auto window = static_cast<std::size_t>(p.base.window_size);
  int scales = 0;
  while (scales < p.num_scales && width >= window && height >= window) {
    ++scales;
    width /= 2;
    height /= 2;
  }
  return scales;
}

SsimPyramid::SsimPyramid(const PixelImage& img, const MsSsimParams& p)
    : width_(img.width()), height_(img.height()) {
  p.validate();
  const int scales = feasible_scales(width_, height_, p);
  if (scales == 0) {
    throw InvalidArgument("image " + std::to_string(width_) + "x" + std::to_string(height_) +
                          " is smaller than the " + std::to_string(p.base.window_size) +
                          "-pixel window");
  }
  const auto kernel = gaussian_window(p.base.window_size, p.base.window_sigma);
  std::vector<double> pixels(img.pixels().begin(), img.pixels().end());
  std::size_t w = width_;
  std::size_t h = height_;
  levels_.reserve(static_cast<std::size_t>(scales));
  for (int j = 0; j < scales; ++j) {
    std::vector<double> next;
    if (j + 1 < scales) next = pool2x2(pixels, w, h);
    levels_.push_back(make_level(std::move(pixels), w, h, kernel));
    pixels = std::move(next);
    w /= 2;
    h /= 2;
  }
}

std::size_t SsimPyramid::memory_bytes() const {
  std::size_t total = 0;
  for (const auto& l : levels_) {
    total += (l.pixels.size() + l.mean.size() + l.second_moment.size()) * sizeof(double);
  }
  return total;
}

std::size_t estimate_pyramid_bytes(std::size_t width, std::size_t height, const MsSsimParams& p) {
  const int scales = feasible_scales(width, height, p);
  const auto k = static_cast<std::size_t>(p.base.window_size);
  std::size_t total = 0;
  for (int j = 0; j < scales; ++j) {
    total += (width * height + 2 * (width - k + 1) * (height - k + 1)) * sizeof(double);
    width /= 2;
    height /= 2;
  }
  return total;
}

SimilarityScore ms_ssim(const SsimPyramid& a, const SsimPyramid& b, const MsSsimParams& p) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw InvalidArgument("ms_ssim: dimension mismatch");
  }
  if (a.scales() != b.scales()) throw InvalidArgument("ms_ssim: pyramid depth mismatch");
  const int scales = a.scales();
  const auto weights = p.effective_weights(scales);
  const auto kernel = gaussian_window(p.base.window_size, p.base.window_sigma);

  double result = 1.0;
  for (int j = 0; j < scales; ++j) {
    const bool coarsest = j + 1 == scales;
    const LevelMeans m = compare_level(a.level(j), b.level(j), kernel, p.base, coarsest, false);
    result *= std::pow(m.contrast_structure, weights[static_cast<std::size_t>(j)].contrast);
    if (coarsest) result *= std::pow(m.luminance, weights.back().luminance);
  }
  return {result};
}

SimilarityScore ms_ssim(const PixelImage& a, const PixelImage& b, const MsSsimParams& p) {
  check_same_shape(a, b, "ms_ssim");
  return ms_ssim(SsimPyramid(a, p), SsimPyramid(b, p), p);
}

SimilarityScore ssim(const PixelImage& a, const PixelImage& b, const SsimParams& p) {
  check_same_shape(a, b, "ssim");
  p.validate();
  const auto window = static_cast<std::size_t>(p.window_size);
  if (a.width() < window || a.height() < window) {
    throw InvalidArgument("ssim: image smaller than the window");
  }
  const auto kernel = gaussian_window(p.window_size, p.window_sigma);
  const auto level_a = make_level({a.pixels().begin(), a.pixels().end()}, a.width(), a.height(),
                                  kernel);
  const auto level_b = make_level({b.pixels().begin(), b.pixels().end()}, b.width(), b.height(),
                                  kernel);
  return {compare_level(level_a, level_b, kernel, p, false, true).ssim};
}

PairError::PairError(std::size_t query, std::size_t corpus, const std::string& what)
    : InvalidArgument("pair (" + std::to_string(query) + ", " + std::to_string(corpus) +
                      "): " + what),
      query_(query),
      corpus_(corpus) {}

ScoreMatrix batch_similarity(std::span<const PixelImage> queries,
                             std::span<const PixelImage> corpus, const MsSsimParams& p, int jobs) {
  p.validate();
  ScoreMatrix out;
  out.rows = queries.size();
  out.cols = corpus.size();
  out.values.assign(out.rows * out.cols, 0.0);
  if (out.values.empty()) return out;

  // Query pyramids are reused across the whole row. Corpus pyramids are built
  // per pair: each corpus image meets each query once.
  std::vector<std::optional<SsimPyramid>> prepared(queries.size());
  parallel_for(queries.size(), jobs, [&](std::size_t i) {
    try {
      prepared[i].emplace(queries[i], p);
    } catch (const std::exception& e) {
      throw PairError(i, 0, e.what());
    }
  });
  parallel_for(out.values.size(), jobs, [&](std::size_t k) {
    const std::size_t i = k / out.cols;
    const std::size_t j = k % out.cols;
    try {
      const PixelImage& q = queries[i];
      check_same_shape(q, corpus[j], "batch_similarity");
      out.values[k] = ms_ssim(*prepared[i], SsimPyramid(corpus[j], p), p).value;
    } catch (const std::exception& e) {
      throw PairError(i, j, e.what());
    }
  });
  return out;
}

}  // namespace memaudit
