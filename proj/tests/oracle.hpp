#pragma once

// Reference implementations used only by tests. They are written for clarity
// and share no code with the library kernels.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace oracle {

struct Gray {
  std::size_t w = 0;
  std::size_t h = 0;
  std::vector<double> v;
  double operator()(std::size_t x, std::size_t y) const { return v[y * w + x]; }
};

// Full 2-D Gaussian, normalized over all size*size taps.
inline std::vector<double> gaussian2d(int size, double sigma) {
  std::vector<double> g(static_cast<std::size_t>(size * size));
  const double c = (size - 1) / 2.0;
  double sum = 0.0;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double d2 = (x - c) * (x - c) + (y - c) * (y - c);
      g[static_cast<std::size_t>(y * size + x)] = std::exp(-d2 / (2.0 * sigma * sigma));
      sum += g[static_cast<std::size_t>(y * size + x)];
    }
  }
  for (double& v : g) v /= sum;
  return g;
}

struct WindowStats {
  double l;   // luminance term
  double cs;  // contrast * structure with c3 = c2 / 2
};

// Gaussian-weighted statistics of one window, centred moments.
inline WindowStats window(const Gray& a, const Gray& b, std::size_t x0, std::size_t y0,
                          const std::vector<double>& g, int size, double c1, double c2) {
  double ma = 0, mb = 0;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double w = g[static_cast<std::size_t>(y * size + x)];
      ma += w * a(x0 + x, y0 + y);
      mb += w * b(x0 + x, y0 + y);
    }
  }
  double va = 0, vb = 0, cov = 0;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double w = g[static_cast<std::size_t>(y * size + x)];
      const double da = a(x0 + x, y0 + y) - ma;
      const double db = b(x0 + x, y0 + y) - mb;
      va += w * da * da;
      vb += w * db * db;
      cov += w * da * db;
    }
  }
  const double sa = std::sqrt(va), sb = std::sqrt(vb);
  const double c3 = c2 / 2.0;
  const double l = (2 * ma * mb + c1) / (ma * ma + mb * mb + c1);
  const double c = (2 * sa * sb + c2) / (va + vb + c2);
  const double s = (cov + c3) / (sa * sb + c3);
  return {l, c * s};
}

struct Params {
  int size = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double L = 1.0;
};

inline double ssim(const Gray& a, const Gray& b, const Params& p = {}) {
  const auto g = gaussian2d(p.size, p.sigma);
  const double c1 = (p.k1 * p.L) * (p.k1 * p.L);
  const double c2 = (p.k2 * p.L) * (p.k2 * p.L);
  const std::size_t n = static_cast<std::size_t>(p.size);
  double sum = 0;
  std::size_t count = 0;
  for (std::size_t y = 0; y + n <= a.h; ++y) {
    for (std::size_t x = 0; x + n <= a.w; ++x) {
      const auto s = window(a, b, x, y, g, p.size, c1, c2);
      sum += s.l * s.cs;
      ++count;
    }
  }
  return sum / static_cast<double>(count);
}

inline Gray halve(const Gray& a) {
  Gray out{a.w / 2, a.h / 2, {}};
  out.v.resize(out.w * out.h);
  for (std::size_t y = 0; y < out.h; ++y) {
    for (std::size_t x = 0; x < out.w; ++x) {
      out.v[y * out.w + x] =
          (a(2 * x, 2 * y) + a(2 * x + 1, 2 * y) + a(2 * x, 2 * y + 1) + a(2 * x + 1, 2 * y + 1)) /
          4.0;
    }
  }
  return out;
}

// Contrast/structure exponents per scale (luminance uses the last one).
// Scales are truncated to those whose image still holds a full window; the
// remaining exponents are renormalized to sum to one.
inline double ms_ssim(Gray a, Gray b, std::vector<double> exponents, const Params& p = {}) {
  const std::size_t n = static_cast<std::size_t>(p.size);
  std::size_t usable = 0;
  for (std::size_t w = a.w, h = a.h; usable < exponents.size() && w >= n && h >= n;
       w /= 2, h /= 2) {
    ++usable;
  }
  exponents.resize(usable);
  double total = 0;
  for (double e : exponents) total += e;
  for (double& e : exponents) e /= total;

  const auto g = gaussian2d(p.size, p.sigma);
  const double c1 = (p.k1 * p.L) * (p.k1 * p.L);
  const double c2 = (p.k2 * p.L) * (p.k2 * p.L);
  double result = 1.0;
  for (std::size_t j = 0; j < usable; ++j) {
    if (j > 0) {
      a = halve(a);
      b = halve(b);
    }
    double sum_l = 0, sum_cs = 0;
    std::size_t count = 0;
    for (std::size_t y = 0; y + n <= a.h; ++y) {
      for (std::size_t x = 0; x + n <= a.w; ++x) {
        const auto s = window(a, b, x, y, g, p.size, c1, c2);
        sum_l += s.l;
        sum_cs += std::max(s.cs, 0.0);
        ++count;
      }
    }
    result *= std::pow(sum_cs / static_cast<double>(count), exponents[j]);
    if (j + 1 == usable) result *= std::pow(sum_l / static_cast<double>(count), exponents[j]);
  }
  return result;
}

// Class labels in the order VM, FM, BM, NM.
enum Label { VM = 0, FM = 1, BM = 2, NM = 3 };

inline Label classify(double full, double fg, double bg, double tau_full, double tau_part) {
  if (full >= tau_full) return VM;
  if (fg >= tau_part) return FM;
  if (bg >= tau_part) return BM;
  return NM;
}

// Mitigation table written out as the published list of transitions.
inline double transition(Label before, Label after) {
  static const std::map<std::pair<Label, Label>, double> table = {
      {{VM, NM}, 2.0},  {{VM, BM}, 1.5},  {{VM, FM}, 0.5},   {{FM, NM}, 1.5},
      {{FM, BM}, 1.0},  {{FM, VM}, -0.5}, {{BM, NM}, 0.5},   {{BM, FM}, -0.5},
      {{BM, VM}, -1.5}, {{NM, VM}, -2.0}, {{NM, FM}, -1.5},  {{NM, BM}, -0.5}};
  if (before == after) return 0.0;
  return table.at({before, after});
}

struct Generation {
  std::string prompt;
  std::string match;
  Label label;
};

struct PromptRecount {
  std::size_t distinct = 0;
  std::array<std::size_t, 4> counts{};
};

// Distinct training matches per prompt, ignoring non-memorized generations.
inline std::map<std::string, PromptRecount> recount(const std::vector<Generation>& gens) {
  std::map<std::string, std::set<std::string>> matches;
  std::map<std::string, PromptRecount> out;
  for (const auto& g : gens) {
    auto& r = out[g.prompt];
    ++r.counts[g.label];
    matches[g.prompt];
    if (g.label != NM) matches[g.prompt].insert(g.match);
  }
  for (auto& [prompt, r] : out) r.distinct = matches[prompt].size();
  return out;
}

}  // namespace oracle
