#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "memaudit/image.hpp"
#include "memaudit/ssim.hpp"

namespace memaudit {

struct FbMemConfig {
  double tau_full = 0.8;  // verbatim threshold on the full-frame score
  double tau_part = 0.6;  // foreground / background threshold
  double beta = 0.03;     // foreground-proportion cutoff for the adaptive branches
  MsSsimParams metric;

  // Requires 0 < beta < 0.5 and 0 < tau_part <= tau_full <= 1.
  void validate() const;
};

// M_full, M_fg, M_bg for one generated/training pair. The region scores are
// absent only when a segmentation mask is missing.
struct SimilarityTriple {
  double m_full = 0.0;
  std::optional<double> m_fg;
  std::optional<double> m_bg;

  friend bool operator==(const SimilarityTriple&, const SimilarityTriple&) = default;
};

enum class MemClass { kVM, kFM, kBM, kNM };

inline constexpr MemClass kAllMemClasses[] = {MemClass::kVM, MemClass::kFM, MemClass::kBM,
                                              MemClass::kNM};

std::string_view to_string(MemClass c);
// Accepts "VM", "FM", "BM", "NM". Throws InputError otherwise.
MemClass parse_mem_class(std::string_view s);

// Which operands the region scores use, chosen from the generated image's
// foreground proportion rho.
enum class MaskBranch {
  kSmallForeground,  // rho <= beta: whole generated image vs training foreground
  kLargeForeground,  // rho >= 1 - beta: whole generated image vs training background
  kBalanced          // masked vs masked for both regions
};

MaskBranch select_branch(double foreground_proportion, double beta);

SimilarityTriple masked_similarities(const MaskedImage& gen, const MaskedImage& train,
                                     const FbMemConfig& cfg);

// First of VM, FM, BM, NM whose condition holds; absent region scores never
// satisfy a condition.
MemClass classify(const SimilarityTriple& scores, const FbMemConfig& cfg);

std::pair<MemClass, SimilarityTriple> classify_pair(const MaskedImage& gen,
                                                    const MaskedImage& train,
                                                    const FbMemConfig& cfg);

}  // namespace memaudit
