#include "memaudit/fbmem.hpp"

#include <string>

#include "memaudit/error.hpp"

namespace memaudit {

void FbMemConfig::validate() const {
  if (!(beta > 0.0 && beta < 0.5)) {
    throw InvalidArgument("beta must lie in (0, 0.5), got " + std::to_string(beta));
  }
  if (!(tau_part > 0.0 && tau_part <= tau_full && tau_full <= 1.0)) {
    throw InvalidArgument("thresholds must satisfy 0 < tau_part <= tau_full <= 1");
  }
  metric.validate();
}

std::string_view to_string(MemClass c) {
  switch (c) {
    case MemClass::kVM: return "VM";
    case MemClass::kFM: return "FM";
    case MemClass::kBM: return "BM";
    case MemClass::kNM: return "NM";
  }
  return "NM";
}

MemClass parse_mem_class(std::string_view s) {
  for (MemClass c : kAllMemClasses) {
    if (to_string(c) == s) return c;
  }
  throw InputError("unknown memorization class '" + std::string(s) + "'");
}

MaskBranch select_branch(double foreground_proportion, double beta) {
  if (foreground_proportion <= beta) return MaskBranch::kSmallForeground;
  if (foreground_proportion >= 1.0 - beta) return MaskBranch::kLargeForeground;
  return MaskBranch::kBalanced;
}

SimilarityTriple masked_similarities(const MaskedImage& gen, const MaskedImage& train,
                                     const FbMemConfig& cfg) {
  const PixelImage& xg = gen.image();
  const PixelImage& xt = train.image();
  if (!xg.same_shape(xt.width(), xt.height())) {
    throw InvalidArgument("masked_similarities: generated and training images differ in size");
  }
  const MsSsimParams& p = cfg.metric;
  const SsimPyramid whole_gen(xg, p);

  auto fg = [](const MaskedImage& m) { return apply_mask(m.image(), m.mask(), Region::kForeground); };
  auto bg = [](const MaskedImage& m) { return apply_mask(m.image(), m.mask(), Region::kBackground); };
  auto score = [&](const SsimPyramid& a, const PixelImage& b) {
    return ms_ssim(a, SsimPyramid(b, p), p).value;
  };

  SimilarityTriple out;
  out.m_full = score(whole_gen, xt);
  switch (select_branch(foreground_proportion(gen.mask()), cfg.beta)) {
    case MaskBranch::kSmallForeground:
      out.m_fg = score(whole_gen, fg(train));
      out.m_bg = ms_ssim(bg(gen), bg(train), p).value;
      break;
    case MaskBranch::kLargeForeground:
      out.m_fg = ms_ssim(fg(gen), fg(train), p).value;
      out.m_bg = score(whole_gen, bg(train));
      break;
    case MaskBranch::kBalanced:
      out.m_fg = ms_ssim(fg(gen), fg(train), p).value;
      out.m_bg = ms_ssim(bg(gen), bg(train), p).value;
      break;
  }
  return out;
}

MemClass classify(const SimilarityTriple& scores, const FbMemConfig& cfg) {
  if (scores.m_full >= cfg.tau_full) return MemClass::kVM;
  if (scores.m_fg && *scores.m_fg >= cfg.tau_part) return MemClass::kFM;
  if (scores.m_bg && *scores.m_bg >= cfg.tau_part) return MemClass::kBM;
  return MemClass::kNM;
}

std::pair<MemClass, SimilarityTriple> classify_pair(const MaskedImage& gen,
                                                    const MaskedImage& train,
                                                    const FbMemConfig& cfg) {
  const SimilarityTriple scores = masked_similarities(gen, train, cfg);
  return {classify(scores, cfg), scores};
}

}  // namespace memaudit
