#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "memaudit/fbmem.hpp"
#include "memaudit/image.hpp"
#include "memaudit/ssim.hpp"

namespace memaudit {

struct GenerationRecord {
  std::string prompt_id;
  int generation_index = 0;
  std::filesystem::path image_ref;
  std::optional<std::filesystem::path> mask_ref;
};

struct CorpusEntry {
  std::string id;
  PixelImage image;
  std::optional<BinaryMask> mask;
};

// One generated image's best training match.
struct MatchRecord {
  std::string prompt_id;
  int generation_index = 0;
  std::string best_train_id;
  std::size_t best_train_index = 0;
  SimilarityTriple scores;
  MemClass mem_class = MemClass::kNM;
  // Generated or matched training image had no mask: only m_full was scored.
  bool mask_absent = false;
};

inline std::size_t class_index(MemClass c) { return static_cast<std::size_t>(c); }

using ClassCounts = std::array<std::size_t, 4>;  // indexed by class_index

struct OneToManyStats {
  std::string prompt_id;
  std::size_t generations = 0;
  std::size_t memorized = 0;  // generations classified VM, FM or BM
  std::size_t distinct_match_count = 0;
  ClassCounts class_counts{};
};

// Memorized generations of all prompts sharing one distinct-match count.
struct OneToManyBin {
  std::size_t distinct_match_count = 0;
  std::size_t prompts = 0;
  std::size_t vm = 0;
  std::size_t fm = 0;
  std::size_t bm = 0;

  friend bool operator==(const OneToManyBin&, const OneToManyBin&) = default;
};

// A corpus resized to one query resolution, with MS-SSIM pyramids cached when
// they fit in `cache_budget_bytes`. Cached and uncached scoring are
// bit-identical.
class PreparedCorpus {
 public:
  static constexpr std::size_t kDefaultCacheBudget = std::size_t{1} << 30;

  PreparedCorpus(std::span<const CorpusEntry> corpus, std::size_t width, std::size_t height,
                 const MsSsimParams& params, int jobs,
                 std::size_t cache_budget_bytes = kDefaultCacheBudget);

  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  bool cached() const { return !pyramids_.empty(); }
  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  const std::string& id(std::size_t i) const { return ids_[i]; }
  const PixelImage& image(std::size_t i) const { return images_[i]; }
  const std::optional<BinaryMask>& mask(std::size_t i) const { return masks_[i]; }

  struct Scan {
    std::size_t best_index = 0;
    double best_score = 0.0;
    std::uint64_t comparisons = 0;
  };
  // Full-frame MS-SSIM against every entry; the lowest index wins ties.
  Scan scan(const SsimPyramid& query) const;

  double score(const SsimPyramid& query, std::size_t i) const;

 private:
  std::size_t width_;
  std::size_t height_;
  MsSsimParams params_;
  std::vector<std::string> ids_;
  std::vector<PixelImage> images_;
  std::vector<std::optional<BinaryMask>> masks_;
  std::vector<SsimPyramid> pyramids_;
};

// Selects the training image maximizing m_full, then classifies the pair with
// FB-Mem. prompt_id and generation_index are left for the caller. `gen_mask`
// must match the generated image's dimensions when present.
MatchRecord best_match(const PreparedCorpus& corpus, const PixelImage& gen,
                       const std::optional<BinaryMask>& gen_mask, const FbMemConfig& cfg,
                       std::uint64_t* comparisons = nullptr);

// Convenience form that prepares (resizes) the corpus for this one query.
MatchRecord best_match(const MaskedImage& gen, std::span<const CorpusEntry> corpus,
                       const FbMemConfig& cfg);

// Per prompt, in order of first appearance. NM generations do not count
// toward distinct matches.
std::vector<OneToManyStats> one_to_many(std::span<const MatchRecord> records);

// Histogram over distinct-match counts >= 1, ascending.
std::vector<OneToManyBin> one_to_many_histogram(std::span<const OneToManyStats> stats);

// Mitigation-strength value of a before -> after class change; 0 for no change.
double transition_score(MemClass before, MemClass after);

struct MitigationSummary {
  std::size_t pairs = 0;
  double score = 0.0;  // mean transition score; 0 for no pairs
  std::array<std::array<std::size_t, 4>, 4> transitions{};  // [before][after]
};

// Aligns records on (prompt_id, generation_index). Throws InputError on
// duplicate keys or keys present on only one side.
MitigationSummary summarize_mitigation(std::span<const MatchRecord> before,
                                       std::span<const MatchRecord> after);

double mitigation_score(std::span<const MatchRecord> before, std::span<const MatchRecord> after);

}  // namespace memaudit
