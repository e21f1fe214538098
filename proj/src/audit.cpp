#include "memaudit/audit.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>

#include "memaudit/error.hpp"
#include "memaudit/parallel.hpp"

namespace memaudit {

namespace {

// Mitigation strength per [before][after], classes ordered VM, FM, BM, NM.
constexpr double kTransitionScores[4][4] = {
    /* VM -> */ {0.0, +0.5, +1.5, +2.0},
    /* FM -> */ {-0.5, 0.0, +1.0, +1.5},
    /* BM -> */ {-1.5, -0.5, 0.0, +0.5},
    /* NM -> */ {-2.0, -1.5, -0.5, 0.0},
};

using RecordKey = std::pair<std::string, int>;

std::map<RecordKey, MemClass> index_records(std::span<const MatchRecord> records,
                                            const char* side) {
  std::map<RecordKey, MemClass> out;
  for (const auto& r : records) {
    if (!out.emplace(RecordKey{r.prompt_id, r.generation_index}, r.mem_class).second) {
      throw InputError(std::string("duplicate record in ") + side + " set: prompt '" +
                       r.prompt_id + "' generation " + std::to_string(r.generation_index));
    }
  }
  return out;
}

}  // namespace

PreparedCorpus::PreparedCorpus(std::span<const CorpusEntry> corpus, std::size_t width,
                               std::size_t height, const MsSsimParams& params, int jobs,
                               std::size_t cache_budget_bytes)
    : width_(width), height_(height), params_(params) {
  params_.validate();
  ids_.reserve(corpus.size());
  masks_.resize(corpus.size());
  std::vector<std::optional<PixelImage>> resized(corpus.size());
  parallel_for(corpus.size(), jobs, [&](std::size_t i) {
    resized[i] = resize(corpus[i].image, width, height);
    if (corpus[i].mask) masks_[i] = resize(*corpus[i].mask, width, height);
  });
  images_.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    ids_.push_back(corpus[i].id);
    images_.push_back(std::move(*resized[i]));
  }

  const std::size_t total = estimate_pyramid_bytes(width, height, params_) * corpus.size();
  if (!corpus.empty() && total <= cache_budget_bytes) {
    std::vector<std::optional<SsimPyramid>> built(corpus.size());
    parallel_for(corpus.size(), jobs, [&](std::size_t i) { built[i].emplace(images_[i], params_); });
    pyramids_.reserve(corpus.size());
    for (auto& p : built) pyramids_.push_back(std::move(*p));
  }
}

double PreparedCorpus::score(const SsimPyramid& query, std::size_t i) const {
  if (cached()) return ms_ssim(query, pyramids_[i], params_).value;
  return ms_ssim(query, SsimPyramid(images_[i], params_), params_).value;
}

PreparedCorpus::Scan PreparedCorpus::scan(const SsimPyramid& query) const {
  if (empty()) throw InvalidArgument("best match requires a non-empty corpus");
  if (query.width() != width_ || query.height() != height_) {
    throw InvalidArgument("query dimensions differ from the prepared corpus");
  }
  Scan out;
  for (std::size_t i = 0; i < size(); ++i) {
    const double s = score(query, i);
    ++out.comparisons;
    if (i == 0 || s > out.best_score) {
      out.best_score = s;
      out.best_index = i;
    }
  }
  return out;
}

MatchRecord best_match(const PreparedCorpus& corpus, const PixelImage& gen,
                       const std::optional<BinaryMask>& gen_mask, const FbMemConfig& cfg,
                       std::uint64_t* comparisons) {
  const SsimPyramid query(gen, cfg.metric);
  const PreparedCorpus::Scan hit = corpus.scan(query);
  if (comparisons != nullptr) *comparisons += hit.comparisons;

  MatchRecord rec;
  rec.best_train_index = hit.best_index;
  rec.best_train_id = corpus.id(hit.best_index);
  const auto& train_mask = corpus.mask(hit.best_index);
  if (gen_mask && train_mask) {
    auto [cls, scores] = classify_pair(MaskedImage(gen, *gen_mask),
                                       MaskedImage(corpus.image(hit.best_index), *train_mask), cfg);
    rec.scores = scores;
    rec.mem_class = cls;
  } else {
    rec.scores.m_full = hit.best_score;
    rec.mem_class = classify(rec.scores, cfg);
    rec.mask_absent = true;
  }
  return rec;
}

MatchRecord best_match(const MaskedImage& gen, std::span<const CorpusEntry> corpus,
                       const FbMemConfig& cfg) {
  const PixelImage& img = gen.image();
  const PreparedCorpus prepared(corpus, img.width(), img.height(), cfg.metric, 1);
  return best_match(prepared, img, gen.mask(), cfg);
}

std::vector<OneToManyStats> one_to_many(std::span<const MatchRecord> records) {
  std::vector<OneToManyStats> out;
  std::unordered_map<std::string, std::size_t> slot;
  std::vector<std::set<std::string>> matched;
  for (const auto& r : records) {
    auto [it, inserted] = slot.emplace(r.prompt_id, out.size());
    if (inserted) {
      out.push_back(OneToManyStats{.prompt_id = r.prompt_id});
      matched.emplace_back();
    }
    OneToManyStats& s = out[it->second];
    ++s.generations;
    ++s.class_counts[class_index(r.mem_class)];
    if (r.mem_class != MemClass::kNM) {
      ++s.memorized;
      matched[it->second].insert(r.best_train_id);
    }
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i].distinct_match_count = matched[i].size();
  return out;
}

std::vector<OneToManyBin> one_to_many_histogram(std::span<const OneToManyStats> stats) {
  std::map<std::size_t, OneToManyBin> bins;
  for (const auto& s : stats) {
    if (s.distinct_match_count == 0) continue;
    OneToManyBin& b = bins[s.distinct_match_count];
    b.distinct_match_count = s.distinct_match_count;
    ++b.prompts;
    b.vm += s.class_counts[class_index(MemClass::kVM)];
    b.fm += s.class_counts[class_index(MemClass::kFM)];
    b.bm += s.class_counts[class_index(MemClass::kBM)];
  }
  std::vector<OneToManyBin> out;
  for (auto& [_, b] : bins) out.push_back(b);
  return out;
}

double transition_score(MemClass before, MemClass after) {
  return kTransitionScores[class_index(before)][class_index(after)];
}

MitigationSummary summarize_mitigation(std::span<const MatchRecord> before,
                                       std::span<const MatchRecord> after) {
  const auto lhs = index_records(before, "before");
  const auto rhs = index_records(after, "after");
  MitigationSummary out;
  for (const auto& [key, from] : lhs) {
    const auto it = rhs.find(key);
    if (it == rhs.end()) {
      throw InputError("record missing from after set: prompt '" + key.first + "' generation " +
                       std::to_string(key.second));
    }
    ++out.transitions[class_index(from)][class_index(it->second)];
  }
  if (rhs.size() != lhs.size()) {
    for (const auto& [key, _] : rhs) {
      if (!lhs.contains(key)) {
        throw InputError("record missing from before set: prompt '" + key.first +
                         "' generation " + std::to_string(key.second));
      }
    }
  }
  out.pairs = lhs.size();
  if (out.pairs == 0) return out;
  double total = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      total += static_cast<double>(out.transitions[i][j]) * kTransitionScores[i][j];
    }
  }
  out.score = total / static_cast<double>(out.pairs);
  return out;
}

double mitigation_score(std::span<const MatchRecord> before, std::span<const MatchRecord> after) {
  return summarize_mitigation(before, after).score;
}

}  // namespace memaudit
