// Acceptance suite: one PASS/FAIL line per criterion. Run all criteria, or a
// subset with --criterion N (repeatable).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "manifest_fixture.hpp"
#include "memaudit/audit.hpp"
#include "memaudit/cluster.hpp"
#include "memaudit/commands.hpp"
#include "memaudit/fbmem.hpp"
#include "memaudit/report.hpp"
#include "memaudit/ssim.hpp"
#include "oracle.hpp"
#include "support.hpp"

using namespace memaudit;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      if (pass) detail = what;
      pass = false;
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

oracle::Gray to_gray(const PixelImage& img) {
  return {img.width(), img.height(), {img.pixels().begin(), img.pixels().end()}};
}

PixelImage perturb(std::mt19937_64& rng, const PixelImage& img, double amount) {
  std::vector<double> px(img.pixels().begin(), img.pixels().end());
  for (double& v : px) v = std::clamp(v + amount * (testing::uniform01(rng) - 0.5), 0.0, 1.0);
  return PixelImage(img.width(), img.height(), std::move(px));
}

// Identity and symmetry on random images, then the fast path against the
// per-window oracle.
Outcome metric_correctness() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  double worst_identity = 0.0, worst_symmetry = 0.0;
  for (int i = 0; i < 200; ++i) {
    const std::size_t w = 16 + rng() % 113, h = 16 + rng() % 113;
    const PixelImage x = testing::random_image(rng, w, h);
    const PixelImage y = i % 2 ? testing::random_image(rng, w, h) : perturb(rng, x, 0.3);
    worst_identity = std::max({worst_identity, std::abs(ssim(x, x).value - 1.0),
                               std::abs(ms_ssim(x, x).value - 1.0)});
    worst_symmetry = std::max({worst_symmetry, std::abs(ssim(x, y).value - ssim(y, x).value),
                               std::abs(ms_ssim(x, y).value - ms_ssim(y, x).value)});
  }
  o.require(worst_identity <= 1e-9, fmt::format("identity off by {:g}", worst_identity));
  o.require(worst_symmetry <= 1e-9, fmt::format("symmetry off by {:g}", worst_symmetry));

  double worst_oracle = 0.0;
  for (int i = 0; i < 100; ++i) {
    const PixelImage a = i % 2 ? testing::random_image(rng, 32, 32)
                               : testing::smooth_image(rng, 32, 32);
    const PixelImage b = i % 4 < 2 ? perturb(rng, a, 0.4) : testing::random_image(rng, 32, 32);
    const auto ga = to_gray(a), gb = to_gray(b);
    worst_oracle = std::max({worst_oracle, std::abs(ssim(a, b).value - oracle::ssim(ga, gb)),
                             std::abs(ms_ssim(a, b).value - oracle::ms_ssim(ga, gb, {1, 1, 1, 1, 1}))});
  }
  o.require(worst_oracle <= 1e-6, fmt::format("oracle mismatch {:g}", worst_oracle));
  const double elapsed = seconds_since(t0);
  o.require(elapsed < 60.0, fmt::format("took {:.1f} s", elapsed));
  if (o.pass) {
    o.detail = fmt::format("identity {:.1e}, symmetry {:.1e}, oracle {:.1e}, {:.2f} s",
                           worst_identity, worst_symmetry, worst_oracle, elapsed);
  }
  return o;
}

Outcome constant_closed_form() {
  Outcome o;
  SsimParams p;
  p.dynamic_range = 1.0;
  p.k1 = 0.01;
  const double got = ssim(PixelImage::filled(32, 32, 0.0), PixelImage::filled(32, 32, 1.0), p).value;
  const double want = p.c1() / (1.0 + p.c1());
  const double err = std::abs(got - want);
  o.require(err <= 1e-9, fmt::format("got {:.15g}, want {:.15g}", got, want));
  if (o.pass) o.detail = fmt::format("{:.15g} (error {:.1e})", got, err);
  return o;
}

Outcome branch_suite() {
  Outcome o;
  const FbMemConfig cfg;  // beta = 0.03
  const std::size_t w = 40, h = 25;  // 1000 pixels, so counts give rho exactly
  std::mt19937_64 rng(103);
  const PixelImage xg = testing::smooth_image(rng, w, h);
  const PixelImage xt = testing::smooth_image(rng, w, h);
  const BinaryMask tm = testing::box_mask(w, h, 5, 5, 30, 20);
  const MsSsimParams& p = cfg.metric;
  auto fg = [](const PixelImage& i, const BinaryMask& m) { return apply_mask(i, m, Region::kForeground); };
  auto bg = [](const PixelImage& i, const BinaryMask& m) { return apply_mask(i, m, Region::kBackground); };

  struct Fixture {
    std::size_t count;
    MaskBranch branch;
  };
  const Fixture fixtures[] = {{0, MaskBranch::kSmallForeground},   {20, MaskBranch::kSmallForeground},
                              {30, MaskBranch::kSmallForeground},  {31, MaskBranch::kBalanced},
                              {969, MaskBranch::kBalanced},        {970, MaskBranch::kLargeForeground},
                              {1000, MaskBranch::kLargeForeground}};
  for (const auto& f : fixtures) {
    const BinaryMask gm = testing::prefix_mask(w, h, f.count);
    const double rho = foreground_proportion(gm);
    o.require(select_branch(rho, cfg.beta) == f.branch, fmt::format("rho {} picked the wrong branch", rho));
    const auto s = masked_similarities(MaskedImage(xg, gm), MaskedImage(xt, tm), cfg);
    double want_fg = 0, want_bg = 0;
    switch (f.branch) {
      case MaskBranch::kSmallForeground:
        want_fg = ms_ssim(xg, fg(xt, tm), p).value;
        want_bg = ms_ssim(bg(xg, gm), bg(xt, tm), p).value;
        break;
      case MaskBranch::kLargeForeground:
        want_fg = ms_ssim(fg(xg, gm), fg(xt, tm), p).value;
        want_bg = ms_ssim(xg, bg(xt, tm), p).value;
        break;
      case MaskBranch::kBalanced:
        want_fg = ms_ssim(fg(xg, gm), fg(xt, tm), p).value;
        want_bg = ms_ssim(bg(xg, gm), bg(xt, tm), p).value;
        break;
    }
    o.require(*s.m_fg == want_fg && *s.m_bg == want_bg,
              fmt::format("rho {}: region operands differ from the branch", rho));
  }

  const double grid[] = {0.0, 0.3, 0.59, 0.6, 0.61, 0.79, 0.8, 0.81, 1.0};
  int checked = 0;
  for (double full : grid) {
    for (double f : grid) {
      for (double b : grid) {
        const int got = static_cast<int>(classify({full, f, b}, cfg));
        const int want = oracle::classify(full, f, b, cfg.tau_full, cfg.tau_part);
        o.require(got == want, fmt::format("({}, {}, {}) classified {}", full, f, b, got));
        ++checked;
      }
    }
  }
  if (o.pass) o.detail = fmt::format("7 rho fixtures, {} grid triples", checked);
  return o;
}

Outcome transition_table() {
  Outcome o;
  using enum MemClass;
  struct Row {
    MemClass from, to;
    double score;
  };
  // As published.
  const Row table[] = {{kVM, kNM, 2.0},  {kVM, kBM, 1.5},  {kVM, kFM, 0.5},  {kBM, kFM, -0.5},
                       {kBM, kVM, -1.5}, {kBM, kNM, 0.5},  {kFM, kBM, 1.0},  {kFM, kNM, 1.5},
                       {kFM, kVM, -0.5}, {kNM, kVM, -2.0}, {kNM, kFM, -1.5}, {kNM, kBM, -0.5}};
  for (const auto& r : table) {
    o.require(transition_score(r.from, r.to) == r.score,
              fmt::format("{}->{} = {}", to_string(r.from), to_string(r.to),
                          transition_score(r.from, r.to)));
  }
  for (MemClass c : kAllMemClasses) o.require(transition_score(c, c) == 0.0, "identity nonzero");

  auto rec = [](int g, MemClass c) {
    MatchRecord r;
    r.prompt_id = "p";
    r.generation_index = g;
    r.mem_class = c;
    return r;
  };
  const std::vector<MatchRecord> before = {rec(0, kVM), rec(1, kBM), rec(2, kFM)};
  const std::vector<MatchRecord> after = {rec(0, kNM), rec(1, kFM), rec(2, kBM)};
  const double mean = mitigation_score(before, after);
  // 0.8333 is the four-digit rendering of (2.0 - 0.5 + 1.0) / 3.
  o.require(std::abs(mean - 5.0 / 6.0) <= 1e-12, fmt::format("mean {:.15g}", mean));
  o.require(fmt::format("{:.4f}", mean) == "0.8333", "mean does not render as 0.8333");
  if (o.pass) o.detail = fmt::format("12 transitions exact, mean {:.15g}", mean);
  return o;
}

Outcome one_to_many_oracle() {
  Outcome o;
  std::mt19937_64 rng(105);
  std::vector<MatchRecord> records;
  std::vector<oracle::Generation> gens;
  for (int p = 0; p < 1000; ++p) {
    const std::string prompt = "prompt" + std::to_string(p);
    const int n = 1 + static_cast<int>(rng() % 8);
    const int pool = 1 + static_cast<int>(rng() % 6);
    for (int g = 0; g < n; ++g) {
      const auto label = static_cast<oracle::Label>(rng() % 4);
      const std::string match = "train" + std::to_string(rng() % pool);
      MatchRecord r;
      r.prompt_id = prompt;
      r.generation_index = g;
      r.best_train_id = match;
      r.mem_class = static_cast<MemClass>(label);
      records.push_back(r);
      gens.push_back({prompt, match, label});
    }
  }
  std::shuffle(records.begin(), records.end(), rng);

  const auto want = oracle::recount(gens);
  const auto stats = one_to_many(records);
  o.require(stats.size() == want.size(), "prompt count differs");
  std::map<std::size_t, std::array<std::size_t, 4>> want_hist;  // prompts, VM, FM, BM
  for (const auto& [prompt, r] : want) {
    if (r.distinct == 0) continue;  // prompts with only NM generations are not plotted
    auto& bin = want_hist[r.distinct];
    ++bin[0];
    bin[1] += r.counts[oracle::VM];
    bin[2] += r.counts[oracle::FM];
    bin[3] += r.counts[oracle::BM];
  }
  for (const auto& s : stats) {
    const auto& r = want.at(s.prompt_id);
    o.require(s.distinct_match_count == r.distinct, "distinct count differs for " + s.prompt_id);
    for (int c = 0; c < 4; ++c) o.require(s.class_counts[c] == r.counts[c], "class counts differ");
  }
  const auto hist = one_to_many_histogram(stats);
  o.require(hist.size() == want_hist.size(), "histogram bin count differs");
  for (const auto& b : hist) {
    const auto it = want_hist.find(b.distinct_match_count);
    o.require(it != want_hist.end() && it->second == std::array<std::size_t, 4>{b.prompts, b.vm, b.fm, b.bm},
              fmt::format("histogram bin {} differs", b.distinct_match_count));
  }
  if (o.pass) o.detail = fmt::format("1000 prompts, {} records, {} bins", records.size(), hist.size());
  return o;
}

Outcome match_count() {
  Outcome o;
  constexpr std::size_t kSide = 128, kCorpus = 498, kPrompts = 500, kGens = 5;
  testing::TempDir dir("accept6");
  std::mt19937_64 rng(106);
  testing::ManifestBuilder b(dir.path());
  std::vector<PixelImage> train;
  std::vector<BinaryMask> masks;
  for (std::size_t i = 0; i < kCorpus; ++i) {
    train.push_back(testing::smooth_image(rng, kSide, kSide));
    const std::size_t x0 = 8 + rng() % 40, y0 = 8 + rng() % 40;
    masks.push_back(testing::box_mask(kSide, kSide, x0, y0, x0 + 30 + rng() % 40, y0 + 30 + rng() % 40));
    b.add_corpus("train" + std::to_string(i), train.back(), masks.back());
  }
  for (std::size_t p = 0; p < kPrompts; ++p) {
    for (std::size_t g = 0; g < kGens; ++g) {
      const std::size_t k = rng() % kCorpus;
      PixelImage img = [&] {
        switch (rng() % 3) {
          case 0: return perturb(rng, train[k], 0.1);
          case 1: return testing::composite(train[k], testing::smooth_image(rng, kSide, kSide), masks[k]);
          default: return testing::smooth_image(rng, kSide, kSide);
        }
      }();
      b.add_generation("prompt" + std::to_string(p), static_cast<int>(g), img, masks[k]);
    }
  }
  const AuditManifest manifest = load_manifest(b.write());

  const auto t0 = std::chrono::steady_clock::now();
  const AuditReport report = run_audit(manifest, FbMemConfig{}, 8);
  const double elapsed = seconds_since(t0);
  o.require(report.failures.empty(), fmt::format("{} generations failed", report.failures.size()));
  o.require(report.records.size() == kPrompts * kGens, "record count differs");
  o.require(report.comparisons == 1'245'000,
            fmt::format("{} comparisons, expected 1245000", report.comparisons));
  o.require(elapsed < 1800.0, fmt::format("took {:.0f} s", elapsed));
  const auto& d = report.distribution;
  o.detail = fmt::format("{} comparisons in {:.1f} s on 8 workers ({} logical CPUs); VM {} FM {} BM {} NM {}",
                         report.comparisons, elapsed, std::thread::hardware_concurrency(), d[0], d[1],
                         d[2], d[3]) +
             (o.pass ? "" : "; " + o.detail);
  return o;
}

Outcome throughput() {
  Outcome o;
  BenchOptions opt;
  opt.corpus = 500;
  opt.size = 512;
  opt.jobs = 8;
  opt.repeats = 3;
  opt.seed = 107;
  const BenchResult r = run_bench(opt);
  o.require(*r.identical, "parallel and serial score matrices differ");
  o.require(*r.speedup >= 4.0, fmt::format("speedup {:.2f}x < 4x", *r.speedup));
  o.detail = fmt::format(
      "8 workers {:.2f} s median ({} 24 s), 1 worker {:.2f} s, speedup {:.2f}x, identical {}, "
      "{} logical CPUs",
      r.median_seconds, r.median_seconds <= 24.0 ? "within" : "over", *r.serial_median_seconds,
      *r.speedup, *r.identical ? "yes" : "no", std::thread::hardware_concurrency());
  return o;
}

Outcome clustering() {
  Outcome o;
  std::mt19937_64 rng(108);
  // Two separated blobs.
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::vector<PromptEmbedding> e;
    for (int blob = 0; blob < 2; ++blob) {
      for (int i = 0; i < 25; ++i) {
        std::vector<double> v(8);
        for (double& x : v) x = (blob ? 5.0 : -5.0) + testing::uniform01(rng) - 0.5;
        e.push_back({fmt::format("b{}_{}", blob, i), v});
      }
    }
    const auto a = cluster_prompts(e, 2, {.seed = seed});
    bool exact = a.cluster_of[0] != a.cluster_of[25];
    for (int i = 0; i < 25; ++i) {
      exact = exact && a.cluster_of[i] == a.cluster_of[0] && a.cluster_of[25 + i] == a.cluster_of[25];
    }
    o.require(exact, fmt::format("blobs not recovered with seed {}", seed));
  }

  // Coverage on random fixtures.
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 30;
    std::vector<PromptEmbedding> e;
    std::vector<NeuronSet> sets;
    for (std::size_t i = 0; i < n; ++i) {
      e.push_back({"p" + std::to_string(i), {testing::uniform01(rng), testing::uniform01(rng)}});
      NeuronSet s{"p" + std::to_string(i), {}};
      const std::size_t m = rng() % 12;
      for (std::size_t j = 0; j < m; ++j) s.neurons.insert(rng() % 200);
      if (rng() % 5 != 0) sets.push_back(s);
    }
    const std::size_t k = 1 + rng() % n;
    const auto a = cluster_prompts(e, k, {.seed = static_cast<std::uint64_t>(trial)});
    const auto plans = aggregate_neurons(a, sets, 0.0);
    std::set<std::string> seen;
    for (const auto& s : sets) {
      const auto& plan = plans.at(a.cluster_for(s.prompt_id));
      o.require(std::includes(plan.union_neurons.begin(), plan.union_neurons.end(),
                              s.neurons.begin(), s.neurons.end()),
                fmt::format("trial {}: set of {} not covered", trial, s.prompt_id));
    }
    for (const auto& plan : plans) {
      std::set<NeuronId> rebuilt;
      for (const auto& s : sets) {
        if (a.cluster_for(s.prompt_id) == plan.cluster_id) rebuilt.insert(s.neurons.begin(), s.neurons.end());
      }
      o.require(rebuilt == plan.union_neurons, fmt::format("trial {}: plan not a union", trial));
      seen.insert(plan.members.begin(), plan.members.end());
    }
    o.require(seen.size() == n, fmt::format("trial {}: prompts missing from plans", trial));
  }

  // k = number of prompts: one plan per prompt holding exactly its own set.
  std::vector<PromptEmbedding> e;
  std::vector<NeuronSet> sets;
  for (int i = 0; i < 12; ++i) {
    e.push_back({"p" + std::to_string(i), {testing::uniform01(rng), testing::uniform01(rng)}});
    sets.push_back({"p" + std::to_string(i), {NeuronId(i), NeuronId(100 + i)}});
  }
  const auto a = cluster_prompts(e, 12);
  for (const auto& plan : aggregate_neurons(a, sets, 0.0)) {
    o.require(plan.members.size() == 1, "non-singleton plan");
    for (const auto& s : sets) {
      if (s.prompt_id == plan.members.front()) o.require(plan.union_neurons == s.neurons, "singleton mismatch");
    }
  }
  if (o.pass) o.detail = "blobs exact for 10 seeds, 100 coverage fixtures, 12 singleton plans";
  return o;
}

// Generated images that paste a training foreground onto a new background.
Outcome foreground_shape() {
  Outcome o;
  constexpr std::size_t kSide = 64, kCorpus = 40, kQueries = 120;
  std::mt19937_64 rng(109);
  std::vector<CorpusEntry> corpus;
  for (std::size_t i = 0; i < kCorpus; ++i) {
    const std::size_t side = 18 + rng() % 20;  // 8% to 33% of the frame
    const std::size_t x0 = rng() % (kSide - side), y0 = rng() % (kSide - side);
    corpus.push_back({"t" + std::to_string(i), testing::smooth_image(rng, kSide, kSide),
                      testing::box_mask(kSide, kSide, x0, y0, x0 + side, y0 + side)});
  }
  const FbMemConfig cfg;
  const PreparedCorpus prepared(corpus, kSide, kSide, cfg.metric, 0);
  ClassCounts counts{};
  std::size_t correct_match = 0;
  for (std::size_t q = 0; q < kQueries; ++q) {
    const std::size_t k = rng() % kCorpus;
    const auto& src = corpus[k];
    const PixelImage gen = testing::composite(src.image, testing::smooth_image(rng, kSide, kSide), *src.mask);
    const MatchRecord r = best_match(prepared, gen, *src.mask, cfg);
    ++counts[class_index(r.mem_class)];
    correct_match += r.best_train_index == k;
  }
  const double vm = static_cast<double>(counts[0]) / kQueries;
  const double fm = static_cast<double>(counts[1]) / kQueries;
  o.require(fm > vm, fmt::format("FM rate {:.3f} <= VM rate {:.3f}", fm, vm));
  o.detail = fmt::format("FM {:.3f} vs VM {:.3f} (BM {}, NM {}, source matched {}/{})", fm, vm,
                         counts[2], counts[3], correct_match, kQueries) +
             (o.pass ? "" : "; " + o.detail);
  return o;
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "metric correctness", metric_correctness},
      {2, "constant-image closed form", constant_closed_form},
      {3, "branch and precedence suite", branch_suite},
      {4, "transition table exactness", transition_table},
      {5, "one-to-many oracle", one_to_many_oracle},
      {6, "match-count reproduction", match_count},
      {7, "throughput and parallel speedup", throughput},
      {8, "clustering and aggregation", clustering},
      {9, "foreground memorization shape check", foreground_shape},
  };

  CLI::App app{"Acceptance criteria"};
  std::vector<int> selected;
  app.add_option("--criterion", selected, "Criterion number (repeatable); default all")
      ->check(CLI::Range(1, static_cast<int>(criteria.size())));
  CLI11_PARSE(app, argc, argv);

  bool all_pass = true;
  for (const auto& c : criteria) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end()) continue;
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    all_pass = all_pass && out.pass;
    std::printf("%s criterion %d (%s): %s\n", out.pass ? "PASS" : "FAIL", c.id, c.name, out.detail.c_str());
    std::fflush(stdout);
  }
  return all_pass ? 0 : 1;
}
