#include "memaudit/commands.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "json.hpp"
#include "memaudit/cluster.hpp"
#include "memaudit/error.hpp"
#include "memaudit/parallel.hpp"

namespace memaudit {

namespace {

using Json = nlohmann::ordered_json;

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw InputError("cannot open " + path.string() + " for writing");
  f << text;
  if (!f.flush()) throw InputError("failed writing " + path.string());
}

PixelImage random_image(std::mt19937_64& rng, std::size_t size) {
  std::vector<double> px(size * size);
  for (double& v : px) v = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return PixelImage(size, size, std::move(px));
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct Timed {
  double median_seconds;
  ScoreMatrix scores;
};

Timed time_batch(const std::vector<PixelImage>& query, const std::vector<PixelImage>& corpus,
                 const MsSsimParams& metric, int jobs, int repeats) {
  std::vector<double> seconds;
  ScoreMatrix scores;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    scores = batch_similarity(query, corpus, metric, jobs);
    const auto t1 = std::chrono::steady_clock::now();
    seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  return {median(std::move(seconds)), std::move(scores)};
}

void add_config_flags(CLI::App* cmd, ConfigOverrides& o) {
  cmd->add_option("--tau-full", o.tau_full, "Full-frame (VM) threshold");
  cmd->add_option("--tau-part", o.tau_part, "Foreground/background threshold");
  cmd->add_option("--beta", o.beta, "Foreground-proportion cutoff");
  cmd->add_option("--scales", o.scales, "MS-SSIM scale count");
  cmd->add_option("--weights", o.weights, "MS-SSIM exponents")
      ->check(CLI::IsMember({"equal", "classic"}));
}

}  // namespace

int cmd_audit(const AuditOptions& options, std::ostream& out, std::ostream& err) {
  const AuditManifest manifest = load_manifest(options.manifest);
  const FbMemConfig config = resolve_config(options.overrides, manifest.config);
  std::optional<std::vector<MatchRecord>> before;
  if (options.before) before = read_report_records(*options.before);

  AuditReport report = run_audit(manifest, config, options.jobs);
  if (before) report.mitigation = summarize_mitigation(*before, report.records);

  const std::string json = report_json(report);
  if (options.out) {
    write_text(*options.out, json);
  } else {
    out << json;
  }
  std::optional<std::filesystem::path> csv = options.csv;
  if (!csv && options.out) csv = std::filesystem::path(*options.out).replace_extension(".csv");
  if (csv) write_text(*csv, report_csv(report));

  err << fmt::format("{} generations, {} corpus images, {} comparisons, {} failures\n",
                     manifest.generations.size(), manifest.corpus.size(), report.comparisons,
                     report.failures.size());
  for (const auto& f : report.failures) {
    err << fmt::format("failed {}/{}: {}\n", f.prompt_id, f.generation_index, f.error);
  }
  return report.failures.empty() ? kExitOk : kExitPartialFailure;
}

MitigationSummary cmd_score(const ScoreOptions& options, std::ostream& out) {
  const auto before = read_report_records(options.before);
  const auto after = read_report_records(options.after);
  const MitigationSummary summary = summarize_mitigation(before, after);
  const std::string json = mitigation_json(summary);
  if (options.out) write_text(*options.out, json);
  out << json;
  return summary;
}

void cmd_cluster(const ClusterOptions& options, std::ostream& out) {
  const auto embeddings = read_embeddings_csv(options.embeddings);
  const auto sets = read_neuron_sets(options.neuron_sets);
  KMeansOptions km;
  km.seed = options.seed;
  km.normalize = options.cosine;
  const ClusterAssignment assignment = cluster_prompts(embeddings, options.k, km);
  const auto plans = aggregate_neurons(assignment, sets, options.alpha_damp);
  export_plan(plans, options.out);
  out << fmt::format("{} prompts in {} clusters ({} iterations), plan written to {}\n",
                     embeddings.size(), plans.size(), assignment.iterations,
                     options.out.string());
}

BenchResult run_bench(const BenchOptions& options) {
  if (options.repeats < 1) throw InputError("repeats must be >= 1");
  if (options.size == 0) throw InputError("size must be >= 1");
  BenchResult result;
  result.jobs = options.jobs <= 0 ? default_jobs() : options.jobs;
  result.pairs = options.corpus;
  if (options.corpus == 0) return result;

  std::mt19937_64 rng(options.seed);
  const std::vector<PixelImage> query{random_image(rng, options.size)};
  std::vector<PixelImage> corpus;
  corpus.reserve(options.corpus);
  for (std::size_t i = 0; i < options.corpus; ++i) corpus.push_back(random_image(rng, options.size));

  const Timed parallel = time_batch(query, corpus, options.metric, result.jobs, options.repeats);
  result.median_seconds = parallel.median_seconds;
  result.pairs_per_second =
      parallel.median_seconds > 0 ? static_cast<double>(result.pairs) / parallel.median_seconds : 0;
  if (options.compare_serial) {
    const Timed serial = time_batch(query, corpus, options.metric, 1, options.repeats);
    result.serial_median_seconds = serial.median_seconds;
    result.speedup = parallel.median_seconds > 0 ? serial.median_seconds / parallel.median_seconds
                                                 : 0.0;
    result.identical = serial.scores == parallel.scores;
  }
  return result;
}

void cmd_bench(const BenchOptions& options, std::ostream& out) {
  const BenchResult r = run_bench(options);
  Json doc;
  doc["schema_version"] = kReportSchemaVersion;
  doc["tool"] = {{"name", kToolName}, {"version", kToolVersion}};
  doc["corpus"] = options.corpus;
  doc["size"] = options.size;
  doc["repeats"] = options.repeats;
  doc["jobs"] = r.jobs;
  doc["pairs"] = r.pairs;
  doc["median_seconds"] = round6(r.median_seconds);
  doc["pairs_per_second"] = round6(r.pairs_per_second);
  if (r.serial_median_seconds) {
    doc["serial_median_seconds"] = round6(*r.serial_median_seconds);
    doc["speedup"] = round6(*r.speedup);
    doc["identical"] = *r.identical;
  }
  out << doc.dump(2) << "\n";
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Foreground/background memorization audit for generated images",
               std::string(kToolName)};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  int jobs = default_jobs();

  AuditOptions audit;
  std::string audit_out, audit_csv, audit_before;
  auto* a = app.add_subcommand("audit", "Classify every generation in a manifest");
  a->add_option("manifest", audit.manifest, "Manifest JSON")->required();
  a->add_option("--out", audit_out, "Report JSON path (default: stdout)");
  a->add_option("--csv", audit_csv, "Flat CSV path (default: report path with .csv)");
  a->add_option("--before", audit_before, "Pre-mitigation report for a mitigation score");
  a->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  add_config_flags(a, audit.overrides);

  ScoreOptions score;
  std::string score_out;
  auto* s = app.add_subcommand("score", "Mitigation score between two reports");
  s->add_option("before", score.before, "Report before mitigation")->required();
  s->add_option("after", score.after, "Report after mitigation")->required();
  s->add_option("--out", score_out, "Also write the summary JSON here");

  ClusterOptions cluster;
  auto* c = app.add_subcommand("cluster", "Cluster prompts and merge their neuron sets");
  c->add_option("embeddings", cluster.embeddings, "Embeddings CSV")->required();
  c->add_option("neuron_sets", cluster.neuron_sets, "Neuron-set JSON")->required();
  c->add_option("--out", cluster.out, "Plan JSON path")->required();
  c->add_option("--k", cluster.k, "Cluster count")->capture_default_str();
  c->add_option("--alpha-damp", cluster.alpha_damp, "Activation scale for selected neurons")
      ->capture_default_str();
  c->add_option("--seed", cluster.seed, "k-means++ seed")->capture_default_str();
  c->add_flag("--cosine", cluster.cosine, "L2-normalize embeddings before clustering");

  BenchOptions bench;
  std::string bench_weights = "equal";
  int bench_scales = 5;
  auto* b = app.add_subcommand("bench", "Time one query against a random corpus");
  b->add_option("--corpus", bench.corpus, "Corpus size")->capture_default_str();
  b->add_option("--size", bench.size, "Image side length")->capture_default_str();
  b->add_option("--repeats", bench.repeats, "Timed repetitions")->capture_default_str();
  b->add_option("--seed", bench.seed, "Image seed")->capture_default_str();
  b->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  b->add_option("--scales", bench_scales, "MS-SSIM scale count")->capture_default_str();
  b->add_option("--weights", bench_weights, "MS-SSIM exponents")
      ->check(CLI::IsMember({"equal", "classic"}));
  bool no_serial = false;
  b->add_flag("--no-serial", no_serial, "Skip the single-worker comparison run");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInputError;
  }

  try {
    if (a->parsed()) {
      audit.jobs = jobs;
      if (!audit_out.empty()) audit.out = audit_out;
      if (!audit_csv.empty()) audit.csv = audit_csv;
      if (!audit_before.empty()) audit.before = audit_before;
      return cmd_audit(audit, out, err);
    }
    if (s->parsed()) {
      if (!score_out.empty()) score.out = score_out;
      cmd_score(score, out);
    } else if (c->parsed()) {
      cmd_cluster(cluster, out);
    } else if (b->parsed()) {
      bench.jobs = jobs;
      bench.compare_serial = !no_serial;
      ConfigOverrides o;
      o.scales = bench_scales;
      o.weights = bench_weights;
      bench.metric = resolve_config(o, {}).metric;
      cmd_bench(bench, out);
    }
    return kExitOk;
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << "\n";
    return kExitInputError;
  }
}

}  // namespace memaudit
