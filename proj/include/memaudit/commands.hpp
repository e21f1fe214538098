#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>

#include "memaudit/report.hpp"

namespace memaudit {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInputError = 2;
inline constexpr int kExitPartialFailure = 3;

struct AuditOptions {
  std::filesystem::path manifest;
  std::optional<std::filesystem::path> out;  // report JSON; stdout when absent
  std::optional<std::filesystem::path> csv;  // defaults to the JSON path with .csv
  std::optional<std::filesystem::path> before;
  ConfigOverrides overrides;
  int jobs = 0;
};

// Returns kExitOk, or kExitPartialFailure when some generations failed.
int cmd_audit(const AuditOptions& options, std::ostream& out, std::ostream& err);

struct ScoreOptions {
  std::filesystem::path before;
  std::filesystem::path after;
  std::optional<std::filesystem::path> out;
};

MitigationSummary cmd_score(const ScoreOptions& options, std::ostream& out);

struct ClusterOptions {
  std::filesystem::path embeddings;
  std::filesystem::path neuron_sets;
  std::filesystem::path out;
  std::size_t k = 12;
  double alpha_damp = 0.0;
  std::uint64_t seed = 0;
  bool cosine = false;
};

void cmd_cluster(const ClusterOptions& options, std::ostream& out);

struct BenchOptions {
  std::size_t corpus = 500;
  std::size_t size = 512;
  int jobs = 0;
  int repeats = 3;
  std::uint64_t seed = 0;
  bool compare_serial = true;  // also time jobs = 1 and check for identical scores
  MsSsimParams metric;
};

struct BenchResult {
  std::size_t pairs = 0;
  int jobs = 0;
  double median_seconds = 0.0;
  double pairs_per_second = 0.0;
  std::optional<double> serial_median_seconds;
  std::optional<double> speedup;
  std::optional<bool> identical;
};

// One random query against `corpus` random images of size x size, repeated
// and reduced to the median wall time.
BenchResult run_bench(const BenchOptions& options);

void cmd_bench(const BenchOptions& options, std::ostream& out);

// Parses argv and dispatches to a subcommand. Returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace memaudit
