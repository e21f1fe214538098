#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "memaudit/audit.hpp"
#include "memaudit/fbmem.hpp"

namespace memaudit {

inline constexpr std::string_view kToolName = "memaudit";
inline constexpr std::string_view kToolVersion = "0.1.0";
inline constexpr int kReportSchemaVersion = 1;

// Optional settings from a manifest config block or CLI flags.
struct ConfigOverrides {
  std::optional<double> tau_full;
  std::optional<double> tau_part;
  std::optional<double> beta;
  std::optional<int> scales;
  std::optional<std::string> weights;  // "equal" or "classic"
};

// flags > manifest > defaults. Throws InputError on invalid values.
FbMemConfig resolve_config(const ConfigOverrides& flags, const ConfigOverrides& manifest);

struct CorpusItem {
  std::string id;
  std::filesystem::path image;
  std::optional<std::filesystem::path> mask;
};

struct AuditManifest {
  std::vector<CorpusItem> corpus;
  std::vector<GenerationRecord> generations;
  ConfigOverrides config;
};

// Relative paths resolve against the manifest's directory. Checks schema,
// unique ids and keys, and that every referenced file exists.
AuditManifest load_manifest(const std::filesystem::path& path);

struct ImageFailure {
  std::string prompt_id;
  int generation_index = 0;
  std::string error;
};

struct AuditReport {
  FbMemConfig config;
  std::uint64_t comparisons = 0;  // full-frame corpus comparisons performed
  std::vector<MatchRecord> records;
  std::vector<ImageFailure> failures;
  std::vector<OneToManyStats> prompts;
  std::vector<OneToManyBin> histogram;
  ClassCounts distribution{};
  std::optional<MitigationSummary> mitigation;
};

// Corpus entries are loaded eagerly (InputError on failure); each generation
// is processed independently and failures are collected per image.
AuditReport run_audit(const AuditManifest& manifest, const FbMemConfig& config, int jobs);

// Fills prompts, histogram and distribution from records.
void summarize(AuditReport& report);

std::string report_json(const AuditReport& report);
std::string report_csv(const AuditReport& report);

// Reads back the per-image records of a report JSON.
std::vector<MatchRecord> read_report_records(const std::filesystem::path& path);

std::string mitigation_json(const MitigationSummary& summary);

// Values as serialized: rounded to 6 decimal places.
double round6(double x);

}  // namespace memaudit
