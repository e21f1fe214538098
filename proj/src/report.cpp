#include "memaudit/report.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <utility>
#include <variant>

#include <fmt/format.h>

#include "json.hpp"
#include "memaudit/codec.hpp"
#include "memaudit/error.hpp"
#include "memaudit/parallel.hpp"

namespace memaudit {

namespace {

using Json = nlohmann::ordered_json;

constexpr int kManifestSchemaVersion = 1;

MsSsimParams make_metric(int scales, const std::string& weights) {
  if (scales < 1) throw InputError("scales must be >= 1");
  if (weights == "equal") return MsSsimParams::equal(scales);
  if (weights == "classic") {
    const MsSsimParams full = MsSsimParams::classic();
    if (scales == full.num_scales) return full;
    if (scales > full.num_scales) throw InputError("classic weights define at most 5 scales");
    std::vector<ScaleWeight> w = full.effective_weights(scales);
    return MsSsimParams::custom(std::move(w));
  }
  throw InputError("unknown weight mode '" + weights + "' (expected equal or classic)");
}

std::string weight_mode_name(const MsSsimParams& p) {
  return p.weight_mode == WeightMode::kEqual ? "equal" : "custom";
}

Json number_or_null(const std::optional<double>& v) {
  return v ? Json(round6(*v)) : Json(nullptr);
}

Json class_counts_json(const ClassCounts& counts) {
  Json out = Json::object();
  for (MemClass c : kAllMemClasses) out[std::string(to_string(c))] = counts[class_index(c)];
  return out;
}

Json config_json(const FbMemConfig& cfg) {
  Json exps = Json::array();
  for (const auto& w : cfg.metric.weights) {
    exps.push_back({{"luminance", round6(w.luminance)},
                    {"contrast", round6(w.contrast)},
                    {"structure", round6(w.structure)}});
  }
  const SsimParams& b = cfg.metric.base;
  return {{"tau_full", round6(cfg.tau_full)},
          {"tau_part", round6(cfg.tau_part)},
          {"beta", round6(cfg.beta)},
          {"scales", cfg.metric.num_scales},
          {"weights", weight_mode_name(cfg.metric)},
          {"scale_weights", std::move(exps)},
          {"window_size", b.window_size},
          {"window_sigma", round6(b.window_sigma)},
          {"k1", round6(b.k1)},
          {"k2", round6(b.k2)},
          {"dynamic_range", round6(b.dynamic_range)}};
}

Json mitigation_to_json(const MitigationSummary& m) {
  Json matrix = Json::object();
  for (MemClass from : kAllMemClasses) {
    Json row = Json::object();
    for (MemClass to : kAllMemClasses) {
      row[std::string(to_string(to))] = m.transitions[class_index(from)][class_index(to)];
    }
    matrix[std::string(to_string(from))] = std::move(row);
  }
  return {{"pairs", m.pairs}, {"score", round6(m.score)}, {"transitions", std::move(matrix)}};
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string fixed6(double x) { return fmt::format("{:.6f}", round6(x)); }

ConfigOverrides parse_config_block(const Json& block, const std::string& where) {
  ConfigOverrides c;
  if (!block.is_object()) throw InputError(where + ": config must be an object");
  try {
    if (block.contains("tau_full")) c.tau_full = block["tau_full"].get<double>();
    if (block.contains("tau_part")) c.tau_part = block["tau_part"].get<double>();
    if (block.contains("beta")) c.beta = block["beta"].get<double>();
    if (block.contains("scales")) c.scales = block["scales"].get<int>();
    if (block.contains("weights")) c.weights = block["weights"].get<std::string>();
  } catch (const Json::exception& e) {
    throw InputError(where + ": config: " + e.what());
  }
  return c;
}

std::filesystem::path resolve_existing(const std::filesystem::path& base, const Json& value,
                                       const std::string& what) {
  if (!value.is_string()) throw InputError(what + ": path must be a string");
  std::filesystem::path p(value.get<std::string>());
  if (p.is_relative()) p = base / p;
  if (!std::filesystem::is_regular_file(p)) throw InputError(what + ": file not found: " + p.string());
  return p;
}

}  // namespace

double round6(double x) { return std::round(x * 1e6) / 1e6; }

FbMemConfig resolve_config(const ConfigOverrides& flags, const ConfigOverrides& manifest) {
  FbMemConfig cfg;
  auto pick = [](const auto& flag, const auto& file, auto fallback) {
    return flag ? *flag : (file ? *file : fallback);
  };
  cfg.tau_full = pick(flags.tau_full, manifest.tau_full, cfg.tau_full);
  cfg.tau_part = pick(flags.tau_part, manifest.tau_part, cfg.tau_part);
  cfg.beta = pick(flags.beta, manifest.beta, cfg.beta);
  const int scales = pick(flags.scales, manifest.scales, cfg.metric.num_scales);
  const std::string weights = pick(flags.weights, manifest.weights, std::string("equal"));
  try {
    cfg.metric = make_metric(scales, weights);
    cfg.validate();
  } catch (const InvalidArgument& e) {
    throw InputError(std::string("invalid configuration: ") + e.what());
  }
  return cfg;
}

AuditManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open manifest " + path.string());
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw InputError("malformed manifest " + path.string() + ": " + e.what());
  }
  if (!doc.is_object() || doc.value("schema_version", 0) != kManifestSchemaVersion) {
    throw InputError(path.string() + ": expected schema_version " +
                     std::to_string(kManifestSchemaVersion));
  }
  const std::filesystem::path base = path.parent_path();
  AuditManifest m;
  try {
    std::set<std::string> ids;
    for (const auto& c : doc.at("corpus")) {
      CorpusItem item;
      item.id = c.at("id").get<std::string>();
      if (!ids.insert(item.id).second) throw InputError("duplicate corpus id '" + item.id + "'");
      item.image = resolve_existing(base, c.at("image"), "corpus '" + item.id + "'");
      if (c.contains("mask") && !c["mask"].is_null()) {
        item.mask = resolve_existing(base, c["mask"], "corpus '" + item.id + "' mask");
      }
      m.corpus.push_back(std::move(item));
    }
    std::set<std::pair<std::string, int>> keys;
    for (const auto& g : doc.at("generations")) {
      GenerationRecord rec;
      rec.prompt_id = g.at("prompt_id").get<std::string>();
      rec.generation_index = g.at("generation_index").get<int>();
      const std::string where =
          "generation '" + rec.prompt_id + "'/" + std::to_string(rec.generation_index);
      if (rec.generation_index < 0) throw InputError(where + ": negative generation_index");
      if (!keys.emplace(rec.prompt_id, rec.generation_index).second) {
        throw InputError(where + ": duplicate (prompt_id, generation_index)");
      }
      rec.image_ref = resolve_existing(base, g.at("image"), where);
      if (g.contains("mask") && !g["mask"].is_null()) {
        rec.mask_ref = resolve_existing(base, g["mask"], where + " mask");
      }
      m.generations.push_back(std::move(rec));
    }
    if (doc.contains("config")) m.config = parse_config_block(doc["config"], path.string());
  } catch (const Json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  if (m.corpus.empty()) throw InputError(path.string() + ": corpus is empty");
  return m;
}

AuditReport run_audit(const AuditManifest& manifest, const FbMemConfig& config, int jobs) {
  config.validate();
  AuditReport report;
  report.config = config;

  std::vector<std::optional<CorpusEntry>> loaded(manifest.corpus.size());
  parallel_for(manifest.corpus.size(), jobs, [&](std::size_t i) {
    const CorpusItem& item = manifest.corpus[i];
    CorpusEntry e{item.id, load_image(item.image), std::nullopt};
    if (item.mask) e.mask = load_mask(*item.mask);
    loaded[i] = std::move(e);
  });
  std::vector<CorpusEntry> corpus;
  corpus.reserve(loaded.size());
  for (auto& e : loaded) corpus.push_back(std::move(*e));
  loaded.clear();

  const std::size_t n = manifest.generations.size();
  using Outcome = std::variant<std::monostate, MatchRecord, ImageFailure>;
  std::vector<Outcome> outcomes(n);
  std::vector<ImageInfo> info(n);
  auto fail = [&](std::size_t i, const std::string& msg) {
    const auto& g = manifest.generations[i];
    outcomes[i] = ImageFailure{g.prompt_id, g.generation_index, msg};
  };

  std::map<std::pair<std::size_t, std::size_t>, std::unique_ptr<PreparedCorpus>> prepared;
  for (std::size_t i = 0; i < n; ++i) {
    try {
      info[i] = probe_image(manifest.generations[i].image_ref);
      prepared.emplace(std::pair{info[i].width, info[i].height}, nullptr);
    } catch (const std::exception& e) {
      fail(i, e.what());
    }
  }
  // A resolution the metric cannot handle fails only the generations using it.
  std::map<std::pair<std::size_t, std::size_t>, std::string> unusable;
  for (auto& [dims, slot] : prepared) {
    try {
      slot = std::make_unique<PreparedCorpus>(corpus, dims.first, dims.second, config.metric, jobs);
    } catch (const InvalidArgument& e) {
      unusable.emplace(dims, e.what());
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::holds_alternative<std::monostate>(outcomes[i])) continue;
    const auto it = unusable.find({info[i].width, info[i].height});
    if (it != unusable.end()) fail(i, it->second);
  }

  std::vector<std::uint64_t> comparisons(n, 0);
  parallel_for(n, jobs, [&](std::size_t i) {
    if (!std::holds_alternative<std::monostate>(outcomes[i])) return;
    const GenerationRecord& g = manifest.generations[i];
    try {
      const PixelImage img = load_image(g.image_ref);
      std::optional<BinaryMask> mask;
      if (g.mask_ref) mask = resize(load_mask(*g.mask_ref), img.width(), img.height());
      const PreparedCorpus& pc = *prepared.at({img.width(), img.height()});
      MatchRecord rec = best_match(pc, img, mask, config, &comparisons[i]);
      rec.prompt_id = g.prompt_id;
      rec.generation_index = g.generation_index;
      outcomes[i] = std::move(rec);
    } catch (const std::exception& e) {
      fail(i, e.what());
    }
  });

  for (std::size_t i = 0; i < n; ++i) {
    report.comparisons += comparisons[i];
    if (auto* rec = std::get_if<MatchRecord>(&outcomes[i])) {
      report.records.push_back(std::move(*rec));
    } else {
      report.failures.push_back(std::get<ImageFailure>(std::move(outcomes[i])));
    }
  }
  summarize(report);
  return report;
}

void summarize(AuditReport& report) {
  report.prompts = one_to_many(report.records);
  report.histogram = one_to_many_histogram(report.prompts);
  report.distribution = {};
  for (const auto& r : report.records) ++report.distribution[class_index(r.mem_class)];
}

std::string report_json(const AuditReport& report) {
  Json doc;
  doc["schema_version"] = kReportSchemaVersion;
  doc["tool"] = {{"name", kToolName}, {"version", kToolVersion}};
  doc["config"] = config_json(report.config);
  doc["comparisons"] = report.comparisons;

  Json records = Json::array();
  for (const auto& r : report.records) {
    records.push_back({{"prompt_id", r.prompt_id},
                       {"generation_index", r.generation_index},
                       {"best_train_id", r.best_train_id},
                       {"m_full", round6(r.scores.m_full)},
                       {"m_fg", number_or_null(r.scores.m_fg)},
                       {"m_bg", number_or_null(r.scores.m_bg)},
                       {"class", to_string(r.mem_class)},
                       {"mask_absent", r.mask_absent}});
  }
  doc["records"] = std::move(records);

  Json failures = Json::array();
  for (const auto& f : report.failures) {
    failures.push_back(
        {{"prompt_id", f.prompt_id}, {"generation_index", f.generation_index}, {"error", f.error}});
  }
  doc["failures"] = std::move(failures);

  Json prompts = Json::array();
  for (const auto& s : report.prompts) {
    prompts.push_back({{"prompt_id", s.prompt_id},
                       {"generations", s.generations},
                       {"memorized", s.memorized},
                       {"distinct_match_count", s.distinct_match_count},
                       {"class_counts", class_counts_json(s.class_counts)}});
  }
  doc["prompts"] = std::move(prompts);

  Json histogram = Json::array();
  for (const auto& b : report.histogram) {
    histogram.push_back({{"distinct_match_count", b.distinct_match_count},
                         {"prompts", b.prompts},
                         {"VM", b.vm},
                         {"FM", b.fm},
                         {"BM", b.bm}});
  }
  doc["one_to_many_histogram"] = std::move(histogram);
  doc["class_distribution"] = class_counts_json(report.distribution);
  if (report.mitigation) doc["mitigation"] = mitigation_to_json(*report.mitigation);
  return doc.dump(2) + "\n";
}

std::string report_csv(const AuditReport& report) {
  std::string out = "prompt_id,generation_index,best_train_id,m_full,m_fg,m_bg,class,mask_absent\n";
  for (const auto& r : report.records) {
    out += fmt::format("{},{},{},{},{},{},{},{}\n", csv_field(r.prompt_id), r.generation_index,
                       csv_field(r.best_train_id), fixed6(r.scores.m_full),
                       r.scores.m_fg ? fixed6(*r.scores.m_fg) : "",
                       r.scores.m_bg ? fixed6(*r.scores.m_bg) : "", to_string(r.mem_class),
                       r.mask_absent ? "true" : "false");
  }
  return out;
}

std::vector<MatchRecord> read_report_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open report " + path.string());
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw InputError("malformed report " + path.string() + ": " + e.what());
  }
  if (!doc.is_object() || doc.value("schema_version", 0) != kReportSchemaVersion) {
    throw InputError(path.string() + ": expected report schema_version " +
                     std::to_string(kReportSchemaVersion));
  }
  std::vector<MatchRecord> out;
  try {
    for (const auto& r : doc.at("records")) {
      MatchRecord rec;
      rec.prompt_id = r.at("prompt_id").get<std::string>();
      rec.generation_index = r.at("generation_index").get<int>();
      rec.best_train_id = r.at("best_train_id").get<std::string>();
      rec.scores.m_full = r.at("m_full").get<double>();
      if (r.contains("m_fg") && !r["m_fg"].is_null()) rec.scores.m_fg = r["m_fg"].get<double>();
      if (r.contains("m_bg") && !r["m_bg"].is_null()) rec.scores.m_bg = r["m_bg"].get<double>();
      rec.mem_class = parse_mem_class(r.at("class").get<std::string>());
      rec.mask_absent = r.value("mask_absent", false);
      out.push_back(std::move(rec));
    }
  } catch (const Json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  return out;
}

std::string mitigation_json(const MitigationSummary& summary) {
  Json doc;
  doc["schema_version"] = kReportSchemaVersion;
  doc["tool"] = {{"name", kToolName}, {"version", kToolVersion}};
  doc["mitigation"] = mitigation_to_json(summary);
  return doc.dump(2) + "\n";
}

}  // namespace memaudit
