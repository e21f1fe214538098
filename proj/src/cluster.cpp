#include "memaudit/cluster.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <unordered_map>
#include <unordered_set>
#include <utility>

#include "json.hpp"
#include "memaudit/error.hpp"

namespace memaudit {

namespace {

constexpr int kSchemaVersion = 1;

using Json = nlohmann::ordered_json;

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double t = a[i] - b[i];
    d += t * t;
  }
  return d;
}

// Uniform in [0, 1) from the top 53 bits; independent of the standard
// library's distribution implementations.
double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::size_t nearest(std::span<const double> x, const std::vector<std::vector<double>>& centroids,
                    double* dist) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = squared_distance(x, centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  *dist = best_d;
  return best;
}

std::vector<std::vector<double>> seed_plus_plus(const std::vector<std::vector<double>>& points,
                                                std::size_t k, std::mt19937_64& rng) {
  const std::size_t n = points.size();
  std::vector<std::vector<double>> centroids;
  centroids.reserve(k);
  auto pick_uniform = [&] {
    return std::min(n - 1, static_cast<std::size_t>(unit_uniform(rng) * static_cast<double>(n)));
  };
  centroids.push_back(points[pick_uniform()]);
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(points[i], centroids[0]);

  while (centroids.size() < k) {
    double total = 0.0;
    for (double d : d2) total += d;
    std::size_t chosen = 0;
    if (total > 0.0) {
      const double target = unit_uniform(rng) * total;
      double acc = 0.0;
      chosen = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (d2[i] > 0.0 && acc > target) {
          chosen = i;
          break;
        }
      }
      while (d2[chosen] == 0.0) --chosen;  // the tail guard above may land on a chosen point
    } else {
      chosen = pick_uniform();
    }
    centroids.push_back(points[chosen]);
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(points[i], centroids.back()));
    }
  }
  return centroids;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  return in;
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw InputError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void check_schema(const Json& doc, const std::filesystem::path& path) {
  if (!doc.is_object() || !doc.contains("schema_version")) {
    throw InputError(path.string() + ": missing schema_version");
  }
  if (doc["schema_version"] != kSchemaVersion) {
    throw InputError(path.string() + ": unsupported schema_version " +
                     doc["schema_version"].dump());
  }
}

Json neuron_array(const std::set<NeuronId>& ids) {
  Json arr = Json::array();
  for (NeuronId id : ids) arr.push_back(id);
  return arr;
}

std::set<NeuronId> parse_neuron_array(const Json& arr, const std::string& where) {
  if (!arr.is_array()) throw InputError(where + ": neurons must be an array");
  std::set<NeuronId> out;
  for (const auto& v : arr) {
    if (v.is_number_unsigned()) {
      out.insert(v.get<NeuronId>());
    } else if (v.is_string()) {
      out.insert(parse_neuron_id(v.get<std::string>()));
    } else {
      throw InputError(where + ": neuron ids must be unsigned integers or \"layer:index\"");
    }
  }
  return out;
}

}  // namespace

std::size_t ClusterAssignment::cluster_for(const std::string& prompt_id) const {
  const auto it = std::find(prompt_ids.begin(), prompt_ids.end(), prompt_id);
  if (it == prompt_ids.end()) throw InputError("prompt '" + prompt_id + "' has no cluster");
  return cluster_of[static_cast<std::size_t>(it - prompt_ids.begin())];
}

ClusterAssignment cluster_prompts(std::span<const PromptEmbedding> embeddings, std::size_t k,
                                  const KMeansOptions& options) {
  const std::size_t n = embeddings.size();
  if (k == 0) throw InvalidArgument("k must be positive");
  if (k > n) {
    throw InvalidArgument("k = " + std::to_string(k) + " exceeds the " + std::to_string(n) +
                          " prompts");
  }
  const std::size_t dim = embeddings[0].vector.size();
  if (dim == 0) throw InvalidArgument("embeddings must have at least one dimension");

  std::vector<std::vector<double>> points;
  points.reserve(n);
  for (const auto& e : embeddings) {
    if (e.vector.size() != dim) {
      throw InvalidArgument("embedding for '" + e.prompt_id + "' has dimension " +
                            std::to_string(e.vector.size()) + ", expected " +
                            std::to_string(dim));
    }
    for (double v : e.vector) {
      if (!std::isfinite(v)) {
        throw InvalidArgument("embedding for '" + e.prompt_id + "' has a non-finite value");
      }
    }
    points.push_back(e.vector);
    if (options.normalize) {
      double norm = 0.0;
      for (double v : points.back()) norm += v * v;
      norm = std::sqrt(norm);
      if (norm > 0.0) {
        for (double& v : points.back()) v /= norm;
      }
    }
  }

  std::mt19937_64 rng(options.seed);
  ClusterAssignment out;
  out.k = k;
  for (const auto& e : embeddings) out.prompt_ids.push_back(e.prompt_id);
  out.centroids = seed_plus_plus(points, k, rng);
  out.cluster_of.assign(n, 0);
  std::vector<double> dist(n);

  auto assign = [&] {
    double objective = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      out.cluster_of[i] = nearest(points[i], out.centroids, &dist[i]);
      objective += dist[i];
    }
    out.objective_trace.push_back(objective);
  };

  for (int it = 0; it < options.max_iterations; ++it) {
    assign();
    out.iterations = it + 1;

    std::vector<std::vector<double>> next(k, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[out.cluster_of[i]];
      for (std::size_t d = 0; d < dim; ++d) next[out.cluster_of[i]][d] += points[i][d];
    }
    std::vector<std::uint8_t> taken(n, 0);
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        // Reseed an empty cluster with the point farthest from its centroid.
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
          if (!taken[i] && counts[out.cluster_of[i]] > 1 && dist[i] > far_d) {
            far_d = dist[i];
            far = i;
          }
        }
        taken[far] = 1;
        next[c] = points[far];
        continue;
      }
      for (double& v : next[c]) v /= static_cast<double>(counts[c]);
    }

    double shift = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      shift = std::max(shift, std::sqrt(squared_distance(next[c], out.centroids[c])));
    }
    out.centroids = std::move(next);
    if (shift < options.tolerance) break;
  }
  assign();
  return out;
}

std::vector<MitigationPlan> aggregate_neurons(const ClusterAssignment& assignment,
                                              std::span<const NeuronSet> sets, double alpha_damp) {
  if (!(alpha_damp >= 0.0 && alpha_damp <= 1.0)) {
    throw InvalidArgument("alpha_damp must lie in [0, 1]");
  }
  std::unordered_map<std::string, std::size_t> cluster;
  for (std::size_t i = 0; i < assignment.prompt_ids.size(); ++i) {
    cluster.emplace(assignment.prompt_ids[i], assignment.cluster_of[i]);
  }
  std::vector<MitigationPlan> plans(assignment.k);
  for (std::size_t c = 0; c < plans.size(); ++c) {
    plans[c].cluster_id = c;
    plans[c].alpha_damp = alpha_damp;
  }
  for (std::size_t i = 0; i < assignment.prompt_ids.size(); ++i) {
    plans[assignment.cluster_of[i]].members.push_back(assignment.prompt_ids[i]);
  }
  for (const auto& s : sets) {
    const auto it = cluster.find(s.prompt_id);
    if (it == cluster.end()) {
      throw InputError("neuron set for prompt '" + s.prompt_id + "' has no cluster assignment");
    }
    plans[it->second].union_neurons.insert(s.neurons.begin(), s.neurons.end());
  }
  for (auto& p : plans) std::sort(p.members.begin(), p.members.end());
  return plans;
}

void export_plan(std::span<const MitigationPlan> plans, const std::filesystem::path& path) {
  Json doc;
  doc["schema_version"] = kSchemaVersion;
  Json plan_arr = Json::array();
  Json prompts = Json::object();
  for (const auto& p : plans) {
    Json members = Json::array();
    for (const auto& m : p.members) members.push_back(m);
    plan_arr.push_back({{"cluster_id", p.cluster_id},
                        {"alpha_damp", p.alpha_damp},
                        {"members", members},
                        {"neurons", neuron_array(p.union_neurons)}});
    for (const auto& m : p.members) {
      prompts[m] = {{"cluster_id", p.cluster_id},
                    {"alpha_damp", p.alpha_damp},
                    {"neurons", neuron_array(p.union_neurons)}};
    }
  }
  doc["plans"] = std::move(plan_arr);
  doc["prompts"] = std::move(prompts);

  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw InputError("write failed: " + path.string());
}

std::vector<MitigationPlan> import_plan(const std::filesystem::path& path) {
  const Json doc = read_json(path);
  check_schema(doc, path);
  if (!doc.contains("plans") || !doc["plans"].is_array()) {
    throw InputError(path.string() + ": missing plans array");
  }
  std::vector<MitigationPlan> plans;
  try {
    for (const auto& p : doc["plans"]) {
      MitigationPlan plan;
      plan.cluster_id = p.at("cluster_id").get<std::size_t>();
      plan.alpha_damp = p.at("alpha_damp").get<double>();
      plan.members = p.at("members").get<std::vector<std::string>>();
      plan.union_neurons = parse_neuron_array(p.at("neurons"), path.string());
      plans.push_back(std::move(plan));
    }
  } catch (const Json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  return plans;
}

std::vector<PromptEmbedding> read_embeddings_csv(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  std::vector<PromptEmbedding> out;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  bool header_allowed = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;

    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() < 2) {
      throw InputError(path.string() + ":" + std::to_string(line_no) +
                       ": expected prompt_id followed by values");
    }
    PromptEmbedding e;
    e.prompt_id = fields[0];
    bool numeric = true;
    for (std::size_t i = 1; i < fields.size(); ++i) {
      const std::string& f = fields[i];
      const auto first = f.find_first_not_of(' ');
      const auto last = f.find_last_not_of(' ');
      double v = 0.0;
      const char* begin = first == std::string::npos ? f.data() + f.size() : f.data() + first;
      const char* end = last == std::string::npos ? begin : f.data() + last + 1;
      const auto [ptr, ec] = std::from_chars(begin, end, v);
      if (ec != std::errc() || ptr != end || begin == end) {
        numeric = false;
        break;
      }
      e.vector.push_back(v);
    }
    const bool first_line = std::exchange(header_allowed, false);
    if (!numeric) {
      if (first_line) continue;
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": non-numeric value");
    }
    if (!seen.insert(e.prompt_id).second) {
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": duplicate prompt '" +
                       e.prompt_id + "'");
    }
    out.push_back(std::move(e));
  }
  if (out.empty()) throw InputError(path.string() + ": no embeddings");
  return out;
}

NeuronId parse_neuron_id(const std::string& text) {
  auto parse_u = [&](std::string_view s, std::uint64_t limit) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty() || v > limit) {
      throw InputError("invalid neuron id '" + text + "'");
    }
    return v;
  };
  const auto colon = text.find(':');
  if (colon == std::string::npos) {
    return parse_u(text, std::numeric_limits<std::uint64_t>::max());
  }
  const std::string_view sv(text);
  const std::uint64_t layer = parse_u(sv.substr(0, colon), 0xFFFFFFFFu);
  const std::uint64_t index = parse_u(sv.substr(colon + 1), 0xFFFFFFFFu);
  return (layer << 32) | index;
}

std::vector<NeuronSet> read_neuron_sets(const std::filesystem::path& path) {
  const Json doc = read_json(path);
  check_schema(doc, path);
  if (!doc.contains("neuron_sets") || !doc["neuron_sets"].is_array()) {
    throw InputError(path.string() + ": missing neuron_sets array");
  }
  std::vector<NeuronSet> out;
  std::unordered_set<std::string> seen;
  try {
    for (const auto& s : doc["neuron_sets"]) {
      NeuronSet set;
      set.prompt_id = s.at("prompt_id").get<std::string>();
      if (!seen.insert(set.prompt_id).second) {
        throw InputError(path.string() + ": duplicate neuron set for '" + set.prompt_id + "'");
      }
      set.neurons = parse_neuron_array(s.at("neurons"), path.string());
      out.push_back(std::move(set));
    }
  } catch (const Json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  return out;
}

}  // namespace memaudit
