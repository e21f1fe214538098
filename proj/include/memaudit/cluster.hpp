#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace memaudit {

struct PromptEmbedding {
  std::string prompt_id;
  std::vector<double> vector;
};

struct KMeansOptions {
  std::uint64_t seed = 0;
  int max_iterations = 300;
  double tolerance = 1e-6;  // stop once no centroid moves farther than this
  bool normalize = false;   // L2-normalize first (Euclidean then orders like cosine)
};

struct ClusterAssignment {
  std::size_t k = 0;
  std::vector<std::string> prompt_ids;     // input order
  std::vector<std::size_t> cluster_of;     // parallel to prompt_ids, in [0, k)
  std::vector<std::vector<double>> centroids;
  std::vector<double> objective_trace;     // sum of squared distances after each assignment
  int iterations = 0;

  // Throws InputError for an unknown prompt.
  std::size_t cluster_for(const std::string& prompt_id) const;
};

// Lloyd's k-means with k-means++ seeding. Deterministic for a given seed and
// input order. Throws InvalidArgument when k is 0 or exceeds the prompt count,
// dimensions disagree, or a value is not finite.
ClusterAssignment cluster_prompts(std::span<const PromptEmbedding> embeddings, std::size_t k,
                                  const KMeansOptions& options = {});

// Neuron identifiers are opaque. The "layer:index" text form packs into
// (layer << 32) | index.
using NeuronId = std::uint64_t;

struct NeuronSet {
  std::string prompt_id;
  std::set<NeuronId> neurons;
};

struct MitigationPlan {
  std::size_t cluster_id = 0;
  std::vector<std::string> members;  // sorted
  std::set<NeuronId> union_neurons;
  double alpha_damp = 0.0;  // 0 deactivates the neurons outright

  friend bool operator==(const MitigationPlan&, const MitigationPlan&) = default;
};

// One plan per cluster holding the union of its members' neuron sets.
// Prompts without a neuron set still join their cluster's member list.
std::vector<MitigationPlan> aggregate_neurons(const ClusterAssignment& assignment,
                                              std::span<const NeuronSet> sets, double alpha_damp);

void export_plan(std::span<const MitigationPlan> plans, const std::filesystem::path& path);
std::vector<MitigationPlan> import_plan(const std::filesystem::path& path);

// `prompt_id,v1,...,vD` per line. Blank lines and '#' comments are skipped; a
// first line whose second field is not numeric is treated as a header.
std::vector<PromptEmbedding> read_embeddings_csv(const std::filesystem::path& path);

// {"schema_version": 1, "neuron_sets": [{"prompt_id": ..., "neurons": [...]}]}
// where each neuron is an unsigned integer or a "layer:index" string.
std::vector<NeuronSet> read_neuron_sets(const std::filesystem::path& path);

NeuronId parse_neuron_id(const std::string& text);

}  // namespace memaudit
