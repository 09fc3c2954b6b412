#pragma once

#include <string>
#include <vector>

#include "fgamcd/common.hpp"

namespace fgamcd::repo {

// Fine-grained component of an AI model (layer, block, adapter); the unit of
// caching and delivery. Ids are 1-based and contiguous.
struct ParameterBlock {
  int id = 0;
  double size_bytes = 0.0;
};

struct ModelSpec {
  int id = 0;
  std::vector<int> pb_ids;  // ordered, non-empty
};

struct Repository {
  std::vector<ModelSpec> models;
  std::vector<ParameterBlock> pbs;
  int base_count = 0;
  double reuse_ratio = 0.0;  // achieved shared-bytes / total-model-bytes

  int model_count() const { return static_cast<int>(models.size()); }
  int pb_count() const { return static_cast<int>(pbs.size()); }
  double pb_size(int pb_id) const { return pbs.at(pb_id - 1).size_bytes; }
  double model_bytes(int model_id) const;
  double total_model_bytes() const;   // sum over models, shared PBs counted per model
  double unique_bytes() const;        // each PB counted once
  bool model_contains(int model_id, int pb_id) const;
  // number of models containing each PB, indexed by pb_id-1
  std::vector<int> pb_multiplicity() const;
};

struct SizeDistribution {
  double min_bytes = 4.0 * 1024.0;
  double max_bytes = 25.0 * 1024.0 * 1024.0;
};

// Builds a repository of j_count models derived from base_count pre-trained
// bases. Models sharing a base share a common prefix of parameter blocks whose
// byte fraction approximates reuse_ratio from below (rounded down to a PB
// boundary); the achieved ratio is recorded on the result. PB sizes are drawn
// log-uniform over the configured range. Deterministic for a fixed rng state.
Repository synthesize_repository(int j_count, int base_count, double reuse_ratio,
                                 int pb_count_per_model, const SizeDistribution& sizes,
                                 RngStream& rng);

struct RequestProfile {
  std::vector<int> target_model;  // r_u, 1-based model ids
  std::vector<double> qos_bps;    // Q_u > 0
  double zipf_iota = 0.0;
};

// Zipf request-popularity weights over models 1..J: p_j = j^-iota / sum_i i^-iota.
std::vector<double> zipf_weights(int j_count, double iota);

RequestProfile sample_requests(const Repository& repo, int u_count, double iota,
                               double qos_lo, double qos_hi, RngStream& rng);

// Users u whose requested model contains the given PB.
std::vector<int> requesting_users(const Repository& repo, const RequestProfile& profile, int pb_id);

// Versioned structured-text (JSON) serialization: model list, PB table with
// sizes, and the shared-PB map.
std::string to_json(const Repository& repo);
Repository repository_from_json(const std::string& text);
void save_repository(const Repository& repo, const std::string& path);
Repository load_repository(const std::string& path);

}  // namespace fgamcd::repo
