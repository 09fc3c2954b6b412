#pragma once

#include <vector>

#include "fgamcd/nn.hpp"

namespace fgamcd::marl {

using Eigen::VectorXd;
using nn::Mlp;

// Differentiable binary relaxation: Sigmoid((logit + ln u - ln(1-u)) / temp).
double gumbel_binary(double logit, double noise_u, double temperature);
double gumbel_binary_dlogit(double logit, double noise_u, double temperature);

// Observation slices for one agent: the leading own part and one span per
// other agent in node order.
struct ObsLayout {
  int own_len = 0;
  std::vector<std::pair<int, int>> other_spans;  // (offset, length) into o_n
  int total = 0;
  int users_own = 0;  // number of associated users (for mask reconstruction)
};

// Capacity mask recovered from a normalized observation: remaining storage
// (relative to capacity) must cover the PB size (relative to the largest PB).
bool capacity_mask_from_obs(const VectorXd& obs, const ObsLayout& layout, double node_capacity,
                            double max_pb_bytes);

struct ActorNoise {
  double a = 0.5;  // 0.5 = noise-free
  VectorXd b;
};

// Actor with one sub-module per influenced agent: embeddings combine by inner
// product to produce the migration logits; a plain single-network variant
// backs the ablation arm.
struct ActorParams {
  bool action_semantics = true;
  Mlp embed;                // o_n -> embedding
  Mlp logit;                // o_n -> 1 (semantics) or o_n -> N (plain)
  std::vector<Mlp> others;  // per other agent: span -> embedding

  int param_count() const;
  VectorXd flatten() const;
  void unflatten(const VectorXd& flat);
  ActorParams zeros_like() const;
  void add_scaled(const ActorParams& other, double s);
};

ActorParams make_actor(const ObsLayout& layout, int other_count, int embed_dim, int hidden,
                       bool action_semantics, RngStream& rng);

struct ActorCache {
  Mlp::Cache embed_cache, logit_cache;
  std::vector<Mlp::Cache> other_caches;
  VectorXd e_own;
  std::vector<VectorXd> e_other;
  VectorXd logits;  // pre-relaxation value per action dim
  VectorXd action;
  ActorNoise noise;
  double temp = 1.0;
  bool mask_cap = true;
  bool mask_b = true;
};

// action = [a, b_m...]; the capacity mask forces a to zero and a zero-rounded
// a forces every migration output to zero.
VectorXd actor_forward(const ActorParams& params, const ObsLayout& layout, const VectorXd& obs,
                       const ActorNoise& noise, double temperature, bool capacity_ok,
                       ActorCache* cache = nullptr);

// dL/daction -> parameter gradients (masks treated as constants)
void actor_backward(const ActorParams& params, const ObsLayout& layout, const ActorCache& cache,
                    const VectorXd& daction, ActorParams& grads);

// State-conditioned monotone mixing: absolute-activated hypernetworks emit
// nonnegative layer weights, guaranteeing dQtot/dQ_n >= 0.
struct MixingParams {
  int agents = 0;
  int hidden = 0;
  Mlp hyper_w1;  // s -> agents*hidden
  Mlp hyper_b1;  // s -> hidden
  Mlp hyper_w2;  // s -> hidden
  Mlp hyper_b2;  // s -> 1

  int param_count() const;
  VectorXd flatten() const;
  void unflatten(const VectorXd& flat);
  MixingParams zeros_like() const;
  void add_scaled(const MixingParams& other, double s);
};

MixingParams make_mixing(int agents, int state_dim, int hidden, RngStream& rng);

struct MixingCache {
  Mlp::Cache w1_cache, b1_cache, w2_cache, b2_cache;
  VectorXd w1_raw, b1, w2_raw;
  VectorXd q;
  VectorXd pre1, h1;
  double b2 = 0.0;
};

double mixing_forward(const MixingParams& params, const VectorXd& state, const VectorXd& q,
                      MixingCache* cache = nullptr);

// returns dL/dq; accumulates hypernetwork gradients
VectorXd mixing_backward(const MixingParams& params, const MixingCache& cache, double dqtot,
                         MixingParams& grads);

struct ExperienceTuple {
  VectorXd s, d;
  double r = 0.0;
  VectorXd s_next;
  bool terminal = false;
  bool synthetic = false;
  VectorXd reservoir;  // ESN state preceding (s, d); empty for synthetic tuples
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {}
  void push(ExperienceTuple tuple);
  std::size_t size() const { return items_.size(); }
  const ExperienceTuple& at(std::size_t i) const { return items_[i]; }
  const ExperienceTuple& sample(RngStream& rng) const;
  // uniform over tuples carrying a reservoir state
  const ExperienceTuple* sample_real(RngStream& rng) const;

 private:
  std::size_t capacity_ = 0;
  std::size_t next_ = 0;
  std::vector<ExperienceTuple> items_;
  std::vector<std::size_t> real_indices_;
  void rebuild_real_index();
};

}  // namespace fgamcd::marl
