#pragma once

#include <memory>
#include <string>

#include "fgamcd/trainer.hpp"

namespace fgamcd::baselines {

using Eigen::VectorXd;

enum class PolicyKind {
  maasn_da,
  qmix_da,
  no_action_semantics,
  no_value_decomp,
  no_augmentation,
  rnn_augmentation,
  trimcaching_greedy,
  no_cooperation,
  tdma_unicast,
  coarse_grained,
  full_comp,
  hybrid_multicast
};

PolicyKind policy_from_name(const std::string& name);
std::string policy_name(PolicyKind kind);

// Byte-weighted request coverage: a requested PB counts as hit when some node
// visible from the requester's associated node (or that node itself) caches it.
double hit_ratio(const repo::Repository& repo, const repo::RequestProfile& profile,
                 const env::Topology& topo, const Eigen::MatrixXi& caching);

// Greedy hit-ratio-per-byte caching; fills storage until nothing fits.
Eigen::MatrixXi trimcaching_caching(const repo::Repository& repo,
                                    const repo::RequestProfile& profile,
                                    const env::Topology& topo, const Eigen::VectorXd& capacity);

// Local-popularity-per-byte caching for the no-cooperation arm.
Eigen::MatrixXi local_popularity_caching(const repo::Repository& repo,
                                         const repo::RequestProfile& profile,
                                         const env::Topology& topo,
                                         const Eigen::VectorXd& capacity);

// Whole-model caching view: every model owns private copies of its PBs, so
// shared blocks are duplicated in storage and delivery.
struct CoarseExpansion {
  repo::Repository repo;
  std::vector<int> model_of_pb;        // expanded pb id -> model id
  std::vector<int> first_pb_of_model;  // model id -> first expanded pb id
};
CoarseExpansion coarse_grained_restrict(const repo::Repository& repo);

// --- adapters -------------------------------------------------------------

// Caching decisions pinned to a precomputed matrix; migration stays learned.
class FixedCachingAdapter : public trainer::ActionAdapter {
 public:
  explicit FixedCachingAdapter(Eigen::MatrixXi caching, bool forbid_migration = false)
      : caching_(std::move(caching)), forbid_migration_(forbid_migration) {}
  bool capacity_ok(const env::Environment& e, int node) const override;
  void adjust(const env::Environment& e, env::StepDecision& d) override;

 private:
  Eigen::MatrixXi caching_;  // N x K
  bool forbid_migration_;
};

// Whole-model decisions: actors are queried at model boundaries only and the
// capacity gate covers the full model payload.
class CoarseAdapter : public trainer::ActionAdapter {
 public:
  explicit CoarseAdapter(CoarseExpansion expansion) : exp_(std::move(expansion)) {}
  bool capacity_ok(const env::Environment& e, int node) const override;
  bool hold_previous(const env::Environment& e) const override;

 private:
  CoarseExpansion exp_;
};

// Migrate every cached PB to every node so the whole cluster participates.
class FullCompAdapter : public trainer::ActionAdapter {
 public:
  void adjust(const env::Environment& e, env::StepDecision& d) override;
};

// --- policy construction ----------------------------------------------------

struct PolicySetup {
  trainer::TrainConfig config;
  std::shared_ptr<trainer::ActionAdapter> adapter;  // may be null
  bool use_qmix = false;
  bool needs_coarse_env = false;
  bool eval_delivery_override = false;
  delivery::Config eval_delivery;  // delivery used at evaluation time
};

// Assembles the training configuration for a policy; env-dependent adapters
// are built from the provided scenario pieces.
PolicySetup policy_setup(PolicyKind kind, const trainer::TrainConfig& base,
                         const repo::Repository& repo, const repo::RequestProfile& profile,
                         const env::Topology& topo, const Eigen::VectorXd& capacity,
                         double hybrid_threshold = 2.0);

// --- QMIX comparison arm ----------------------------------------------------

// Discrete per-dimension Q-network per agent with epsilon-greedy selection,
// the same monotone mixing network, and the same replay augmentation.
class QmixTrainer {
 public:
  QmixTrainer(env::Environment environment, trainer::TrainConfig config,
              std::shared_ptr<trainer::ActionAdapter> adapter = nullptr);

  trainer::EpisodeStats run_episode(int episode);
  std::vector<trainer::EpisodeStats> train();
  trainer::EvalStats evaluate(int episodes, int first_episode_index = 1000000);
  env::StepDecision greedy_decision();
  env::Environment& environment() { return env_; }

 private:
  env::Environment env_;
  trainer::TrainConfig cfg_;
  std::shared_ptr<trainer::ActionAdapter> adapter_;
  std::vector<marl::ObsLayout> layouts_;
  std::vector<int> state_offsets_;
  int action_dim_ = 0;

  std::vector<nn::Mlp> qnets_, target_qnets_;
  marl::MixingParams mixing_, target_mixing_;
  std::vector<nn::Adam> q_opt_;
  nn::Adam mixing_opt_;

  marl::ReplayBuffer buffer_;
  esn::EsnParams esn_;
  std::unique_ptr<esn::RidgeTrainer> esn_trainer_;
  RngStream noise_rng_, batch_rng_, augment_rng_;

  double epsilon(int episode) const;
  VectorXd agent_obs(const VectorXd& state, int agent) const;
  bool mask_from_state(const VectorXd& state, int agent) const;
  VectorXd greedy_bits(const nn::Mlp& qnet, const VectorXd& obs, bool capacity_ok) const;
  double learn_step();
  void soft_update_targets();
};

}  // namespace fgamcd::baselines
