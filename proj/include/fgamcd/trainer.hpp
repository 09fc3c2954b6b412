#pragma once

#include <functional>
#include <memory>

#include "fgamcd/agents.hpp"
#include "fgamcd/delivery.hpp"
#include "fgamcd/environment.hpp"
#include "fgamcd/esn.hpp"

namespace fgamcd::trainer {

using Eigen::VectorXd;
using marl::ActorParams;
using marl::MixingParams;
using nn::Mlp;

struct TrainConfig {
  int episodes = 200;
  int batch_size = 64;
  int buffer_capacity = 100000;
  int updates_per_episode = 1;
  double actor_lr = 1e-3;
  double critic_lr = 1e-3;
  double soft_update = 5e-3;
  double gamma = 0.95;
  double temp_start = 1.0;
  double temp_end = 0.05;

  int embed_dim = 32;
  int actor_hidden = 128;
  int plain_actor_hidden = 256;  // ablation arm without action semantics
  int critic_hidden = 256;
  int mixing_hidden = 64;

  bool use_augmentation = true;
  double tau0 = 0.8;
  double xi = 1.12;
  double attenuation = 0.8;
  int decay_period = 10;
  int reservoir_dim = 256;
  double esn_ridge = 1e-6;
  double esn_spectral_in = 0.5;
  double esn_spectral_re = 0.5;
  bool rnn_augmentation = false;  // trainable reservoir comparison arm
  double rnn_lr = 1e-3;
  int augment_attempt_factor = 3;  // attempt cap = factor * budget

  bool action_semantics = true;
  bool value_decomposition = true;
  bool actor_grad_through_mixing = false;

  delivery::Config delivery;
  std::uint64_t seed = 1;
};

// Hook points that let comparison policies reshape actions without touching
// the learning loop. capacity_ok feeds the actor mask; adjust edits the
// thresholded decision (the stored experience reflects the adjustment).
class ActionAdapter {
 public:
  virtual ~ActionAdapter() = default;
  virtual void episode_reset(const env::Environment&) {}
  virtual bool capacity_ok(const env::Environment& e, int node) const;
  virtual void adjust(const env::Environment&, env::StepDecision&) {}
  // when true the previous step's decision is replayed without querying the
  // actors (used by whole-model caching)
  virtual bool hold_previous(const env::Environment&) const { return false; }
};

struct EpisodeStats {
  int episode = 0;
  double cum_reward = 0.0;          // raw reward sum
  double cum_reward_learner = 0.0;  // normalized reward sum
  double total_delay = 0.0;         // delivered PBs only
  double migration_delay = 0.0;
  double broadcast_delay = 0.0;
  int infeasible_steps = 0;
  int undelivered_steps = 0;
  int delivered_steps = 0;
  int synthetic_added = 0;
  double actor_grad_norm = 0.0;
  double critic_loss = 0.0;
  double wall_decision_s = 0.0;
  double wall_subroutine_s = 0.0;
  double wall_learn_s = 0.0;
  std::vector<int> dc_iteration_counts;
};

struct EvalStats {
  double total_delay = 0.0;       // mean over eval episodes, delivered PBs
  double migration_delay = 0.0;
  double broadcast_delay = 0.0;
  double mean_reward = 0.0;
  int undelivered_steps = 0;
  int infeasible_steps = 0;
  int episodes = 0;
  bool all_delivered = true;
};

// Algorithm-1 learner: action-semantics actors with a relaxed binary output
// layer, per-agent critics mixed by a monotone state-conditioned network,
// replay augmented with ESN-predicted samples.
class MaasnTrainer {
 public:
  MaasnTrainer(env::Environment environment, TrainConfig config,
               std::shared_ptr<ActionAdapter> adapter = nullptr);

  EpisodeStats run_episode(int episode);
  std::vector<EpisodeStats> train();

  EvalStats evaluate(int episodes, int first_episode_index = 1000000);

  // Mean squared TD error of the decomposed global value (or of the
  // independent critics when value decomposition is off); optionally
  // accumulates parameter gradients.
  double critic_loss(const std::vector<const marl::ExperienceTuple*>& batch,
                     std::vector<Mlp>* critic_grads = nullptr,
                     MixingParams* mixing_grads = nullptr);

  // Mean of -Q_n at the actor's action with gradients flowing through the
  // binary relaxation; noises must supply one draw per batch item.
  double actor_loss(int agent, const std::vector<const marl::ExperienceTuple*>& batch,
                    const std::vector<marl::ActorNoise>& noises,
                    ActorParams* grads = nullptr);

  env::Environment& environment() { return env_; }
  const TrainConfig& config() const { return cfg_; }
  void set_delivery(const delivery::Config& d) { cfg_.delivery = d; }
  double temperature(int episode) const;

  // greedy (noise-free, thresholded) decision at the current env step
  env::StepDecision greedy_decision(double temperature = 0.05);

  void save_checkpoint(const std::string& path) const;
  void load_checkpoint(const std::string& path);

  // exposed for tests
  std::vector<ActorParams>& actors() { return actors_; }
  std::vector<Mlp>& critics() { return critics_; }
  MixingParams& mixing() { return mixing_; }
  const std::vector<ActorParams>& target_actors() const { return target_actors_; }
  const std::vector<Mlp>& target_critics() const { return target_critics_; }
  const MixingParams& target_mixing() const { return target_mixing_; }
  const std::vector<marl::ObsLayout>& layouts() const { return layouts_; }
  marl::ReplayBuffer& buffer() { return buffer_; }

  double last_actor_grad_norm() const { return last_actor_grad_norm_; }

 private:
  env::Environment env_;
  TrainConfig cfg_;
  std::shared_ptr<ActionAdapter> adapter_;

  std::vector<marl::ObsLayout> layouts_;
  std::vector<int> state_offsets_;  // per-agent slice into the global state
  int action_dim_ = 0;              // per agent

  std::vector<ActorParams> actors_, target_actors_;
  std::vector<Mlp> critics_, target_critics_;
  MixingParams mixing_, target_mixing_;

  std::vector<nn::Adam> actor_opt_, critic_opt_;
  nn::Adam mixing_opt_;

  marl::ReplayBuffer buffer_;
  esn::EsnParams esn_;
  std::unique_ptr<esn::RidgeTrainer> esn_trainer_;

  RngStream noise_rng_, batch_rng_, augment_rng_;
  double last_actor_grad_norm_ = 0.0;

  VectorXd agent_obs(const VectorXd& state, int agent) const;
  VectorXd agent_action(const VectorXd& joint, int agent) const;
  bool mask_from_state(const VectorXd& state, int agent) const;
  double learn_step(EpisodeStats& stats);  // one batch update round
  void soft_update_targets();
  void augment(int episode, EpisodeStats& stats);
  void rnn_augment_tune(const marl::ExperienceTuple& t);
};

}  // namespace fgamcd::trainer
