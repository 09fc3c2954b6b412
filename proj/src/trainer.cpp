#include "fgamcd/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

namespace fgamcd::trainer {

namespace {

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<marl::ObsLayout> build_layouts(const env::Environment& e) {
  const auto& topo = e.topology();
  std::vector<marl::ObsLayout> layouts(topo.node_count);
  for (int n = 0; n < topo.node_count; ++n) {
    marl::ObsLayout& l = layouts[n];
    l.users_own = static_cast<int>(topo.users_of[n].size());
    l.own_len = 2 + l.users_own;
    int at = l.own_len;
    for (int m = 0; m < topo.node_count; ++m) {
      if (m == n) continue;
      const int len = 2 + static_cast<int>(topo.users_of[m].size());
      l.other_spans.push_back({at, len});
      at += len;
    }
    l.total = at;
  }
  return layouts;
}

}  // namespace

bool ActionAdapter::capacity_ok(const env::Environment& e, int node) const {
  return e.cache().remaining(node) >= e.repository().pb_size(e.current_pb());
}

MaasnTrainer::MaasnTrainer(env::Environment environment, TrainConfig config,
                           std::shared_ptr<ActionAdapter> adapter)
    : env_(std::move(environment)),
      cfg_(config),
      adapter_(adapter ? std::move(adapter) : std::make_shared<ActionAdapter>()),
      buffer_(config.buffer_capacity),
      noise_rng_(RngStream::substream(config.seed, "noise")),
      batch_rng_(RngStream::substream(config.seed, "batch")),
      augment_rng_(RngStream::substream(config.seed, "augment")) {
  const auto& topo = env_.topology();
  layouts_ = build_layouts(env_);
  state_offsets_.resize(topo.node_count + 1, 0);
  for (int n = 0; n < topo.node_count; ++n)
    state_offsets_[n + 1] = state_offsets_[n] + layouts_[n].total;
  action_dim_ = topo.node_count;  // one caching + N-1 migration outputs

  auto init_rng = RngStream::substream(cfg_.seed, "init");
  for (int n = 0; n < topo.node_count; ++n) {
    const int hidden = cfg_.action_semantics ? cfg_.actor_hidden : cfg_.plain_actor_hidden;
    actors_.push_back(marl::make_actor(layouts_[n], topo.node_count - 1, cfg_.embed_dim, hidden,
                                       cfg_.action_semantics, init_rng));
    critics_.push_back(Mlp({layouts_[n].total + action_dim_, cfg_.critic_hidden,
                            cfg_.critic_hidden, 1},
                           nn::Activation::relu, nn::Activation::identity, init_rng));
  }
  mixing_ = marl::make_mixing(topo.node_count, env_.state_dim(), cfg_.mixing_hidden, init_rng);
  target_actors_ = actors_;
  target_critics_ = critics_;
  target_mixing_ = mixing_;

  for (int n = 0; n < topo.node_count; ++n) {
    actor_opt_.emplace_back(actors_[n].param_count(), cfg_.actor_lr);
    critic_opt_.emplace_back(critics_[n].param_count(), cfg_.critic_lr);
  }
  mixing_opt_ = nn::Adam(mixing_.param_count(), cfg_.critic_lr);

  const int state_dim = env_.state_dim();
  const int in_dim = state_dim + topo.node_count * action_dim_;
  const int out_dim = 1 + state_dim;
  auto esn_rng = RngStream::substream(cfg_.seed, "esn");
  esn_ = esn::init_esn(cfg_.reservoir_dim, in_dim, out_dim, cfg_.esn_spectral_in,
                       cfg_.esn_spectral_re, esn_rng);
  esn_trainer_ = std::make_unique<esn::RidgeTrainer>(cfg_.reservoir_dim, out_dim, cfg_.esn_ridge);
}

double MaasnTrainer::temperature(int episode) const {
  if (cfg_.episodes <= 1) return cfg_.temp_end;
  const double f = static_cast<double>(episode) / static_cast<double>(cfg_.episodes - 1);
  return cfg_.temp_start * std::pow(cfg_.temp_end / cfg_.temp_start, std::min(f, 1.0));
}

VectorXd MaasnTrainer::agent_obs(const VectorXd& state, int agent) const {
  return state.segment(state_offsets_[agent], layouts_[agent].total);
}

VectorXd MaasnTrainer::agent_action(const VectorXd& joint, int agent) const {
  return joint.segment(agent * action_dim_, action_dim_);
}

bool MaasnTrainer::mask_from_state(const VectorXd& state, int agent) const {
  return marl::capacity_mask_from_obs(agent_obs(state, agent), layouts_[agent],
                                      env_.cache().capacity(agent),
                                      [&] {
                                        double mx = 0.0;
                                        for (const auto& pb : env_.repository().pbs)
                                          mx = std::max(mx, pb.size_bytes);
                                        return mx;
                                      }());
}

namespace {

// maps agent-local migration outputs (other agents in ascending node order)
// onto the migration matrix
void fill_decision(const env::Topology& topo, const std::vector<VectorXd>& soft,
                   env::StepDecision& d) {
  const int n_count = topo.node_count;
  d.caching = env::VectorXi::Zero(n_count);
  d.migration = Eigen::MatrixXi::Zero(n_count, n_count);
  for (int n = 0; n < n_count; ++n) {
    d.caching(n) = soft[n](0) >= 0.5 ? 1 : 0;
    int at = 1;
    for (int m = 0; m < n_count; ++m) {
      if (m == n) continue;
      d.migration(n, m) = soft[n](at++) >= 0.5 ? 1 : 0;
    }
  }
  d.participation = env::VectorXi::Zero(n_count);
  for (int n = 0; n < n_count; ++n) {
    int sum = d.caching(n);
    for (int m = 0; m < n_count; ++m)
      if (m != n) sum += d.migration(m, n);
    d.participation(n) = std::min(sum, 1);
  }
}

// stored experience must reflect any adapter adjustment
void reconcile_soft(const env::Topology& topo, const env::StepDecision& d,
                    std::vector<VectorXd>& soft) {
  for (int n = 0; n < topo.node_count; ++n) {
    if ((soft[n](0) >= 0.5 ? 1 : 0) != d.caching(n)) soft[n](0) = d.caching(n);
    int at = 1;
    for (int m = 0; m < topo.node_count; ++m) {
      if (m == n) continue;
      if ((soft[n](at) >= 0.5 ? 1 : 0) != d.migration(n, m)) soft[n](at) = d.migration(n, m);
      ++at;
    }
  }
}

}  // namespace

env::StepDecision MaasnTrainer::greedy_decision(double temperature) {
  const auto& topo = env_.topology();
  const VectorXd s = env_.global_state();
  std::vector<VectorXd> soft(topo.node_count);
  for (int n = 0; n < topo.node_count; ++n) {
    marl::ActorNoise noise;
    noise.a = 0.5;
    noise.b = VectorXd::Constant(topo.node_count - 1, 0.5);
    soft[n] = marl::actor_forward(actors_[n], layouts_[n], agent_obs(s, n), noise, temperature,
                                  adapter_->capacity_ok(env_, n));
  }
  env::StepDecision d;
  fill_decision(topo, soft, d);
  adapter_->adjust(env_, d);
  d.beamformers = env::VectorXcd::Zero(topo.node_count * topo.antennas);
  return d;
}

EpisodeStats MaasnTrainer::run_episode(int episode) {
  const auto& topo = env_.topology();
  EpisodeStats stats;
  stats.episode = episode;
  const double temp = temperature(episode);

  env_.reset(episode);
  adapter_->episode_reset(env_);
  VectorXd q_res = VectorXd::Zero(cfg_.reservoir_dim);
  env::StepDecision prev_decision;
  bool have_prev = false;

  while (!env_.done()) {
    const VectorXd s = env_.global_state();
    env::StepDecision decision;
    std::vector<VectorXd> soft(topo.node_count);

    const auto t_decide = std::chrono::steady_clock::now();
    if (have_prev && adapter_->hold_previous(env_)) {
      decision = prev_decision;
      for (int n = 0; n < topo.node_count; ++n) {
        soft[n] = VectorXd::Zero(action_dim_);
        soft[n](0) = decision.caching(n);
        int at = 1;
        for (int m = 0; m < topo.node_count; ++m) {
          if (m == n) continue;
          soft[n](at++) = decision.migration(n, m);
        }
      }
    } else {
      for (int n = 0; n < topo.node_count; ++n) {
        marl::ActorNoise noise;
        noise.a = noise_rng_.uniform(1e-9, 1.0 - 1e-9);
        noise.b.resize(topo.node_count - 1);
        for (int m = 0; m < topo.node_count - 1; ++m)
          noise.b(m) = noise_rng_.uniform(1e-9, 1.0 - 1e-9);
        soft[n] = marl::actor_forward(actors_[n], layouts_[n], agent_obs(s, n), noise, temp,
                                      adapter_->capacity_ok(env_, n));
      }
      fill_decision(topo, soft, decision);
      adapter_->adjust(env_, decision);
      reconcile_soft(topo, decision, soft);
    }
    decision.beamformers = env::VectorXcd::Zero(topo.node_count * topo.antennas);
    stats.wall_decision_s += seconds_since(t_decide);

    const auto t_sub = std::chrono::steady_clock::now();
    const env::DeliveryOutcome outcome = delivery::evaluate(env_, decision, cfg_.delivery);
    stats.wall_subroutine_s += seconds_since(t_sub);
    if (outcome.dc_iterations > 0) stats.dc_iteration_counts.push_back(outcome.dc_iterations);

    const env::StepResult result = env_.apply(decision, outcome);
    stats.cum_reward += result.reward;
    stats.cum_reward_learner += result.reward_learner;
    if (result.delivered) {
      stats.total_delay += result.migration_delay + result.broadcast_delay;
      stats.migration_delay += result.migration_delay;
      stats.broadcast_delay += result.broadcast_delay;
      ++stats.delivered_steps;
    } else if (result.requested) {
      ++stats.undelivered_steps;
    }
    if (result.infeasible) ++stats.infeasible_steps;

    marl::ExperienceTuple tuple;
    tuple.s = s;
    tuple.d.resize(topo.node_count * action_dim_);
    for (int n = 0; n < topo.node_count; ++n)
      tuple.d.segment(n * action_dim_, action_dim_) = soft[n];
    tuple.r = result.reward_learner;
    tuple.terminal = env_.done();
    tuple.s_next = tuple.terminal ? VectorXd::Zero(s.size()) : env_.global_state();
    tuple.reservoir = q_res;

    VectorXd v(s.size() + tuple.d.size());
    v << s, tuple.d;
    q_res = esn::esn_step_state(esn_, q_res, v);

    buffer_.push(std::move(tuple));
    prev_decision = decision;
    have_prev = true;
  }

  if (cfg_.use_augmentation) augment(episode, stats);

  const auto t_learn = std::chrono::steady_clock::now();
  for (int u = 0; u < cfg_.updates_per_episode; ++u) stats.critic_loss = learn_step(stats);
  soft_update_targets();
  stats.wall_learn_s += seconds_since(t_learn);
  stats.actor_grad_norm = last_actor_grad_norm_;
  return stats;
}

void MaasnTrainer::augment(int episode, EpisodeStats& stats) {
  const long budget = esn::synth_budget(episode, cfg_.tau0, env_.steps(), cfg_.attenuation,
                                        cfg_.decay_period);
  if (budget <= 0) return;
  const long attempt_cap = cfg_.augment_attempt_factor * budget + 10;
  long attempts = 0;
  while (stats.synthetic_added < budget && attempts < attempt_cap) {
    ++attempts;
    const marl::ExperienceTuple* t = buffer_.sample_real(augment_rng_);
    if (!t) break;
    VectorXd v(t->s.size() + t->d.size());
    v << t->s, t->d;
    const VectorXd q = esn::esn_step_state(esn_, t->reservoir, v);
    const VectorXd pred = esn::esn_readout(esn_, q);
    VectorXd label(1 + t->s_next.size());
    label << t->r, t->s_next;
    if (cfg_.rnn_augmentation) {
      rnn_augment_tune(*t);
    } else {
      esn_trainer_->observe(q, label);
      esn_.w_out = esn_trainer_->readout();
    }
    if (esn::accept_sample(pred, label, cfg_.xi)) {
      marl::ExperienceTuple synth;
      synth.s = t->s;
      synth.d = t->d;
      synth.r = pred(0);
      synth.s_next = pred.tail(t->s_next.size());
      synth.terminal = t->terminal;
      synth.synthetic = true;
      buffer_.push(std::move(synth));
      ++stats.synthetic_added;
    }
  }
}

void MaasnTrainer::rnn_augment_tune(const marl::ExperienceTuple& t) {
  // single truncated gradient step on all three weight matrices
  VectorXd v(t.s.size() + t.d.size());
  v << t.s, t.d;
  const VectorXd pre = esn_.w_in * v + esn_.w_re * t.reservoir;
  VectorXd q(pre.size());
  for (int i = 0; i < pre.size(); ++i) q(i) = std::tanh(pre(i));
  VectorXd label(1 + t.s_next.size());
  label << t.r, t.s_next;
  const VectorXd err = esn_.w_out * q - label;  // d loss / d pred (x2 folded into lr)
  const VectorXd dq = esn_.w_out.transpose() * err;
  VectorXd dpre(q.size());
  for (int i = 0; i < q.size(); ++i) dpre(i) = dq(i) * (1.0 - q(i) * q(i));
  esn_.w_out -= cfg_.rnn_lr * err * q.transpose();
  esn_.w_in -= cfg_.rnn_lr * dpre * v.transpose();
  esn_.w_re -= cfg_.rnn_lr * dpre * t.reservoir.transpose();
}

double MaasnTrainer::critic_loss(const std::vector<const marl::ExperienceTuple*>& batch,
                                 std::vector<Mlp>* critic_grads, MixingParams* mixing_grads) {
  if (batch.empty()) throw std::invalid_argument("critic_loss: empty batch");
  const int agents = env_.topology().node_count;
  const int size = static_cast<int>(batch.size());
  const double temp = cfg_.temp_end;  // targets evaluated near-binary
  double loss = 0.0;

  for (const auto* t : batch) {
    std::vector<Mlp::Cache> q_caches(agents);
    VectorXd q_vals(agents);
    for (int n = 0; n < agents; ++n) {
      VectorXd in(layouts_[n].total + action_dim_);
      in << agent_obs(t->s, n), agent_action(t->d, n);
      q_vals(n) = critics_[n].forward(in, q_caches[n])(0);
    }

    if (cfg_.value_decomposition) {
      double y = t->r;
      if (!t->terminal) {
        VectorXd q_next(agents);
        for (int n = 0; n < agents; ++n) {
          marl::ActorNoise nf;
          nf.a = 0.5;
          nf.b = VectorXd::Constant(agents - 1, 0.5);
          const VectorXd o_next = agent_obs(t->s_next, n);
          const VectorXd d_next =
              marl::actor_forward(target_actors_[n], layouts_[n], o_next, nf, temp,
                                  mask_from_state(t->s_next, n));
          VectorXd in(layouts_[n].total + action_dim_);
          in << o_next, d_next;
          q_next(n) = target_critics_[n].forward(in)(0);
        }
        y += cfg_.gamma * marl::mixing_forward(target_mixing_, t->s_next, q_next);
      }
      marl::MixingCache mix_cache;
      const double qtot = marl::mixing_forward(mixing_, t->s, q_vals, &mix_cache);
      const double err = qtot - y;
      loss += err * err / size;
      if (critic_grads && mixing_grads) {
        const double dqtot = 2.0 * err / size;
        const VectorXd dq = marl::mixing_backward(mixing_, mix_cache, dqtot, *mixing_grads);
        for (int n = 0; n < agents; ++n) {
          VectorXd dy(1);
          dy(0) = dq(n);
          critics_[n].backward(q_caches[n], dy, (*critic_grads)[n]);
        }
      }
    } else {
      for (int n = 0; n < agents; ++n) {
        double y = t->r;
        if (!t->terminal) {
          marl::ActorNoise nf;
          nf.a = 0.5;
          nf.b = VectorXd::Constant(agents - 1, 0.5);
          const VectorXd o_next = agent_obs(t->s_next, n);
          const VectorXd d_next =
              marl::actor_forward(target_actors_[n], layouts_[n], o_next, nf, temp,
                                  mask_from_state(t->s_next, n));
          VectorXd in(layouts_[n].total + action_dim_);
          in << o_next, d_next;
          y += cfg_.gamma * target_critics_[n].forward(in)(0);
        }
        const double err = q_vals(n) - y;
        loss += err * err / (size * agents);
        if (critic_grads) {
          VectorXd dy(1);
          dy(0) = 2.0 * err / (size * agents);
          critics_[n].backward(q_caches[n], dy, (*critic_grads)[n]);
        }
      }
    }
  }
  return loss;
}

double MaasnTrainer::actor_loss(int agent, const std::vector<const marl::ExperienceTuple*>& batch,
                                const std::vector<marl::ActorNoise>& noises, ActorParams* grads) {
  if (batch.empty()) throw std::invalid_argument("actor_loss: empty batch");
  if (noises.size() != batch.size())
    throw std::invalid_argument("actor_loss: one noise draw per batch item required");
  const int agents = env_.topology().node_count;
  const int size = static_cast<int>(batch.size());
  const double temp = cfg_.temp_end;
  double loss = 0.0;
  Mlp critic_scratch = critics_[agent].zeros_like();

  for (int b = 0; b < size; ++b) {
    const auto* t = batch[b];
    marl::ActorCache cache;
    const VectorXd o_n = agent_obs(t->s, agent);
    const VectorXd pi = marl::actor_forward(actors_[agent], layouts_[agent], o_n, noises[b], temp,
                                            mask_from_state(t->s, agent), &cache);
    VectorXd daction;
    if (cfg_.actor_grad_through_mixing && cfg_.value_decomposition) {
      VectorXd q_vals(agents);
      std::vector<Mlp::Cache> q_caches(agents);
      for (int m = 0; m < agents; ++m) {
        VectorXd in(layouts_[m].total + action_dim_);
        in << agent_obs(t->s, m), (m == agent ? pi : agent_action(t->d, m));
        q_vals(m) = critics_[m].forward(in, q_caches[m])(0);
      }
      marl::MixingCache mix_cache;
      const double qtot = marl::mixing_forward(mixing_, t->s, q_vals, &mix_cache);
      loss += -qtot / size;
      if (grads) {
        MixingParams mix_scratch = mixing_.zeros_like();
        const VectorXd dq = marl::mixing_backward(mixing_, mix_cache, -1.0 / size, mix_scratch);
        VectorXd dy(1);
        dy(0) = dq(agent);
        const VectorXd din = critics_[agent].backward(q_caches[agent], dy, critic_scratch);
        daction = din.tail(action_dim_);
      }
    } else {
      Mlp::Cache q_cache;
      VectorXd in(layouts_[agent].total + action_dim_);
      in << o_n, pi;
      const double q = critics_[agent].forward(in, q_cache)(0);
      loss += -q / size;
      if (grads) {
        VectorXd dy(1);
        dy(0) = -1.0 / size;
        const VectorXd din = critics_[agent].backward(q_cache, dy, critic_scratch);
        daction = din.tail(action_dim_);
      }
    }
    if (grads) marl::actor_backward(actors_[agent], layouts_[agent], cache, daction, *grads);
  }
  return loss;
}

double MaasnTrainer::learn_step(EpisodeStats&) {
  if (buffer_.size() == 0) return 0.0;
  const auto& topo = env_.topology();
  const int agents = topo.node_count;
  const int batch = std::min<std::size_t>(cfg_.batch_size, buffer_.size());

  std::vector<const marl::ExperienceTuple*> items;
  for (int b = 0; b < batch; ++b) items.push_back(&buffer_.sample(batch_rng_));

  std::vector<Mlp> critic_grads;
  for (int n = 0; n < agents; ++n) critic_grads.push_back(critics_[n].zeros_like());
  MixingParams mixing_grads = mixing_.zeros_like();
  const double loss = critic_loss(items, &critic_grads, &mixing_grads);

  for (int n = 0; n < agents; ++n) {
    VectorXd flat = critics_[n].flatten();
    flat -= critic_opt_[n].step(critic_grads[n].flatten());
    critics_[n].unflatten(flat);
  }
  if (cfg_.value_decomposition) {
    VectorXd flat = mixing_.flatten();
    flat -= mixing_opt_.step(mixing_grads.flatten());
    mixing_.unflatten(flat);
  }

  double grad_norm_sum = 0.0;
  for (int n = 0; n < agents; ++n) {
    std::vector<marl::ActorNoise> noises(items.size());
    for (auto& noise : noises) {
      noise.a = noise_rng_.uniform(1e-9, 1.0 - 1e-9);
      noise.b.resize(agents - 1);
      for (int m = 0; m < agents - 1; ++m) noise.b(m) = noise_rng_.uniform(1e-9, 1.0 - 1e-9);
    }
    ActorParams grads = actors_[n].zeros_like();
    actor_loss(n, items, noises, &grads);
    const VectorXd g = grads.flatten();
    grad_norm_sum += g.norm();
    VectorXd flat = actors_[n].flatten();
    flat -= actor_opt_[n].step(g);
    actors_[n].unflatten(flat);
  }
  last_actor_grad_norm_ = grad_norm_sum / agents;
  return loss;
}

void MaasnTrainer::soft_update_targets() {
  const double rho = cfg_.soft_update;
  if (rho >= 1.0) {  // exact copy at full rate
    target_actors_ = actors_;
    target_critics_ = critics_;
    target_mixing_ = mixing_;
    return;
  }
  for (std::size_t n = 0; n < actors_.size(); ++n) {
    VectorXd t = target_actors_[n].flatten();
    t += rho * (actors_[n].flatten() - t);
    target_actors_[n].unflatten(t);
    VectorXd tc = target_critics_[n].flatten();
    tc += rho * (critics_[n].flatten() - tc);
    target_critics_[n].unflatten(tc);
  }
  VectorXd tm = target_mixing_.flatten();
  tm += rho * (mixing_.flatten() - tm);
  target_mixing_.unflatten(tm);
}

std::vector<EpisodeStats> MaasnTrainer::train() {
  std::vector<EpisodeStats> all;
  for (int e = 0; e < cfg_.episodes; ++e) all.push_back(run_episode(e));
  return all;
}

EvalStats MaasnTrainer::evaluate(int episodes, int first_episode_index) {
  EvalStats stats;
  stats.episodes = episodes;
  for (int ep = 0; ep < episodes; ++ep) {
    env_.reset(first_episode_index + ep);
    adapter_->episode_reset(env_);
    env::StepDecision prev;
    bool have_prev = false;
    while (!env_.done()) {
      env::StepDecision d;
      if (have_prev && adapter_->hold_previous(env_)) {
        d = prev;
        d.beamformers = env::VectorXcd::Zero(env_.topology().node_count * env_.topology().antennas);
      } else {
        d = greedy_decision(cfg_.temp_end);
      }
      const auto outcome = delivery::evaluate(env_, d, cfg_.delivery);
      const auto result = env_.apply(d, outcome);
      stats.mean_reward += result.reward;
      if (result.delivered) {
        stats.total_delay += result.migration_delay + result.broadcast_delay;
        stats.migration_delay += result.migration_delay;
        stats.broadcast_delay += result.broadcast_delay;
      } else if (result.requested) {
        ++stats.undelivered_steps;
        stats.all_delivered = false;
      }
      if (result.infeasible) ++stats.infeasible_steps;
      prev = d;
      have_prev = true;
    }
  }
  stats.total_delay /= episodes;
  stats.migration_delay /= episodes;
  stats.broadcast_delay /= episodes;
  stats.mean_reward /= episodes;
  return stats;
}

namespace {

void write_vec(std::ofstream& out, const VectorXd& v) {
  const std::int64_t n = v.size();
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  out.write(reinterpret_cast<const char*>(v.data()), n * sizeof(double));
}

VectorXd read_vec(std::ifstream& in) {
  std::int64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  VectorXd v(n);
  in.read(reinterpret_cast<char*>(v.data()), n * sizeof(double));
  return v;
}

void write_mat(std::ofstream& out, const Eigen::MatrixXd& m) {
  const std::int64_t r = m.rows(), c = m.cols();
  out.write(reinterpret_cast<const char*>(&r), sizeof(r));
  out.write(reinterpret_cast<const char*>(&c), sizeof(c));
  out.write(reinterpret_cast<const char*>(m.data()), r * c * sizeof(double));
}

Eigen::MatrixXd read_mat(std::ifstream& in) {
  std::int64_t r = 0, c = 0;
  in.read(reinterpret_cast<char*>(&r), sizeof(r));
  in.read(reinterpret_cast<char*>(&c), sizeof(c));
  Eigen::MatrixXd m(r, c);
  in.read(reinterpret_cast<char*>(m.data()), r * c * sizeof(double));
  return m;
}

void write_string(std::ofstream& out, const std::string& s) {
  const std::int64_t n = static_cast<std::int64_t>(s.size());
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  out.write(s.data(), n);
}

std::string read_string(std::ifstream& in) {
  std::int64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  std::string s(n, '\0');
  in.read(s.data(), n);
  return s;
}

constexpr std::uint32_t kCheckpointMagic = 0x46474b31;  // "FGK1"

}  // namespace

void MaasnTrainer::save_checkpoint(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out.write(reinterpret_cast<const char*>(&kCheckpointMagic), sizeof(kCheckpointMagic));
  const std::int64_t agents = static_cast<std::int64_t>(actors_.size());
  out.write(reinterpret_cast<const char*>(&agents), sizeof(agents));
  for (const auto& a : actors_) write_vec(out, a.flatten());
  for (const auto& c : critics_) write_vec(out, c.flatten());
  write_vec(out, mixing_.flatten());
  for (const auto& a : target_actors_) write_vec(out, a.flatten());
  for (const auto& c : target_critics_) write_vec(out, c.flatten());
  write_vec(out, target_mixing_.flatten());
  write_mat(out, esn_.w_in);
  write_mat(out, esn_.w_re);
  write_mat(out, esn_.w_out);
  write_string(out, noise_rng_.serialize());
  write_string(out, batch_rng_.serialize());
  write_string(out, augment_rng_.serialize());
}

void MaasnTrainer::load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  std::uint32_t magic = 0;
  in.read(reinterpret_cast<char*>(&magic), sizeof(magic));
  if (magic != kCheckpointMagic) throw std::runtime_error("load_checkpoint: bad file format");
  std::int64_t agents = 0;
  in.read(reinterpret_cast<char*>(&agents), sizeof(agents));
  if (agents != static_cast<std::int64_t>(actors_.size()))
    throw std::runtime_error("load_checkpoint: agent count mismatch");
  for (auto& a : actors_) a.unflatten(read_vec(in));
  for (auto& c : critics_) c.unflatten(read_vec(in));
  mixing_.unflatten(read_vec(in));
  for (auto& a : target_actors_) a.unflatten(read_vec(in));
  for (auto& c : target_critics_) c.unflatten(read_vec(in));
  target_mixing_.unflatten(read_vec(in));
  esn_.w_in = read_mat(in);
  esn_.w_re = read_mat(in);
  esn_.w_out = read_mat(in);
  noise_rng_.deserialize(read_string(in));
  batch_rng_.deserialize(read_string(in));
  augment_rng_.deserialize(read_string(in));
  if (!in) throw std::runtime_error("load_checkpoint: truncated file");
}

}  // namespace fgamcd::trainer
