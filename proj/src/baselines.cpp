#include "fgamcd/baselines.hpp"

#include <algorithm>
#include <map>
#include <numeric>

namespace fgamcd::baselines {

namespace {

const std::map<std::string, PolicyKind>& name_table() {
  static const std::map<std::string, PolicyKind> table = {
      {"maasn_da", PolicyKind::maasn_da},
      {"qmix_da", PolicyKind::qmix_da},
      {"no_action_semantics", PolicyKind::no_action_semantics},
      {"no_value_decomp", PolicyKind::no_value_decomp},
      {"no_augmentation", PolicyKind::no_augmentation},
      {"rnn_augmentation", PolicyKind::rnn_augmentation},
      {"trimcaching_greedy", PolicyKind::trimcaching_greedy},
      {"no_cooperation", PolicyKind::no_cooperation},
      {"tdma_unicast", PolicyKind::tdma_unicast},
      {"coarse_grained", PolicyKind::coarse_grained},
      {"full_comp", PolicyKind::full_comp},
      {"hybrid_multicast", PolicyKind::hybrid_multicast},
  };
  return table;
}

}  // namespace

PolicyKind policy_from_name(const std::string& name) {
  const auto it = name_table().find(name);
  if (it == name_table().end()) throw std::invalid_argument("unknown policy: " + name);
  return it->second;
}

std::string policy_name(PolicyKind kind) {
  for (const auto& [name, k] : name_table())
    if (k == kind) return name;
  return "unknown";
}

double hit_ratio(const repo::Repository& repo, const repo::RequestProfile& profile,
                 const env::Topology& topo, const Eigen::MatrixXi& caching) {
  double hit = 0.0, total = 0.0;
  for (int u = 0; u < static_cast<int>(profile.target_model.size()); ++u) {
    const int home = topo.assoc[u];
    for (int pb : repo.models[profile.target_model[u] - 1].pb_ids) {
      const double bytes = repo.pb_size(pb);
      total += bytes;
      bool covered = caching(home, pb - 1) != 0;
      for (int n = 0; n < topo.node_count && !covered; ++n)
        if (n != home && topo.visibility(home, n) && caching(n, pb - 1)) covered = true;
      if (covered) hit += bytes;
    }
  }
  return total > 0.0 ? hit / total : 1.0;
}

Eigen::MatrixXi trimcaching_caching(const repo::Repository& repo,
                                    const repo::RequestProfile& profile,
                                    const env::Topology& topo, const Eigen::VectorXd& capacity) {
  const int n_count = topo.node_count;
  const int k_count = repo.pb_count();
  Eigen::MatrixXi caching = Eigen::MatrixXi::Zero(n_count, k_count);
  Eigen::VectorXd remaining = capacity;
  double current = hit_ratio(repo, profile, topo, caching);
  while (true) {
    int best_n = -1, best_k = -1;
    double best_gain = -1.0;
    for (int n = 0; n < n_count; ++n)
      for (int k = 0; k < k_count; ++k) {
        if (caching(n, k) || remaining(n) < repo.pbs[k].size_bytes) continue;
        caching(n, k) = 1;
        const double gain =
            (hit_ratio(repo, profile, topo, caching) - current) / repo.pbs[k].size_bytes;
        caching(n, k) = 0;
        if (gain > best_gain + 1e-15) {
          best_gain = gain;
          best_n = n;
          best_k = k;
        }
      }
    if (best_n < 0) break;
    caching(best_n, best_k) = 1;
    remaining(best_n) -= repo.pbs[best_k].size_bytes;
    current = hit_ratio(repo, profile, topo, caching);
  }
  return caching;
}

Eigen::MatrixXi local_popularity_caching(const repo::Repository& repo,
                                         const repo::RequestProfile& profile,
                                         const env::Topology& topo,
                                         const Eigen::VectorXd& capacity) {
  const int n_count = topo.node_count;
  const int k_count = repo.pb_count();
  Eigen::MatrixXi caching = Eigen::MatrixXi::Zero(n_count, k_count);
  for (int n = 0; n < n_count; ++n) {
    // local demand per PB, weighted per byte
    std::vector<std::pair<double, int>> scored;
    for (int k = 0; k < k_count; ++k) {
      int demand = 0;
      for (int u : topo.users_of[n])
        if (repo.model_contains(profile.target_model[u], k + 1)) ++demand;
      if (demand > 0)
        scored.push_back({static_cast<double>(demand) / repo.pbs[k].size_bytes, k});
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    double remaining = capacity(n);
    for (const auto& [score, k] : scored) {
      if (remaining >= repo.pbs[k].size_bytes) {
        caching(n, k) = 1;
        remaining -= repo.pbs[k].size_bytes;
      }
    }
  }
  return caching;
}

CoarseExpansion coarse_grained_restrict(const repo::Repository& repo) {
  CoarseExpansion exp;
  exp.repo.base_count = repo.base_count;
  exp.repo.reuse_ratio = 0.0;
  exp.first_pb_of_model.assign(repo.model_count() + 1, 0);
  int next = 1;
  for (const auto& m : repo.models) {
    exp.first_pb_of_model[m.id] = next;
    repo::ModelSpec spec;
    spec.id = m.id;
    for (int pb : m.pb_ids) {
      exp.repo.pbs.push_back({next, repo.pb_size(pb)});
      exp.model_of_pb.push_back(m.id);
      spec.pb_ids.push_back(next);
      ++next;
    }
    exp.repo.models.push_back(std::move(spec));
  }
  return exp;
}

bool FixedCachingAdapter::capacity_ok(const env::Environment& e, int node) const {
  return caching_(node, e.current_step()) != 0 &&
         trainer::ActionAdapter::capacity_ok(e, node);
}

void FixedCachingAdapter::adjust(const env::Environment& e, env::StepDecision& d) {
  const int n_count = static_cast<int>(d.caching.size());
  const double size = e.repository().pb_size(e.current_pb());
  for (int n = 0; n < n_count; ++n) {
    const bool fits = e.cache().remaining(n) >= size;
    d.caching(n) = (caching_(n, e.current_step()) && fits) ? 1 : 0;
    for (int m = 0; m < n_count; ++m) {
      if (forbid_migration_) d.migration(n, m) = 0;
      if (!d.caching(n)) d.migration(n, m) = 0;
    }
  }
  for (int n = 0; n < n_count; ++n) {
    int sum = d.caching(n);
    for (int m = 0; m < n_count; ++m)
      if (m != n) sum += d.migration(m, n);
    d.participation(n) = std::min(sum, 1);
  }
}

bool CoarseAdapter::capacity_ok(const env::Environment& e, int node) const {
  const int model = exp_.model_of_pb[e.current_step()];
  return e.cache().remaining(node) >= e.repository().model_bytes(model);
}

bool CoarseAdapter::hold_previous(const env::Environment& e) const {
  const int model = exp_.model_of_pb[e.current_step()];
  return e.current_pb() != exp_.first_pb_of_model[model];
}

void FullCompAdapter::adjust(const env::Environment&, env::StepDecision& d) {
  const int n_count = static_cast<int>(d.caching.size());
  for (int n = 0; n < n_count; ++n)
    for (int m = 0; m < n_count; ++m)
      d.migration(n, m) = (n != m && d.caching(n)) ? 1 : 0;
  for (int n = 0; n < n_count; ++n) {
    int sum = d.caching(n);
    for (int m = 0; m < n_count; ++m)
      if (m != n) sum += d.migration(m, n);
    d.participation(n) = std::min(sum, 1);
  }
}

PolicySetup policy_setup(PolicyKind kind, const trainer::TrainConfig& base,
                         const repo::Repository& repo, const repo::RequestProfile& profile,
                         const env::Topology& topo, const Eigen::VectorXd& capacity,
                         double hybrid_threshold) {
  PolicySetup setup;
  setup.config = base;
  setup.eval_delivery = base.delivery;
  switch (kind) {
    case PolicyKind::maasn_da:
      break;
    case PolicyKind::qmix_da:
      setup.use_qmix = true;
      break;
    case PolicyKind::no_action_semantics:
      setup.config.action_semantics = false;
      break;
    case PolicyKind::no_value_decomp:
      setup.config.value_decomposition = false;
      break;
    case PolicyKind::no_augmentation:
      setup.config.use_augmentation = false;
      break;
    case PolicyKind::rnn_augmentation:
      setup.config.rnn_augmentation = true;
      break;
    case PolicyKind::trimcaching_greedy:
      setup.adapter = std::make_shared<FixedCachingAdapter>(
          trimcaching_caching(repo, profile, topo, capacity));
      break;
    case PolicyKind::no_cooperation:
      setup.adapter = std::make_shared<FixedCachingAdapter>(
          local_popularity_caching(repo, profile, topo, capacity), /*forbid_migration=*/true);
      setup.config.delivery.mode = delivery::Mode::per_node;
      setup.eval_delivery = setup.config.delivery;
      break;
    case PolicyKind::tdma_unicast:
      setup.eval_delivery_override = true;
      setup.eval_delivery.mode = delivery::Mode::tdma_unicast;
      break;
    case PolicyKind::coarse_grained:
      setup.needs_coarse_env = true;  // caller re-builds the env over the expansion
      break;
    case PolicyKind::full_comp:
      setup.adapter = std::make_shared<FullCompAdapter>();
      break;
    case PolicyKind::hybrid_multicast:
      setup.eval_delivery_override = true;
      setup.eval_delivery.mode = delivery::Mode::hybrid_multicast;
      setup.eval_delivery.hybrid_threshold = hybrid_threshold;
      break;
  }
  return setup;
}

// ---------------------------------------------------------------------------
// QMIX comparison arm

namespace {

std::vector<marl::ObsLayout> qmix_layouts(const env::Environment& e) {
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

QmixTrainer::QmixTrainer(env::Environment environment, trainer::TrainConfig config,
                         std::shared_ptr<trainer::ActionAdapter> adapter)
    : env_(std::move(environment)),
      cfg_(config),
      adapter_(adapter ? std::move(adapter) : std::make_shared<trainer::ActionAdapter>()),
      buffer_(config.buffer_capacity),
      noise_rng_(RngStream::substream(config.seed, "noise")),
      batch_rng_(RngStream::substream(config.seed, "batch")),
      augment_rng_(RngStream::substream(config.seed, "augment")) {
  const auto& topo = env_.topology();
  layouts_ = qmix_layouts(env_);
  state_offsets_.resize(topo.node_count + 1, 0);
  for (int n = 0; n < topo.node_count; ++n)
    state_offsets_[n + 1] = state_offsets_[n] + layouts_[n].total;
  action_dim_ = topo.node_count;

  auto init_rng = RngStream::substream(cfg_.seed, "init");
  for (int n = 0; n < topo.node_count; ++n) {
    qnets_.push_back(nn::Mlp({layouts_[n].total, cfg_.critic_hidden, cfg_.critic_hidden,
                              2 * action_dim_},
                             nn::Activation::relu, nn::Activation::identity, init_rng));
    q_opt_.emplace_back(qnets_[n].param_count(), cfg_.critic_lr);
  }
  mixing_ = marl::make_mixing(topo.node_count, env_.state_dim(), cfg_.mixing_hidden, init_rng);
  target_qnets_ = qnets_;
  target_mixing_ = mixing_;
  mixing_opt_ = nn::Adam(mixing_.param_count(), cfg_.critic_lr);

  const int state_dim = env_.state_dim();
  const int in_dim = state_dim + topo.node_count * action_dim_;
  auto esn_rng = RngStream::substream(cfg_.seed, "esn");
  esn_ = esn::init_esn(cfg_.reservoir_dim, in_dim, 1 + state_dim, cfg_.esn_spectral_in,
                       cfg_.esn_spectral_re, esn_rng);
  esn_trainer_ =
      std::make_unique<esn::RidgeTrainer>(cfg_.reservoir_dim, 1 + state_dim, cfg_.esn_ridge);
}

double QmixTrainer::epsilon(int episode) const {
  if (cfg_.episodes <= 1) return cfg_.temp_end;
  const double f = static_cast<double>(episode) / static_cast<double>(cfg_.episodes - 1);
  return cfg_.temp_start * std::pow(cfg_.temp_end / cfg_.temp_start, std::min(f, 1.0));
}

VectorXd QmixTrainer::agent_obs(const VectorXd& state, int agent) const {
  return state.segment(state_offsets_[agent], layouts_[agent].total);
}

bool QmixTrainer::mask_from_state(const VectorXd& state, int agent) const {
  double mx = 0.0;
  for (const auto& pb : env_.repository().pbs) mx = std::max(mx, pb.size_bytes);
  return marl::capacity_mask_from_obs(agent_obs(state, agent), layouts_[agent],
                                      env_.cache().capacity(agent), mx);
}

VectorXd QmixTrainer::greedy_bits(const nn::Mlp& qnet, const VectorXd& obs,
                                  bool capacity_ok) const {
  const VectorXd q = qnet.forward(obs);
  VectorXd bits(action_dim_);
  for (int d = 0; d < action_dim_; ++d) bits(d) = q(2 * d + 1) > q(2 * d) ? 1.0 : 0.0;
  if (!capacity_ok) bits(0) = 0.0;
  if (bits(0) < 0.5) bits.tail(action_dim_ - 1).setZero();
  return bits;
}

env::StepDecision QmixTrainer::greedy_decision() {
  const auto& topo = env_.topology();
  const VectorXd s = env_.global_state();
  env::StepDecision d;
  d.caching = env::VectorXi::Zero(topo.node_count);
  d.migration = Eigen::MatrixXi::Zero(topo.node_count, topo.node_count);
  for (int n = 0; n < topo.node_count; ++n) {
    const VectorXd bits = greedy_bits(qnets_[n], agent_obs(s, n), adapter_->capacity_ok(env_, n));
    d.caching(n) = bits(0) >= 0.5 ? 1 : 0;
    int at = 1;
    for (int m = 0; m < topo.node_count; ++m) {
      if (m == n) continue;
      d.migration(n, m) = bits(at++) >= 0.5 ? 1 : 0;
    }
  }
  adapter_->adjust(env_, d);
  d.participation = env::VectorXi::Zero(topo.node_count);
  for (int n = 0; n < topo.node_count; ++n) {
    int sum = d.caching(n);
    for (int m = 0; m < topo.node_count; ++m)
      if (m != n) sum += d.migration(m, n);
    d.participation(n) = std::min(sum, 1);
  }
  d.beamformers = env::VectorXcd::Zero(topo.node_count * topo.antennas);
  return d;
}

trainer::EpisodeStats QmixTrainer::run_episode(int episode) {
  const auto& topo = env_.topology();
  trainer::EpisodeStats stats;
  stats.episode = episode;
  const double eps = epsilon(episode);

  env_.reset(episode);
  adapter_->episode_reset(env_);
  VectorXd q_res = VectorXd::Zero(cfg_.reservoir_dim);

  while (!env_.done()) {
    const VectorXd s = env_.global_state();
    env::StepDecision d;
    d.caching = env::VectorXi::Zero(topo.node_count);
    d.migration = Eigen::MatrixXi::Zero(topo.node_count, topo.node_count);
    VectorXd joint(topo.node_count * action_dim_);
    for (int n = 0; n < topo.node_count; ++n) {
      VectorXd bits = greedy_bits(qnets_[n], agent_obs(s, n), adapter_->capacity_ok(env_, n));
      for (int dim = 0; dim < action_dim_; ++dim)
        if (noise_rng_.uniform() < eps) bits(dim) = noise_rng_.uniform() < 0.5 ? 0.0 : 1.0;
      if (!adapter_->capacity_ok(env_, n)) bits(0) = 0.0;
      if (bits(0) < 0.5) bits.tail(action_dim_ - 1).setZero();
      d.caching(n) = bits(0) >= 0.5 ? 1 : 0;
      int at = 1;
      for (int m = 0; m < topo.node_count; ++m) {
        if (m == n) continue;
        d.migration(n, m) = bits(at++) >= 0.5 ? 1 : 0;
      }
      joint.segment(n * action_dim_, action_dim_) = bits;
    }
    adapter_->adjust(env_, d);
    for (int n = 0; n < topo.node_count; ++n) {
      joint(n * action_dim_) = d.caching(n);
      int at = 1;
      for (int m = 0; m < topo.node_count; ++m) {
        if (m == n) continue;
        joint(n * action_dim_ + at) = d.migration(n, m);
        ++at;
      }
    }
    d.participation = env::VectorXi::Zero(topo.node_count);
    for (int n = 0; n < topo.node_count; ++n) {
      int sum = d.caching(n);
      for (int m = 0; m < topo.node_count; ++m)
        if (m != n) sum += d.migration(m, n);
      d.participation(n) = std::min(sum, 1);
    }
    d.beamformers = env::VectorXcd::Zero(topo.node_count * topo.antennas);

    const auto outcome = delivery::evaluate(env_, d, cfg_.delivery);
    const auto result = env_.apply(d, outcome);
    stats.cum_reward += result.reward;
    stats.cum_reward_learner += result.reward_learner;
    if (result.delivered) {
      stats.total_delay += result.migration_delay + result.broadcast_delay;
      ++stats.delivered_steps;
    } else if (result.requested) {
      ++stats.undelivered_steps;
    }
    if (result.infeasible) ++stats.infeasible_steps;

    marl::ExperienceTuple tuple;
    tuple.s = s;
    tuple.d = joint;
    tuple.r = result.reward_learner;
    tuple.terminal = env_.done();
    tuple.s_next = tuple.terminal ? VectorXd::Zero(s.size()) : env_.global_state();
    tuple.reservoir = q_res;
    VectorXd v(s.size() + joint.size());
    v << s, joint;
    q_res = esn::esn_step_state(esn_, q_res, v);
    buffer_.push(std::move(tuple));
  }

  if (cfg_.use_augmentation) {
    const long budget = esn::synth_budget(episode, cfg_.tau0, env_.steps(), cfg_.attenuation,
                                          cfg_.decay_period);
    const long cap = cfg_.augment_attempt_factor * budget + 10;
    long attempts = 0;
    while (stats.synthetic_added < budget && attempts < cap) {
      ++attempts;
      const marl::ExperienceTuple* t = buffer_.sample_real(augment_rng_);
      if (!t) break;
      VectorXd v(t->s.size() + t->d.size());
      v << t->s, t->d;
      const VectorXd q = esn::esn_step_state(esn_, t->reservoir, v);
      const VectorXd pred = esn::esn_readout(esn_, q);
      VectorXd label(1 + t->s_next.size());
      label << t->r, t->s_next;
      esn_trainer_->observe(q, label);
      esn_.w_out = esn_trainer_->readout();
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

  for (int u = 0; u < cfg_.updates_per_episode; ++u) stats.critic_loss = learn_step();
  soft_update_targets();
  return stats;
}

double QmixTrainer::learn_step() {
  if (buffer_.size() == 0) return 0.0;
  const auto& topo = env_.topology();
  const int agents = topo.node_count;
  const int batch = std::min<std::size_t>(cfg_.batch_size, buffer_.size());

  std::vector<nn::Mlp> grads;
  for (int n = 0; n < agents; ++n) grads.push_back(qnets_[n].zeros_like());
  marl::MixingParams mixing_grads = mixing_.zeros_like();
  double loss = 0.0;

  for (int b = 0; b < batch; ++b) {
    const marl::ExperienceTuple& t = buffer_.sample(batch_rng_);
    VectorXd q_vals(agents);
    std::vector<nn::Mlp::Cache> caches(agents);
    std::vector<VectorXd> raw(agents);
    for (int n = 0; n < agents; ++n) {
      raw[n] = qnets_[n].forward(agent_obs(t.s, n), caches[n]);
      double sum = 0.0;
      for (int dim = 0; dim < action_dim_; ++dim) {
        const int bit = t.d(n * action_dim_ + dim) >= 0.5 ? 1 : 0;
        sum += raw[n](2 * dim + bit);
      }
      q_vals(n) = sum;
    }
    double y = t.r;
    if (!t.terminal) {
      VectorXd q_next(agents);
      for (int n = 0; n < agents; ++n) {
        const VectorXd raw_next = target_qnets_[n].forward(agent_obs(t.s_next, n));
        const bool cap = mask_from_state(t.s_next, n);
        // greedy per-dimension value under the masking rules
        double a_val = cap ? std::max(raw_next(0), raw_next(1)) : raw_next(0);
        const bool a_bit = cap && raw_next(1) > raw_next(0);
        double sum = a_val;
        for (int dim = 1; dim < action_dim_; ++dim)
          sum += a_bit ? std::max(raw_next(2 * dim), raw_next(2 * dim + 1)) : raw_next(2 * dim);
        q_next(n) = sum;
      }
      y += cfg_.gamma * marl::mixing_forward(target_mixing_, t.s_next, q_next);
    }
    marl::MixingCache mix_cache;
    const double qtot = marl::mixing_forward(mixing_, t.s, q_vals, &mix_cache);
    const double err = qtot - y;
    loss += err * err / batch;
    const VectorXd dq = marl::mixing_backward(mixing_, mix_cache, 2.0 * err / batch, mixing_grads);
    for (int n = 0; n < agents; ++n) {
      VectorXd dy = VectorXd::Zero(2 * action_dim_);
      for (int dim = 0; dim < action_dim_; ++dim) {
        const int bit = t.d(n * action_dim_ + dim) >= 0.5 ? 1 : 0;
        dy(2 * dim + bit) += dq(n);
      }
      qnets_[n].backward(caches[n], dy, grads[n]);
    }
  }
  for (int n = 0; n < agents; ++n) {
    VectorXd flat = qnets_[n].flatten();
    flat -= q_opt_[n].step(grads[n].flatten());
    qnets_[n].unflatten(flat);
  }
  VectorXd flat = mixing_.flatten();
  flat -= mixing_opt_.step(mixing_grads.flatten());
  mixing_.unflatten(flat);
  return loss;
}

void QmixTrainer::soft_update_targets() {
  const double rho = cfg_.soft_update;
  if (rho >= 1.0) {
    target_qnets_ = qnets_;
    target_mixing_ = mixing_;
    return;
  }
  for (std::size_t n = 0; n < qnets_.size(); ++n) {
    VectorXd t = target_qnets_[n].flatten();
    t += rho * (qnets_[n].flatten() - t);
    target_qnets_[n].unflatten(t);
  }
  VectorXd tm = target_mixing_.flatten();
  tm += rho * (mixing_.flatten() - tm);
  target_mixing_.unflatten(tm);
}

std::vector<trainer::EpisodeStats> QmixTrainer::train() {
  std::vector<trainer::EpisodeStats> all;
  for (int e = 0; e < cfg_.episodes; ++e) all.push_back(run_episode(e));
  return all;
}

trainer::EvalStats QmixTrainer::evaluate(int episodes, int first_episode_index) {
  trainer::EvalStats stats;
  stats.episodes = episodes;
  for (int ep = 0; ep < episodes; ++ep) {
    env_.reset(first_episode_index + ep);
    adapter_->episode_reset(env_);
    while (!env_.done()) {
      const auto d = greedy_decision();
      const auto outcome = delivery::evaluate(env_, d, cfg_.delivery);
      const auto result = env_.apply(d, outcome);
      stats.mean_reward += result.reward;
      if (result.delivered) {
        stats.total_delay += result.migration_delay + result.broadcast_delay;
      } else if (result.requested) {
        ++stats.undelivered_steps;
        stats.all_delivered = false;
      }
      if (result.infeasible) ++stats.infeasible_steps;
    }
  }
  stats.total_delay /= episodes;
  stats.mean_reward /= episodes;
  return stats;
}

}  // namespace fgamcd::baselines
