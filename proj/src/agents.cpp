#include "fgamcd/agents.hpp"

#include <cmath>
#include <stdexcept>

namespace fgamcd::marl {

double gumbel_binary(double logit, double noise_u, double temperature) {
  if (noise_u <= 0.0 || noise_u >= 1.0)
    throw std::invalid_argument("gumbel_binary: noise must lie in (0,1)");
  if (!(temperature > 0.0)) throw std::invalid_argument("gumbel_binary: temperature must be positive");
  const double z = (logit + std::log(noise_u) - std::log1p(-noise_u)) / temperature;
  return 1.0 / (1.0 + std::exp(-z));
}

double gumbel_binary_dlogit(double logit, double noise_u, double temperature) {
  const double y = gumbel_binary(logit, noise_u, temperature);
  return y * (1.0 - y) / temperature;
}

bool capacity_mask_from_obs(const VectorXd& obs, const ObsLayout& layout, double node_capacity,
                            double max_pb_bytes) {
  const double pb_bytes = obs(0) * max_pb_bytes;
  const double remaining = obs(1 + layout.users_own) * node_capacity;
  return remaining >= pb_bytes;
}

int ActorParams::param_count() const {
  int n = embed.param_count() + logit.param_count();
  for (const auto& o : others) n += o.param_count();
  return n;
}

VectorXd ActorParams::flatten() const {
  VectorXd flat(param_count());
  int at = 0;
  auto put = [&](const Mlp& m) {
    const VectorXd f = m.flatten();
    flat.segment(at, f.size()) = f;
    at += static_cast<int>(f.size());
  };
  put(embed);
  put(logit);
  for (const auto& o : others) put(o);
  return flat;
}

void ActorParams::unflatten(const VectorXd& flat) {
  int at = 0;
  auto take = [&](Mlp& m) {
    const int n = m.param_count();
    m.unflatten(flat.segment(at, n));
    at += n;
  };
  take(embed);
  take(logit);
  for (auto& o : others) take(o);
}

ActorParams ActorParams::zeros_like() const {
  ActorParams z;
  z.action_semantics = action_semantics;
  z.embed = embed.zeros_like();
  z.logit = logit.zeros_like();
  for (const auto& o : others) z.others.push_back(o.zeros_like());
  return z;
}

void ActorParams::add_scaled(const ActorParams& other, double s) {
  embed.add_scaled(other.embed, s);
  logit.add_scaled(other.logit, s);
  for (std::size_t i = 0; i < others.size(); ++i) others[i].add_scaled(other.others[i], s);
}

ActorParams make_actor(const ObsLayout& layout, int other_count, int embed_dim, int hidden,
                       bool action_semantics, RngStream& rng) {
  using nn::Activation;
  ActorParams p;
  p.action_semantics = action_semantics;
  if (action_semantics) {
    p.embed = Mlp({layout.total, hidden, hidden, embed_dim}, Activation::relu,
                  Activation::identity, rng);
    p.logit =
        Mlp({layout.total, hidden, hidden, 1}, Activation::relu, Activation::identity, rng);
    for (int m = 0; m < other_count; ++m) {
      const int span_len = layout.other_spans[m].second;
      p.others.push_back(
          Mlp({span_len, hidden, hidden, embed_dim}, Activation::relu, Activation::identity, rng));
    }
  } else {
    // single black-box network emitting every action logit
    p.logit = Mlp({layout.total, hidden, hidden, 1 + other_count}, Activation::relu,
                  Activation::identity, rng);
    // placeholder zero-size embeds keep the layout uniform
    p.embed = Mlp({1, 1}, Activation::identity, Activation::identity, rng);
    p.embed.weights[0].setZero();
    p.embed.biases[0].setZero();
  }
  return p;
}

VectorXd actor_forward(const ActorParams& params, const ObsLayout& layout, const VectorXd& obs,
                       const ActorNoise& noise, double temperature, bool capacity_ok,
                       ActorCache* cache) {
  const int others = static_cast<int>(layout.other_spans.size());
  ActorCache local;
  ActorCache& c = cache ? *cache : local;
  c.noise = noise;
  c.temp = temperature;
  c.mask_cap = capacity_ok;
  c.logits.resize(1 + others);

  if (params.action_semantics) {
    c.e_own = params.embed.forward(obs, c.embed_cache);
    const VectorXd raw = params.logit.forward(obs, c.logit_cache);
    c.logits(0) = raw(0);
    c.e_other.resize(others);
    c.other_caches.resize(others);
    for (int m = 0; m < others; ++m) {
      const auto [off, len] = layout.other_spans[m];
      c.e_other[m] = params.others[m].forward(obs.segment(off, len), c.other_caches[m]);
      c.logits(1 + m) = c.e_own.dot(c.e_other[m]);
    }
  } else {
    const VectorXd raw = params.logit.forward(obs, c.logit_cache);
    c.logits = raw;
  }

  VectorXd action(1 + others);
  const double a = capacity_ok ? gumbel_binary(c.logits(0), noise.a, temperature) : 0.0;
  action(0) = a;
  c.mask_b = capacity_ok && a >= 0.5;
  for (int m = 0; m < others; ++m)
    action(1 + m) = c.mask_b ? gumbel_binary(c.logits(1 + m), noise.b(m), temperature) : 0.0;
  c.action = action;
  return action;
}

void actor_backward(const ActorParams& params, const ObsLayout& layout, const ActorCache& cache,
                    const VectorXd& daction, ActorParams& grads) {
  const int others = static_cast<int>(layout.other_spans.size());
  VectorXd dlogits = VectorXd::Zero(1 + others);
  if (cache.mask_cap)
    dlogits(0) = daction(0) * gumbel_binary_dlogit(cache.logits(0), cache.noise.a, cache.temp);
  for (int m = 0; m < others; ++m)
    if (cache.mask_b)
      dlogits(1 + m) =
          daction(1 + m) * gumbel_binary_dlogit(cache.logits(1 + m), cache.noise.b(m), cache.temp);

  if (params.action_semantics) {
    VectorXd dy(1);
    dy(0) = dlogits(0);
    params.logit.backward(cache.logit_cache, dy, grads.logit);
    VectorXd de_own = VectorXd::Zero(cache.e_own.size());
    for (int m = 0; m < others; ++m) {
      if (dlogits(1 + m) == 0.0) continue;
      de_own += dlogits(1 + m) * cache.e_other[m];
      const VectorXd de_m = dlogits(1 + m) * cache.e_own;
      params.others[m].backward(cache.other_caches[m], de_m, grads.others[m]);
    }
    params.embed.backward(cache.embed_cache, de_own, grads.embed);
  } else {
    params.logit.backward(cache.logit_cache, dlogits, grads.logit);
  }
}

int MixingParams::param_count() const {
  return hyper_w1.param_count() + hyper_b1.param_count() + hyper_w2.param_count() +
         hyper_b2.param_count();
}

VectorXd MixingParams::flatten() const {
  VectorXd flat(param_count());
  int at = 0;
  for (const Mlp* m : {&hyper_w1, &hyper_b1, &hyper_w2, &hyper_b2}) {
    const VectorXd f = m->flatten();
    flat.segment(at, f.size()) = f;
    at += static_cast<int>(f.size());
  }
  return flat;
}

void MixingParams::unflatten(const VectorXd& flat) {
  int at = 0;
  for (Mlp* m : {&hyper_w1, &hyper_b1, &hyper_w2, &hyper_b2}) {
    const int n = m->param_count();
    m->unflatten(flat.segment(at, n));
    at += n;
  }
}

MixingParams MixingParams::zeros_like() const {
  MixingParams z;
  z.agents = agents;
  z.hidden = hidden;
  z.hyper_w1 = hyper_w1.zeros_like();
  z.hyper_b1 = hyper_b1.zeros_like();
  z.hyper_w2 = hyper_w2.zeros_like();
  z.hyper_b2 = hyper_b2.zeros_like();
  return z;
}

void MixingParams::add_scaled(const MixingParams& other, double s) {
  hyper_w1.add_scaled(other.hyper_w1, s);
  hyper_b1.add_scaled(other.hyper_b1, s);
  hyper_w2.add_scaled(other.hyper_w2, s);
  hyper_b2.add_scaled(other.hyper_b2, s);
}

MixingParams make_mixing(int agents, int state_dim, int hidden, RngStream& rng) {
  using nn::Activation;
  MixingParams p;
  p.agents = agents;
  p.hidden = hidden;
  p.hyper_w1 = Mlp({state_dim, agents * hidden}, Activation::identity, Activation::identity, rng);
  p.hyper_b1 = Mlp({state_dim, hidden}, Activation::identity, Activation::identity, rng);
  p.hyper_w2 = Mlp({state_dim, hidden}, Activation::identity, Activation::identity, rng);
  p.hyper_b2 = Mlp({state_dim, hidden, 1}, Activation::relu, Activation::identity, rng);
  return p;
}

double mixing_forward(const MixingParams& params, const VectorXd& state, const VectorXd& q,
                      MixingCache* cache) {
  if (q.size() != params.agents) throw std::invalid_argument("mixing_forward: q size mismatch");
  MixingCache local;
  MixingCache& c = cache ? *cache : local;
  c.q = q;
  c.w1_raw = params.hyper_w1.forward(state, c.w1_cache);
  c.b1 = params.hyper_b1.forward(state, c.b1_cache);
  c.w2_raw = params.hyper_w2.forward(state, c.w2_cache);
  c.b2 = params.hyper_b2.forward(state, c.b2_cache)(0);

  c.pre1.resize(params.hidden);
  c.h1.resize(params.hidden);
  for (int h = 0; h < params.hidden; ++h) {
    double acc = c.b1(h);
    for (int a = 0; a < params.agents; ++a)
      acc += std::abs(c.w1_raw(h * params.agents + a)) * q(a);
    c.pre1(h) = acc;
    c.h1(h) = nn::activate(nn::Activation::elu, acc);
  }
  double out = c.b2;
  for (int h = 0; h < params.hidden; ++h) out += std::abs(c.w2_raw(h)) * c.h1(h);
  return out;
}

VectorXd mixing_backward(const MixingParams& params, const MixingCache& cache, double dqtot,
                         MixingParams& grads) {
  const int agents = params.agents;
  const int hidden = params.hidden;

  VectorXd db2(1);
  db2(0) = dqtot;
  params.hyper_b2.backward(cache.b2_cache, db2, grads.hyper_b2);

  VectorXd dw2_raw(hidden);
  VectorXd dpre1(hidden);
  for (int h = 0; h < hidden; ++h) {
    const double w2 = std::abs(cache.w2_raw(h));
    dw2_raw(h) = dqtot * cache.h1(h) * (cache.w2_raw(h) >= 0.0 ? 1.0 : -1.0);
    dpre1(h) = dqtot * w2 * nn::activate_grad(nn::Activation::elu, cache.pre1(h));
  }
  params.hyper_w2.backward(cache.w2_cache, dw2_raw, grads.hyper_w2);
  params.hyper_b1.backward(cache.b1_cache, dpre1, grads.hyper_b1);

  VectorXd dw1_raw(agents * hidden);
  VectorXd dq = VectorXd::Zero(agents);
  for (int h = 0; h < hidden; ++h)
    for (int a = 0; a < agents; ++a) {
      const double raw = cache.w1_raw(h * agents + a);
      dw1_raw(h * agents + a) = dpre1(h) * cache.q(a) * (raw >= 0.0 ? 1.0 : -1.0);
      dq(a) += dpre1(h) * std::abs(raw);
    }
  params.hyper_w1.backward(cache.w1_cache, dw1_raw, grads.hyper_w1);
  return dq;
}

void ReplayBuffer::push(ExperienceTuple tuple) {
  if (items_.size() < capacity_) {
    items_.push_back(std::move(tuple));
    if (items_.back().reservoir.size() > 0) real_indices_.push_back(items_.size() - 1);
  } else {
    items_[next_] = std::move(tuple);
    rebuild_real_index();
    next_ = (next_ + 1) % capacity_;
  }
}

void ReplayBuffer::rebuild_real_index() {
  real_indices_.clear();
  for (std::size_t i = 0; i < items_.size(); ++i)
    if (items_[i].reservoir.size() > 0) real_indices_.push_back(i);
}

const ExperienceTuple& ReplayBuffer::sample(RngStream& rng) const {
  if (items_.empty()) throw std::logic_error("ReplayBuffer::sample: empty buffer");
  return items_[rng.uniform_int(items_.size())];
}

const ExperienceTuple* ReplayBuffer::sample_real(RngStream& rng) const {
  if (real_indices_.empty()) return nullptr;
  return &items_[real_indices_[rng.uniform_int(real_indices_.size())]];
}

}  // namespace fgamcd::marl
