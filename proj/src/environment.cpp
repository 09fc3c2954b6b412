#include "fgamcd/environment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fgamcd::env {

Topology make_topology(int nodes, int users, int antennas, double area_side_m,
                       double visibility_radius_m, RngStream& rng) {
  if (nodes < 1 || users < 1 || antennas < 1)
    throw std::invalid_argument("make_topology: counts must be positive");
  Topology t;
  t.node_count = nodes;
  t.user_count = users;
  t.antennas = antennas;
  t.node_pos.resize(nodes, 2);
  t.user_pos.resize(users, 2);
  for (int n = 0; n < nodes; ++n) {
    t.node_pos(n, 0) = rng.uniform(0.0, area_side_m);
    t.node_pos(n, 1) = rng.uniform(0.0, area_side_m);
  }
  for (int u = 0; u < users; ++u) {
    t.user_pos(u, 0) = rng.uniform(0.0, area_side_m);
    t.user_pos(u, 1) = rng.uniform(0.0, area_side_m);
  }
  t.assoc.resize(users);
  t.users_of.assign(nodes, {});
  for (int u = 0; u < users; ++u) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int n = 0; n < nodes; ++n) {
      const double d = (t.node_pos.row(n) - t.user_pos.row(u)).norm();
      if (d < best_d) {
        best_d = d;
        best = n;
      }
    }
    t.assoc[u] = best;
    t.users_of[best].push_back(u);
  }
  t.visibility = MatrixXi::Zero(nodes, nodes);
  for (int n = 0; n < nodes; ++n)
    for (int m = n + 1; m < nodes; ++m) {
      const int vis = (t.node_pos.row(n) - t.node_pos.row(m)).norm() <= visibility_radius_m ? 1 : 0;
      t.visibility(n, m) = vis;
      t.visibility(m, n) = vis;
    }
  return t;
}

namespace {

// Uniform draw from the complex unit ball of dimension m.
VectorXcd uniform_complex_ball(int m, RngStream& rng) {
  VectorXcd v(m);
  for (int i = 0; i < m; ++i) v(i) = rng.normal_c();
  const double norm = v.norm();
  if (norm == 0.0) return VectorXcd::Zero(m);
  const double radius = std::pow(rng.uniform(), 1.0 / (2.0 * m));
  return v * (radius / norm);
}

}  // namespace

ChannelRealization draw_channels(const Topology& topo, const ChannelModel& model, int steps,
                                 RngStream& rng) {
  ChannelRealization r;
  const int n_count = topo.node_count;
  const int u_count = topo.user_count;
  const int m = topo.antennas;
  const double ref_gain = std::pow(10.0, model.ref_gain_db / 10.0);
  const double kappa = model.rician_factor;
  const double los_coef = std::sqrt(kappa / (1.0 + kappa));
  const double nlos_coef = std::sqrt(1.0 / (1.0 + kappa));
  const double error_radius = 1.0 / std::sqrt(model.error_shape_scale);

  r.h_est.resize(steps);
  r.h_true.resize(steps);
  r.backhaul.resize(steps);
  for (int k = 0; k < steps; ++k) {
    r.h_est[k].assign(n_count, std::vector<VectorXcd>(u_count));
    r.h_true[k].assign(n_count, std::vector<VectorXcd>(u_count));
    for (int n = 0; n < n_count; ++n) {
      for (int u = 0; u < u_count; ++u) {
        const double dx = topo.user_pos(u, 0) - topo.node_pos(n, 0);
        const double dy = topo.user_pos(u, 1) - topo.node_pos(n, 1);
        const double dist = std::max(std::hypot(dx, dy), 1.0);
        const double sin_theta = dy / std::max(std::hypot(dx, dy), 1e-9);
        const double gain = std::sqrt(ref_gain * std::pow(dist, -model.pathloss_exp));
        VectorXcd small = los_coef * radio::steering_vector(m, sin_theta);
        for (int a = 0; a < m; ++a) small(a) += nlos_coef * rng.normal_c();
        r.h_est[k][n][u] = gain * small;
        r.h_true[k][n][u] = r.h_est[k][n][u] + error_radius * uniform_complex_ball(m, rng);
      }
    }
    r.backhaul[k].resize(n_count, n_count);
    for (int n = 0; n < n_count; ++n)
      for (int mm = 0; mm < n_count; ++mm)
        r.backhaul[k](n, mm) = (n == mm) ? 0.0 : rng.uniform(model.backhaul_lo, model.backhaul_hi);
  }
  return r;
}

int participation(int caching, const std::vector<int>& inbound_migrations) {
  int sum = caching;
  for (int b : inbound_migrations) sum += b;
  return std::min(sum, 1);
}

double pb_delay(const StepDecision& decision, double pb_size_bytes, const MatrixXd& backhaul,
                const VectorXd& worst_rates, const std::vector<int>& requesting_users) {
  const double bits = 8.0 * pb_size_bytes;
  double migration = 0.0;
  const int n_count = static_cast<int>(decision.migration.rows());
  for (int n = 0; n < n_count; ++n)
    for (int m = 0; m < n_count; ++m) {
      if (n == m || !decision.migration(n, m)) continue;
      if (!(backhaul(n, m) > 0.0))
        throw std::invalid_argument("pb_delay: migration over non-positive backhaul rate");
      migration += bits / backhaul(n, m);
    }
  double broadcast = 0.0;
  for (int u : requesting_users) {
    const double rate = worst_rates(u);
    if (!(rate > 0.0)) return std::numeric_limits<double>::infinity();
    broadcast = std::max(broadcast, bits / rate);
  }
  return migration + broadcast;
}

double total_delay(const std::vector<double>& per_pb_delays) {
  double sum = 0.0;
  for (double d : per_pb_delays) {
    if (!std::isfinite(d) || d < 0.0)
      throw std::invalid_argument("total_delay: entries must be finite and nonnegative");
    sum += d;
  }
  return sum;
}

double compute_reward(bool pb_requested, int lambda_sum, DeliveryStatus status, double delay,
                      const RewardConfig& cfg) {
  if (!pb_requested) return 0.0;
  if (lambda_sum == 0) return -cfg.r2;
  const double infeasible = (status == DeliveryStatus::infeasible) ? 1.0 : 0.0;
  return -delay - cfg.r1 * infeasible;
}

Environment::Environment(repo::Repository repository, repo::RequestProfile profile, Topology topo,
                         EnvConfig config, std::uint64_t master_seed)
    : repo_(std::move(repository)),
      profile_(std::move(profile)),
      topo_(std::move(topo)),
      cfg_(config),
      master_seed_(master_seed) {
  if (static_cast<int>(profile_.target_model.size()) != topo_.user_count)
    throw std::invalid_argument("Environment: request profile does not match user count");
  cache_.capacity = VectorXd::Constant(topo_.node_count,
                                       cfg_.capacity_fraction * repo_.unique_bytes());
  max_pb_bytes_ = 0.0;
  for (const auto& pb : repo_.pbs) max_pb_bytes_ = std::max(max_pb_bytes_, pb.size_bytes);
  reset(0);
}

void Environment::reset(int episode) {
  const std::uint64_t draw_index = cfg_.redraw_channels_each_episode ? episode : 0;
  auto rng = RngStream::substream(master_seed_, "channels", draw_index);
  realization_ = draw_channels(topo_, cfg_.channel, steps(), rng);
  cache_.remaining = cache_.capacity;
  cache_.cached = MatrixXi::Zero(topo_.node_count, steps());
  step_ = 0;
}

std::vector<int> Environment::requesting_users(int pb_id) const {
  return repo::requesting_users(repo_, profile_, pb_id);
}

std::vector<MatrixXcd> Environment::error_blocks(int /*user*/) const {
  std::vector<MatrixXcd> blocks(topo_.node_count);
  for (int n = 0; n < topo_.node_count; ++n)
    blocks[n] = cfg_.channel.error_shape_scale * MatrixXcd::Identity(topo_.antennas, topo_.antennas);
  return blocks;
}

int Environment::observation_dim(int node) const {
  int dim = 2 + static_cast<int>(topo_.users_of[node].size());
  for (int m = 0; m < topo_.node_count; ++m) {
    if (m == node) continue;
    dim += 2 + static_cast<int>(topo_.users_of[m].size());
  }
  return dim;
}

int Environment::state_dim() const {
  int dim = 0;
  for (int n = 0; n < topo_.node_count; ++n) dim += observation_dim(n);
  return dim;
}

VectorXd Environment::observation(int node) const {
  const int k = step_;
  const int pb = k + 1;
  const auto req = requesting_users(pb);
  auto requested_by = [&](int u) {
    return std::find(req.begin(), req.end(), u) != req.end() ? 1.0 : 0.0;
  };
  VectorXd obs(observation_dim(node));
  int at = 0;
  obs(at++) = repo_.pb_size(pb) / max_pb_bytes_;
  for (int u : topo_.users_of[node]) obs(at++) = requested_by(u);
  obs(at++) = cache_.remaining(node) / cache_.capacity(node);
  for (int m = 0; m < topo_.node_count; ++m) {
    if (m == node) continue;
    const double vis = topo_.visibility(node, m) ? 1.0 : 0.0;
    obs(at++) = vis * realization_.backhaul[k](node, m) / cfg_.channel.backhaul_hi;
    for (int u : topo_.users_of[m]) obs(at++) = vis * requested_by(u);
    obs(at++) = vis * cache_.remaining(m) / cache_.capacity(m);
  }
  return obs;
}

VectorXd Environment::global_state() const {
  VectorXd s(state_dim());
  int at = 0;
  for (int n = 0; n < topo_.node_count; ++n) {
    const VectorXd o = observation(n);
    s.segment(at, o.size()) = o;
    at += static_cast<int>(o.size());
  }
  return s;
}

void Environment::validate_decision(const StepDecision& decision) const {
  const int pb = current_pb();
  const double size = repo_.pb_size(pb);
  for (int n = 0; n < topo_.node_count; ++n) {
    const int a = decision.caching(n);
    if (a != 0 && a != 1) throw std::invalid_argument("validate_decision: caching not binary");
    if (a == 1 && cache_.remaining(n) < size)
      throw std::invalid_argument("validate_decision: caching exceeds remaining capacity");
    for (int m = 0; m < topo_.node_count; ++m) {
      const int b = decision.migration(n, m);
      if (b != 0 && b != 1) throw std::invalid_argument("validate_decision: migration not binary");
      if (n == m && b != 0) throw std::invalid_argument("validate_decision: self-migration");
      if (b == 1 && a == 0)
        throw std::invalid_argument("validate_decision: migration from a non-caching node");
    }
  }
}

StepResult Environment::apply(const StepDecision& decision, const DeliveryOutcome& outcome) {
  if (done()) throw std::logic_error("Environment::apply: episode finished");
  validate_decision(decision);
  const int k = step_;
  const int pb = current_pb();
  const auto req = requesting_users(pb);
  const double size = repo_.pb_size(pb);

  int lambda_sum = 0;
  for (int n = 0; n < topo_.node_count; ++n) {
    std::vector<int> inbound(topo_.node_count, 0);
    for (int m = 0; m < topo_.node_count; ++m)
      if (m != n) inbound[m] = decision.migration(m, n);
    const int lam = participation(decision.caching(n), inbound);
    if (decision.participation.size() == topo_.node_count && decision.participation(n) != lam)
      throw std::invalid_argument("Environment::apply: participation inconsistent with decision");
    lambda_sum += lam;
  }

  StepResult result;
  result.requested = !req.empty();
  result.infeasible = (outcome.status == DeliveryStatus::infeasible);

  double delay = 0.0;
  if (result.requested && lambda_sum > 0) {
    const double bits = 8.0 * size;
    double migration = 0.0;
    for (int n = 0; n < topo_.node_count; ++n)
      for (int m = 0; m < topo_.node_count; ++m)
        if (n != m && decision.migration(n, m))
          migration += bits / realization_.backhaul[k](n, m);
    result.migration_delay = migration;

    // Delivery fails outright when any requesting user is below the rate
    // floor; this feeds the no-delivery penalty instead of an unbounded delay.
    bool floor_violation = false;
    if (outcome.broadcast_delay > 0.0) {
      result.broadcast_delay = outcome.broadcast_delay;
    } else {
      double broadcast = 0.0;
      for (int u : req) {
        const double rate = outcome.user_rates.size() > static_cast<long>(u) ? outcome.user_rates(u) : 0.0;
        if (rate < cfg_.rate_floor) {
          floor_violation = true;
          break;
        }
        broadcast = std::max(broadcast, bits / rate);
      }
      result.broadcast_delay = broadcast;
    }

    if (floor_violation) {
      result.reward = -cfg_.reward.r2;
      result.delivered = false;
      result.infeasible = true;
    } else {
      delay = result.migration_delay + result.broadcast_delay;
      result.reward = compute_reward(true, lambda_sum, outcome.status, delay, cfg_.reward);
      result.delivered = true;
    }
  } else {
    result.reward = compute_reward(result.requested, lambda_sum, outcome.status, 0.0, cfg_.reward);
    result.delivered = false;
  }
  result.reward_learner = result.reward / cfg_.reward_scale;

  // Cache bookkeeping
  for (int n = 0; n < topo_.node_count; ++n) {
    cache_.cached(n, k) = decision.caching(n);
    if (decision.caching(n))
      cache_.remaining(n) = std::max(cache_.remaining(n) - size, 0.0);
  }
  ++step_;
  return result;
}

}  // namespace fgamcd::env
