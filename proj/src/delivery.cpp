#include "fgamcd/delivery.hpp"

#include <algorithm>
#include <cmath>

namespace fgamcd::delivery {

using env::DeliveryOutcome;
using env::DeliveryStatus;

TransmissionMode hybrid_multicast_mode(int requesting_count, double eps_hot) {
  if (eps_hot < 0.0) throw std::invalid_argument("hybrid_multicast_mode: eps_hot must be >= 0");
  return requesting_count > eps_hot ? TransmissionMode::comp_broadcast
                                    : TransmissionMode::unicast;
}

beam::BeamformingInstance make_instance(const env::Environment& e,
                                        const std::vector<int>& lambda, double dc_penalty) {
  const auto& topo = e.topology();
  const auto& cfg = e.config().channel;
  const int k = e.current_step();
  const int pb = e.current_pb();
  const int m = topo.antennas;

  beam::BeamformingInstance in;
  in.lambda = lambda;
  in.antennas_per_node = m;
  in.pb_size_bytes = e.repository().pb_size(pb);
  in.bandwidth = cfg.bandwidth;
  in.p_max = cfg.p_max;
  in.dc_penalty = dc_penalty;
  in.noise_power = Eigen::VectorXd::Constant(topo.user_count, cfg.noise_power);
  in.qos_bps = Eigen::VectorXd::Zero(topo.user_count);
  in.request_flags.assign(topo.user_count, 0);
  for (int u : e.requesting_users(pb)) in.request_flags[u] = 1;
  for (int u = 0; u < topo.user_count; ++u) in.qos_bps(u) = e.profile().qos_bps[u];

  in.h_est_stacked.resize(topo.user_count);
  in.error_blocks.resize(topo.user_count);
  for (int u = 0; u < topo.user_count; ++u) {
    Eigen::VectorXcd h = Eigen::VectorXcd::Zero(topo.node_count * m);
    for (int n = 0; n < topo.node_count; ++n)
      if (lambda[n]) h.segment(n * m, m) = e.realization().h_est[k][n][u];
    in.h_est_stacked[u] = h;
    in.error_blocks[u] = e.error_blocks(u);
  }
  return in;
}

namespace {

std::vector<int> lambda_from_decision(const env::StepDecision& d) {
  const int n_count = static_cast<int>(d.caching.size());
  std::vector<int> lambda(n_count, 0);
  for (int n = 0; n < n_count; ++n) {
    int sum = d.caching(n);
    for (int mm = 0; mm < n_count; ++mm)
      if (mm != n) sum += d.migration(mm, n);
    lambda[n] = std::min(sum, 1);
  }
  return lambda;
}

// rates the delivery design believes in: certified worst case for the robust
// design, estimated-CSI rates otherwise
Eigen::VectorXd design_rates(const beam::BeamformingInstance& in, const Eigen::VectorXcd& w,
                             bool robust) {
  if (robust) return beam::certify_worst_case(in, w);
  Eigen::VectorXd rates(in.user_count());
  std::vector<int> all_ones(in.node_count(), 1);
  for (int u = 0; u < in.user_count(); ++u)
    rates(u) = radio::downlink_rate(in.h_est_stacked[u], all_ones, w, in.antennas_per_node,
                                    in.noise_power(u), in.bandwidth);
  return rates;
}

DeliveryOutcome broadcast_outcome(const env::Environment& e, const beam::BeamformingInstance& in,
                                  const Config& cfg) {
  DeliveryOutcome out;
  const auto req = e.requesting_users(e.current_pb());

  // exact single-requester path when the error shapes allow it
  if (cfg.use_closed_form_single_user && req.size() == 1 && cfg.solver.robust) {
    if (auto fast = beam::solve_single_user(in)) {
      out.status = fast->status;
      out.w = fast->w;
      out.user_rates = fast->certified_rates;
      out.rank_residual = fast->rank_residual;
      out.dc_iterations = fast->dc_iterations;
      if (out.status == DeliveryStatus::infeasible) {
        // keep the best-effort beamformer; the environment decides penalties
      }
      return out;
    }
  }

  beam::SolverConfig scfg = cfg.solver;
  const auto sol = beam::solve_pb_beamforming(in, scfg);
  out.dc_iterations = sol.dc_iterations;
  out.rank_residual = sol.rank_residual;
  if (sol.status == DeliveryStatus::feasible) {
    out.status = DeliveryStatus::feasible;
    out.w = sol.w;
    out.user_rates = cfg.solver.robust ? sol.certified_rates : design_rates(in, sol.w, false);
  } else {
    // QoS unattainable: fall back to full-power MRT toward the hardest
    // requester so the delay term remains defined
    out.status = DeliveryStatus::infeasible;
    int hardest = req.front();
    for (int u : req)
      if (in.qos_bps(u) > in.qos_bps(hardest)) hardest = u;
    out.w = beam::mrt_beamformer(in, hardest);
    out.user_rates = design_rates(in, out.w, cfg.solver.robust);
  }
  return out;
}

DeliveryOutcome tdma_outcome(const env::Environment& e, const beam::BeamformingInstance& in,
                             const Config& cfg) {
  DeliveryOutcome out;
  const auto req = e.requesting_users(e.current_pb());
  const double bits = 8.0 * in.pb_size_bytes;
  out.user_rates = Eigen::VectorXd::Zero(in.user_count());
  out.status = DeliveryStatus::feasible;
  double delay = 0.0;
  bool floor_hit = false;
  for (int u : req) {
    const Eigen::VectorXcd w_u = beam::mrt_beamformer(in, u);
    const Eigen::VectorXd rates = design_rates(in, w_u, cfg.solver.robust);
    out.user_rates(u) = rates(u);
    if (rates(u) < e.config().rate_floor) {
      floor_hit = true;
      continue;
    }
    delay += bits / rates(u);
    if (rates(u) < in.qos_bps(u)) out.status = DeliveryStatus::infeasible;
  }
  if (floor_hit) {
    out.status = DeliveryStatus::infeasible;
    out.user_rates.setZero();  // signals delivery failure to the environment
    out.broadcast_delay = 0.0;
  } else {
    out.broadcast_delay = delay;
  }
  out.w = Eigen::VectorXcd::Zero(in.stacked_dim());
  return out;
}

DeliveryOutcome per_node_outcome(const env::Environment& e, const env::StepDecision& decision,
                                 const Config& cfg) {
  DeliveryOutcome out;
  const auto& topo = e.topology();
  const auto req = e.requesting_users(e.current_pb());
  const double bits = 8.0 * e.repository().pb_size(e.current_pb());
  out.user_rates = Eigen::VectorXd::Zero(topo.user_count);
  out.status = DeliveryStatus::feasible;
  out.w = Eigen::VectorXcd::Zero(topo.node_count * topo.antennas);

  double worst_node_delay = 0.0;
  bool failure = false;
  for (int n = 0; n < topo.node_count && !failure; ++n) {
    std::vector<int> mine;
    for (int u : req)
      if (topo.assoc[u] == n) mine.push_back(u);
    if (mine.empty()) continue;
    if (!decision.caching(n)) {
      failure = true;  // an unserved requester fails the whole PB delivery
      break;
    }
    std::vector<int> lambda(topo.node_count, 0);
    lambda[n] = 1;
    auto in = make_instance(e, lambda, cfg.dc_penalty);
    for (int u = 0; u < topo.user_count; ++u)
      in.request_flags[u] = std::find(mine.begin(), mine.end(), u) != mine.end() ? 1 : 0;
    DeliveryOutcome node_out = broadcast_outcome(e, in, cfg);
    double slowest = 0.0;
    for (int u : mine) {
      out.user_rates(u) = node_out.user_rates(u);
      if (node_out.user_rates(u) < e.config().rate_floor) {
        failure = true;
        break;
      }
      slowest = std::max(slowest, bits / node_out.user_rates(u));
    }
    if (node_out.status == DeliveryStatus::infeasible) out.status = DeliveryStatus::infeasible;
    worst_node_delay = std::max(worst_node_delay, slowest);
  }
  if (failure) {
    out.status = DeliveryStatus::infeasible;
    out.user_rates.setZero();
    out.broadcast_delay = 0.0;
  } else {
    out.broadcast_delay = worst_node_delay;
  }
  return out;
}

DeliveryOutcome unicast_outcome(const env::Environment& e, const std::vector<int>& lambda,
                                const Config& cfg) {
  DeliveryOutcome out;
  const auto& topo = e.topology();
  const auto req = e.requesting_users(e.current_pb());
  const double bits = 8.0 * e.repository().pb_size(e.current_pb());
  out.user_rates = Eigen::VectorXd::Zero(topo.user_count);
  out.status = DeliveryStatus::feasible;
  out.w = Eigen::VectorXcd::Zero(topo.node_count * topo.antennas);
  double delay = 0.0;
  bool failure = false;
  for (int u : req) {
    // associated node if participating, else the nearest participating node
    int serve = -1;
    if (lambda[topo.assoc[u]]) {
      serve = topo.assoc[u];
    } else {
      double best = std::numeric_limits<double>::infinity();
      for (int n = 0; n < topo.node_count; ++n) {
        if (!lambda[n]) continue;
        const double d = (topo.node_pos.row(n) - topo.user_pos.row(u)).norm();
        if (d < best) {
          best = d;
          serve = n;
        }
      }
    }
    if (serve < 0) {
      failure = true;
      break;
    }
    std::vector<int> solo(topo.node_count, 0);
    solo[serve] = 1;
    auto in = make_instance(e, solo, cfg.dc_penalty);
    const Eigen::VectorXcd w_u = beam::mrt_beamformer(in, u);
    const Eigen::VectorXd rates = design_rates(in, w_u, cfg.solver.robust);
    out.user_rates(u) = rates(u);
    if (rates(u) < e.config().rate_floor) {
      failure = true;
      break;
    }
    delay += bits / rates(u);
    if (rates(u) < in.qos_bps(u)) out.status = DeliveryStatus::infeasible;
  }
  if (failure) {
    out.status = DeliveryStatus::infeasible;
    out.user_rates.setZero();
    out.broadcast_delay = 0.0;
  } else {
    out.broadcast_delay = delay;
  }
  return out;
}

}  // namespace

DeliveryOutcome evaluate(const env::Environment& e, const env::StepDecision& decision,
                         const Config& cfg) {
  DeliveryOutcome out;
  const auto req = e.requesting_users(e.current_pb());
  const auto& topo = e.topology();
  out.user_rates = Eigen::VectorXd::Zero(topo.user_count);
  out.w = Eigen::VectorXcd::Zero(topo.node_count * topo.antennas);
  if (req.empty()) {
    out.status = DeliveryStatus::not_requested;
    return out;
  }
  const auto lambda = lambda_from_decision(decision);
  const int lambda_sum = std::accumulate(lambda.begin(), lambda.end(), 0);
  if (lambda_sum == 0) {
    out.status = DeliveryStatus::no_participant;
    return out;
  }

  switch (cfg.mode) {
    case Mode::comp_broadcast:
      return broadcast_outcome(e, make_instance(e, lambda, cfg.dc_penalty), cfg);
    case Mode::tdma_unicast:
      return tdma_outcome(e, make_instance(e, lambda, cfg.dc_penalty), cfg);
    case Mode::per_node:
      return per_node_outcome(e, decision, cfg);
    case Mode::hybrid_multicast: {
      if (hybrid_multicast_mode(static_cast<int>(req.size()), cfg.hybrid_threshold) ==
          TransmissionMode::comp_broadcast)
        return broadcast_outcome(e, make_instance(e, lambda, cfg.dc_penalty), cfg);
      return unicast_outcome(e, lambda, cfg);
    }
  }
  return out;
}

}  // namespace fgamcd::delivery
