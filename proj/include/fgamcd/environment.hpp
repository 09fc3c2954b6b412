#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "fgamcd/common.hpp"
#include "fgamcd/radio.hpp"
#include "fgamcd/repository.hpp"

namespace fgamcd::env {

using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::MatrixXi;
using Eigen::VectorXcd;
using Eigen::VectorXd;
using Eigen::VectorXi;

struct Topology {
  MatrixXd node_pos;   // N x 2 (m)
  MatrixXd user_pos;   // U x 2 (m)
  std::vector<int> assoc;           // user -> node
  MatrixXi visibility;              // N x N, symmetric, diagonal unused
  int node_count = 0;
  int user_count = 0;
  int antennas = 0;                 // M per node
  std::vector<std::vector<int>> users_of;  // node -> associated users

  int other_count() const { return node_count - 1; }
};

// Random placement in a square area; users associate with the nearest node and
// nodes within the visibility radius can observe each other.
Topology make_topology(int nodes, int users, int antennas, double area_side_m,
                       double visibility_radius_m, RngStream& rng);

struct ChannelModel {
  double ref_gain_db = -30.0;       // channel gain at 1 m
  double pathloss_exp = 3.0;
  double rician_factor = 3.0;
  double noise_power = 1e-11;       // W (-80 dBm)
  double error_shape_scale = 1e10;  // C_{n,u} = scale * I
  double bandwidth = 4e8;           // Hz
  double p_max = 19.952623149688797;  // W (43 dBm)
  double backhaul_lo = 8e9;         // bit/s
  double backhaul_hi = 12e9;
};

// Per-episode draw: channel estimates, actual channels inside the estimation
// error ellipsoid, and backhaul rates per PB step.
struct ChannelRealization {
  // indexed [k][n][u]
  std::vector<std::vector<std::vector<VectorXcd>>> h_est;
  std::vector<std::vector<std::vector<VectorXcd>>> h_true;
  std::vector<MatrixXd> backhaul;  // [k](n,m), bit/s
};

ChannelRealization draw_channels(const Topology& topo, const ChannelModel& model, int steps,
                                 RngStream& rng);

struct CacheState {
  VectorXd remaining;   // bytes left before caching the current PB
  VectorXd capacity;    // C_n, bytes
  MatrixXi cached;      // N x K history of caching decisions
};

struct StepDecision {
  VectorXi caching;         // a_n
  MatrixXi migration;       // b_{n,m}, diagonal zero
  VectorXi participation;   // lambda_n
  VectorXcd beamformers;    // stacked w in C^{MN}
};

struct RewardConfig {
  double r1 = 10.0;
  double r2 = 10.0;
  double gamma = 0.95;
};

enum class DeliveryStatus { feasible, infeasible, no_participant, not_requested };

// What the beamforming stage hands back to the environment for one PB.
struct DeliveryOutcome {
  DeliveryStatus status = DeliveryStatus::not_requested;
  VectorXcd w;               // stacked beamformer (zero for non-participants)
  VectorXd user_rates;       // certified worst-case rate per user (0 for non-requesters)
  double broadcast_delay = 0.0;  // seconds; overridden modes (e.g. TDMA) fill this directly
  int dc_iterations = 0;
  double rank_residual = 0.0;
};

// lambda_n = min{a_n + sum_m b_{m,n}, 1}
int participation(int caching, const std::vector<int>& inbound_migrations);

// Migration delay plus worst-case broadcast delay for one PB. Sizes are bytes,
// rates bit/s. Returns +inf when a requesting user has a non-positive rate
// (infeasible-delivery signal for the caller's penalty branch).
double pb_delay(const StepDecision& decision, double pb_size_bytes, const MatrixXd& backhaul,
                const VectorXd& worst_rates, const std::vector<int>& requesting_users);

double total_delay(const std::vector<double>& per_pb_delays);

double compute_reward(bool pb_requested, int lambda_sum, DeliveryStatus status, double delay,
                      const RewardConfig& cfg);

struct EnvConfig {
  ChannelModel channel;
  RewardConfig reward;
  double capacity_fraction = 0.4;   // node capacity as a fraction of total model bytes
  bool redraw_channels_each_episode = true;
  double reward_scale = 10.0;       // learner-side reward normalizer
  double rate_floor = 1.0;          // bit/s; certified rate below this is a failed delivery
};

struct StepResult {
  double reward = 0.0;            // raw (seconds / penalties)
  double reward_learner = 0.0;    // reward / reward_scale
  double migration_delay = 0.0;
  double broadcast_delay = 0.0;
  bool requested = false;
  bool delivered = false;
  bool infeasible = false;        // subroutine reported QoS/power infeasibility
};

// The multi-cell caching environment: one instance per scenario; episodes
// iterate over the PB catalogue in id order.
class Environment {
 public:
  Environment(repo::Repository repository, repo::RequestProfile profile, Topology topo,
              EnvConfig config, std::uint64_t master_seed);

  void reset(int episode);
  bool done() const { return step_ >= steps(); }
  int current_step() const { return step_; }          // 0-based index of the next PB
  int current_pb() const { return step_ + 1; }        // 1-based PB id
  int steps() const { return repo_.pb_count(); }

  const repo::Repository& repository() const { return repo_; }
  const repo::RequestProfile& profile() const { return profile_; }
  const Topology& topology() const { return topo_; }
  const EnvConfig& config() const { return cfg_; }
  const ChannelRealization& realization() const { return realization_; }
  const CacheState& cache() const { return cache_; }

  std::vector<int> requesting_users(int pb_id) const;
  bool pb_requested(int pb_id) const { return !requesting_users(pb_id).empty(); }

  // Error-shape blocks C_{n,u} for every node, for the aggregate ellipsoid.
  std::vector<MatrixXcd> error_blocks(int user) const;

  VectorXd observation(int node) const;   // at the current step
  VectorXd global_state() const;
  int observation_dim(int node) const;
  int state_dim() const;

  // Applies caching/migration bookkeeping and computes reward for the current
  // PB from the delivery outcome; advances to the next step.
  StepResult apply(const StepDecision& decision, const DeliveryOutcome& outcome);

  // Eq.-level validity: storage cap and migrate-only-if-cached.
  void validate_decision(const StepDecision& decision) const;

 private:
  repo::Repository repo_;
  repo::RequestProfile profile_;
  Topology topo_;
  EnvConfig cfg_;
  std::uint64_t master_seed_ = 0;
  ChannelRealization realization_;
  CacheState cache_;
  int step_ = 0;
  double max_pb_bytes_ = 0.0;
};

}  // namespace fgamcd::env
