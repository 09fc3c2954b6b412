#pragma once

#include <optional>
#include <vector>

#include "fgamcd/conic.hpp"
#include "fgamcd/environment.hpp"
#include "fgamcd/radio.hpp"

namespace fgamcd::beam {

using Eigen::MatrixXcd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

// One PB's broadcast design problem. Stacked quantities live in C^{MN} with
// non-participating node blocks zeroed; error blocks cover every node so the
// aggregate ellipsoid budget equals the node count.
struct BeamformingInstance {
  std::vector<int> lambda;                           // participation per node
  int antennas_per_node = 0;                         // M
  std::vector<VectorXcd> h_est_stacked;              // per user, masked
  std::vector<std::vector<MatrixXcd>> error_blocks;  // per user, per node
  VectorXd qos_bps;                                  // Q_u
  std::vector<int> request_flags;                    // indicator per user
  double pb_size_bytes = 0.0;
  double bandwidth = 0.0;
  VectorXd noise_power;                              // sigma_u^2
  double p_max = 0.0;
  double dc_penalty = 1.0;                           // mu

  int node_count() const { return static_cast<int>(lambda.size()); }
  int user_count() const { return static_cast<int>(request_flags.size()); }
  int stacked_dim() const { return node_count() * antennas_per_node; }
};

struct BeamformingSolution {
  env::DeliveryStatus status = env::DeliveryStatus::infeasible;
  MatrixXcd W;                  // MN x MN covariance (zero on non-participants)
  VectorXcd w;                  // rank-one factor
  double zeta = 0.0;            // max feasible rate/size ratio (1/s)
  VectorXd eps_qos, eps_delay;  // S-Procedure multipliers per user (0 for non-requesters)
  double rank_residual = 0.0;   // tr(W) - ||W||
  VectorXd certified_rates;     // closed-form worst-case rate per user
  int dc_iterations = 0;
  int bisection_probes = 0;
  std::vector<double> dc_objectives;  // penalty objective after each DC solve
  std::vector<double> dc_mu;          // penalty weight in force at each DC solve
};

struct SolverConfig {
  double tol = 1e-7;             // conic tolerance for DC solves
  double probe_tol = 3e-5;       // conic tolerance for bisection probes
  double bisect_rel_tol = 1e-4;  // relative tolerance on zeta
  double rank_tol = 1e-6;        // DC stop at rank_residual <= rank_tol * tr(W)
  double rank_plateau = 3e-6;    // acceptable residual when progress stops
  int dc_max_iter = 10;
  int mu_escalations = 6;        // doubling cap for the DC penalty
  int max_admm_iter = 50000;
  double feas_margin = 1e-4;     // phase-1 slack level counted as feasible
  bool robust = true;            // false: constraints hold on estimated CSI only
  bool allow_closed_form = true; // exact single-requester dispatch
};

// Numeric S-Procedure blocks (full stacked dimension MN+1); vacuous for
// non-requesting users, signalled by nullopt.
std::optional<MatrixXcd> build_qos_lmi(const BeamformingInstance& instance, int user,
                                       const MatrixXcd& W, double eps1);
std::optional<MatrixXcd> build_delay_lmi(const BeamformingInstance& instance, int user,
                                         const MatrixXcd& W, double eps2, double zeta);

// Bisection over the delay variable with a DC rank-one refinement at the
// largest feasible value. Requires at least one participant and one requester.
BeamformingSolution solve_pb_beamforming(const BeamformingInstance& instance,
                                         const SolverConfig& config = {});

// Closed-form worst-case rates for a given beamformer, independent of the
// conic machinery.
VectorXd certify_worst_case(const BeamformingInstance& instance, const VectorXcd& w);

// Exact solution for a single requesting user with isotropic per-node error
// shapes: per-node phase-aligned transmission with active-set power loading.
// Returns nullopt when the preconditions do not hold.
std::optional<BeamformingSolution> solve_single_user(const BeamformingInstance& instance);

// Per-node maximum ratio transmission toward one user at full power.
VectorXcd mrt_beamformer(const BeamformingInstance& instance, int user);

}  // namespace fgamcd::beam
