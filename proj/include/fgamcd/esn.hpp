#pragma once

#include <Eigen/Dense>
#include <array>
#include <vector>

#include "fgamcd/common.hpp"

namespace fgamcd::esn {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Echo state network: fixed random input/reservoir weights (spectrally
// rescaled so the echo state property holds), trainable linear readout.
struct EsnParams {
  MatrixXd w_in;   // reservoir x in
  MatrixXd w_re;   // reservoir x reservoir
  MatrixXd w_out;  // out x reservoir
};

EsnParams init_esn(int reservoir_dim, int in_dim, int out_dim, double spectral_in,
                   double spectral_re, RngStream& rng);

double spectral_norm(const MatrixXd& m, int iterations = 200);

// q(k) = tanh(w_in v + w_re q(k-1)); prediction = w_out q(k)
VectorXd esn_step_state(const EsnParams& params, const VectorXd& q_prev, const VectorXd& v);
VectorXd esn_readout(const EsnParams& params, const VectorXd& q);

// Ridge-regularized least squares over (state, label) pairs; exact closed
// form. ridge = 0 requires a nonsingular normal matrix.
MatrixXd tune_output(const std::vector<VectorXd>& states, const std::vector<VectorXd>& labels,
                     double ridge);

// Recursive form of tune_output: rank-one updates of the inverse normal
// matrix keep per-sample cost quadratic in the reservoir size.
class RidgeTrainer {
 public:
  RidgeTrainer(int reservoir_dim, int out_dim, double ridge);
  void observe(const VectorXd& q, const VectorXd& label);
  const MatrixXd& readout() const { return w_out_; }
  long samples() const { return samples_; }

 private:
  MatrixXd p_inv_;   // (Q^T Q + ridge I)^{-1}
  MatrixXd cross_;   // label-state cross moments, out x reservoir
  MatrixXd w_out_;
  long samples_ = 0;
};

bool accept_sample(const VectorXd& prediction, const VectorXd& ground_truth, double xi);

// floor(tau0 * K * attenuation^{floor(e / decay_period)})
long synth_budget(long episode, double tau0, long steps, double attenuation, long decay_period);

// Constants of the critic-convergence bound; covering numbers are inputs.
struct BoundConstants {
  double b_s = 1.0, b_d = 1.0, b_r = 1.0;
  double psi_in = 0.5, psi_re = 0.5, psi_out = 0.5;
  double varsigma = 0.1;
  double phi_in = 0.5, phi_out = 10.0;
  double covering_upper = 201.0;  // U
  double covering_lower = 46.2;   // L
  double gamma = 0.95;
  long episodes = 600;
  long steps = 450;
  double concentration = 1.0;  // free positive scale on the statistical term
};

// Effective per-episode sample count including accepted synthetic samples.
double effective_samples(const BoundConstants& c, double tau0, double xi);

// Closed-form Q-value approximation error bound; throws when the constants
// make the effective sample count non-positive.
double theorem1_bound(const BoundConstants& c, double tau0, double xi);

struct GridSearchResult {
  double tau0 = 0.0, xi = 0.0, bound = 0.0;
  // rows: (tau0, xi, bound); bound is NaN where the constants are rejected
  std::vector<std::array<double, 3>> surface;
  bool argmin_interior = false;
};

GridSearchResult bound_grid_search(const BoundConstants& c, const std::vector<double>& tau0_grid,
                                   const std::vector<double>& xi_grid);

}  // namespace fgamcd::esn
