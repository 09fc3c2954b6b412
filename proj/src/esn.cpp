#include "fgamcd/esn.hpp"

#include <cmath>
#include <stdexcept>

namespace fgamcd::esn {

double spectral_norm(const MatrixXd& m, int iterations) {
  if (m.size() == 0) return 0.0;
  // power iteration on m^T m
  VectorXd v = VectorXd::Ones(m.cols()).normalized();
  for (int i = 0; i < iterations; ++i) {
    VectorXd u = m * v;
    const double n = u.norm();
    if (n == 0.0) return 0.0;
    v = m.transpose() * (u / n);
    const double s = v.norm();
    if (s == 0.0) return 0.0;
    v /= s;
  }
  return (m * v).norm();
}

EsnParams init_esn(int reservoir_dim, int in_dim, int out_dim, double spectral_in,
                   double spectral_re, RngStream& rng) {
  if (!(spectral_re < 1.0))
    throw std::invalid_argument("init_esn: reservoir spectral norm must stay below one");
  EsnParams p;
  p.w_in.resize(reservoir_dim, in_dim);
  p.w_re.resize(reservoir_dim, reservoir_dim);
  for (int i = 0; i < reservoir_dim; ++i) {
    for (int j = 0; j < in_dim; ++j) p.w_in(i, j) = rng.normal();
    for (int j = 0; j < reservoir_dim; ++j) p.w_re(i, j) = rng.normal();
  }
  p.w_in *= spectral_in / std::max(spectral_norm(p.w_in), 1e-12);
  p.w_re *= spectral_re / std::max(spectral_norm(p.w_re), 1e-12);
  p.w_out = MatrixXd::Zero(out_dim, reservoir_dim);
  return p;
}

VectorXd esn_step_state(const EsnParams& params, const VectorXd& q_prev, const VectorXd& v) {
  VectorXd pre = params.w_in * v + params.w_re * q_prev;
  for (int i = 0; i < pre.size(); ++i) pre(i) = std::tanh(pre(i));
  return pre;
}

VectorXd esn_readout(const EsnParams& params, const VectorXd& q) { return params.w_out * q; }

MatrixXd tune_output(const std::vector<VectorXd>& states, const std::vector<VectorXd>& labels,
                     double ridge) {
  if (states.empty() || states.size() != labels.size())
    throw std::invalid_argument("tune_output: need matching nonempty states and labels");
  const int r = static_cast<int>(states[0].size());
  const int out = static_cast<int>(labels[0].size());
  MatrixXd gram = MatrixXd::Zero(r, r);
  MatrixXd cross = MatrixXd::Zero(out, r);
  for (std::size_t i = 0; i < states.size(); ++i) {
    gram.noalias() += states[i] * states[i].transpose();
    cross.noalias() += labels[i] * states[i].transpose();
  }
  gram.diagonal().array() += ridge;
  Eigen::LDLT<MatrixXd> ldlt(gram);
  if (ldlt.info() != Eigen::Success || (ridge == 0.0 && ldlt.rcond() < 1e-14))
    throw std::runtime_error("tune_output: singular normal equations (use ridge > 0)");
  return ldlt.solve(cross.transpose()).transpose();
}

RidgeTrainer::RidgeTrainer(int reservoir_dim, int out_dim, double ridge) {
  if (!(ridge > 0.0)) throw std::invalid_argument("RidgeTrainer: ridge must be positive");
  p_inv_ = MatrixXd::Identity(reservoir_dim, reservoir_dim) / ridge;
  cross_ = MatrixXd::Zero(out_dim, reservoir_dim);
  w_out_ = MatrixXd::Zero(out_dim, reservoir_dim);
}

void RidgeTrainer::observe(const VectorXd& q, const VectorXd& label) {
  // Sherman-Morrison update of (Q^T Q + ridge I)^{-1}
  const VectorXd pq = p_inv_ * q;
  const double denom = 1.0 + q.dot(pq);
  p_inv_.noalias() -= (pq * pq.transpose()) / denom;
  cross_.noalias() += label * q.transpose();
  w_out_ = cross_ * p_inv_;
  ++samples_;
}

bool accept_sample(const VectorXd& prediction, const VectorXd& ground_truth, double xi) {
  if (prediction.size() != ground_truth.size())
    throw std::invalid_argument("accept_sample: dimension mismatch");
  return (prediction - ground_truth).norm() <= xi;
}

long synth_budget(long episode, double tau0, long steps, double attenuation, long decay_period) {
  if (episode < 0) throw std::invalid_argument("synth_budget: episode must be nonnegative");
  if (decay_period < 1) throw std::invalid_argument("synth_budget: decay period must be positive");
  const long stages = episode / decay_period;
  return static_cast<long>(std::floor(tau0 * static_cast<double>(steps) *
                                      std::pow(attenuation, static_cast<double>(stages))));
}

double effective_samples(const BoundConstants& c, double tau0, double xi) {
  const double geo = c.psi_out * c.psi_in * std::sqrt(c.b_s * c.b_s + c.b_d * c.b_d) *
                     (1.0 - std::pow(c.psi_re, static_cast<double>(c.steps))) / (1.0 - c.psi_re);
  const double cap = geo + std::sqrt(c.b_r * c.b_r + c.b_s * c.b_s);
  return static_cast<double>(c.steps) * (1.0 + tau0 - (tau0 / xi) * cap);
}

double theorem1_bound(const BoundConstants& c, double tau0, double xi) {
  if (!(xi > 0.0)) throw std::invalid_argument("theorem1_bound: xi must be positive");
  if (tau0 < 0.0 || tau0 > 1.0) throw std::invalid_argument("theorem1_bound: tau0 must lie in [0,1]");
  const double k_eff = effective_samples(c, tau0, xi);
  if (!(k_eff > 0.0))
    throw std::runtime_error("theorem1_bound: constants give a non-positive sample count");
  const double v = c.b_r / (1.0 - c.gamma);
  const double d1 = 8.0 * std::sqrt(2.0 * k_eff) + 256.0 / v;
  const double d2 = 4.0 * std::sqrt(2.0 * k_eff) + 52.0;
  const double bias = 4.0 * sq(std::max(v - c.varsigma * c.covering_lower, 0.0));
  const double nu = bias + d1 * v * v * std::log(c.covering_upper) / k_eff + d2 * v * v * c.varsigma;
  const double algorithmic =
      4.0 * std::pow(c.gamma, static_cast<double>(c.episodes + 1)) / sq(1.0 - c.gamma) * c.b_r;
  const double statistical =
      c.concentration * (2.0 * c.gamma / sq(1.0 - c.gamma) * std::sqrt(nu) +
                         xi * (1.0 + c.gamma * c.phi_out * c.phi_in));
  return algorithmic + statistical;
}

GridSearchResult bound_grid_search(const BoundConstants& c, const std::vector<double>& tau0_grid,
                                   const std::vector<double>& xi_grid) {
  if (tau0_grid.empty() || xi_grid.empty())
    throw std::invalid_argument("bound_grid_search: empty grid");
  GridSearchResult result;
  result.bound = std::numeric_limits<double>::infinity();
  std::size_t best_i = 0, best_j = 0;
  for (std::size_t i = 0; i < tau0_grid.size(); ++i)
    for (std::size_t j = 0; j < xi_grid.size(); ++j) {
      double b = std::numeric_limits<double>::quiet_NaN();
      try {
        b = theorem1_bound(c, tau0_grid[i], xi_grid[j]);
      } catch (const std::runtime_error&) {
        // rejected grid point (non-positive sample count)
      }
      result.surface.push_back({tau0_grid[i], xi_grid[j], b});
      if (std::isfinite(b) && b < result.bound) {  // ties keep the first point
        result.bound = b;
        result.tau0 = tau0_grid[i];
        result.xi = xi_grid[j];
        best_i = i;
        best_j = j;
      }
    }
  if (!std::isfinite(result.bound))
    throw std::runtime_error("bound_grid_search: every grid point was rejected");
  result.argmin_interior = best_i > 0 && best_i + 1 < tau0_grid.size() && best_j > 0 &&
                           best_j + 1 < xi_grid.size();
  return result;
}

}  // namespace fgamcd::esn
