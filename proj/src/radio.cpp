#include "fgamcd/radio.hpp"

#include <cmath>
#include <stdexcept>

namespace fgamcd::radio {

double rate_from_amplitude(double amplitude, double noise_power, double bandwidth) {
  if (!(noise_power > 0.0) || !(bandwidth > 0.0))
    throw std::invalid_argument("rate_from_amplitude: noise and bandwidth must be positive");
  return bandwidth * std::log2(1.0 + amplitude * amplitude / noise_power);
}

double downlink_amplitude(const VectorXcd& h_stacked, const std::vector<int>& lambda,
                          const VectorXcd& w_stacked, int antennas_per_node) {
  const int n = static_cast<int>(lambda.size());
  if (h_stacked.size() != n * antennas_per_node || w_stacked.size() != n * antennas_per_node)
    throw std::invalid_argument("downlink_amplitude: dimension mismatch");
  std::complex<double> acc(0.0, 0.0);
  for (int i = 0; i < n; ++i) {
    if (!lambda[i]) continue;
    acc += h_stacked.segment(i * antennas_per_node, antennas_per_node)
               .dot(w_stacked.segment(i * antennas_per_node, antennas_per_node));
  }
  return std::abs(acc);
}

double downlink_rate(const VectorXcd& h_stacked, const std::vector<int>& lambda,
                     const VectorXcd& w_stacked, int antennas_per_node, double noise_power,
                     double bandwidth) {
  return rate_from_amplitude(downlink_amplitude(h_stacked, lambda, w_stacked, antennas_per_node),
                             noise_power, bandwidth);
}

double worst_case_amplitude(const VectorXcd& h_est_masked, const std::vector<MatrixXcd>& error_blocks,
                            const VectorXcd& w_masked, double budget) {
  const int blocks = static_cast<int>(error_blocks.size());
  if (blocks == 0) throw std::invalid_argument("worst_case_amplitude: no error blocks");
  const int m = static_cast<int>(error_blocks[0].rows());
  if (h_est_masked.size() != blocks * m || w_masked.size() != blocks * m)
    throw std::invalid_argument("worst_case_amplitude: dimension mismatch");

  const double nominal = std::abs(h_est_masked.dot(w_masked));
  double cinv_norm_sq = 0.0;
  for (int i = 0; i < blocks; ++i) {
    const VectorXcd wi = w_masked.segment(i * m, m);
    if (wi.squaredNorm() == 0.0) continue;
    // ||C^{-1/2} w||^2 accumulated block-wise via a Hermitian solve
    Eigen::LLT<MatrixXcd> llt(error_blocks[i]);
    if (llt.info() != Eigen::Success)
      throw std::invalid_argument("worst_case_amplitude: error block not positive definite");
    cinv_norm_sq += wi.dot(llt.solve(wi)).real();
  }
  const double shrink = std::sqrt(budget) * std::sqrt(std::max(cinv_norm_sq, 0.0));
  return std::max(nominal - shrink, 0.0);
}

double worst_case_rate(const VectorXcd& h_est_masked, const std::vector<MatrixXcd>& error_blocks,
                       const std::vector<int>& lambda, const VectorXcd& w_stacked,
                       int antennas_per_node, double noise_power, double bandwidth,
                       double budget) {
  VectorXcd w = w_stacked;
  VectorXcd h = h_est_masked;
  for (std::size_t i = 0; i < lambda.size(); ++i) {
    if (!lambda[i]) {
      w.segment(i * antennas_per_node, antennas_per_node).setZero();
      h.segment(i * antennas_per_node, antennas_per_node).setZero();
    }
  }
  const double amp = worst_case_amplitude(h, error_blocks, w, budget);
  return rate_from_amplitude(amp, noise_power, bandwidth);
}

VectorXcd steering_vector(int antennas, double sin_theta) {
  VectorXcd z(antennas);
  for (int m = 0; m < antennas; ++m) {
    const double phase = M_PI * m * sin_theta;
    z(m) = std::complex<double>(std::cos(phase), std::sin(phase));
  }
  return z;
}

VectorXd beampattern(const VectorXcd& w_node, const VectorXd& sin_theta_grid) {
  VectorXd power(sin_theta_grid.size());
  for (int g = 0; g < sin_theta_grid.size(); ++g) {
    const VectorXcd z = steering_vector(static_cast<int>(w_node.size()), sin_theta_grid(g));
    power(g) = std::norm(z.dot(w_node));
  }
  return power;
}

}  // namespace fgamcd::radio
