#pragma once

#include <Eigen/Dense>
#include <complex>
#include <vector>

namespace fgamcd::radio {

using Eigen::MatrixXcd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

// Shannon rate B*log2(1 + |amp|^2 / sigma2) in bit/s.
double rate_from_amplitude(double amplitude, double noise_power, double bandwidth);

// Coherent downlink amplitude |sum_n lambda_n h_n^H w_n| over per-node blocks
// of length m each.
double downlink_amplitude(const VectorXcd& h_stacked, const std::vector<int>& lambda,
                          const VectorXcd& w_stacked, int antennas_per_node);

double downlink_rate(const VectorXcd& h_stacked, const std::vector<int>& lambda,
                     const VectorXcd& w_stacked, int antennas_per_node, double noise_power,
                     double bandwidth);

// Worst-case amplitude over the aggregate error ellipsoid e^H C e <= budget,
// with C block-diagonal over nodes: max{ |h^H w| - sqrt(budget)*||C^{-1/2} w||, 0 }.
// Inputs are the lambda-masked stacked estimate and beamformer; error_blocks
// holds one Hermitian positive-definite block per node (full node count), and
// budget is the node count of the aggregate set.
double worst_case_amplitude(const VectorXcd& h_est_masked, const std::vector<MatrixXcd>& error_blocks,
                            const VectorXcd& w_masked, double budget);

double worst_case_rate(const VectorXcd& h_est_masked, const std::vector<MatrixXcd>& error_blocks,
                       const std::vector<int>& lambda, const VectorXcd& w_stacked,
                       int antennas_per_node, double noise_power, double bandwidth,
                       double budget);

// Half-wavelength uniform linear array steering vector, direction parameter
// u = sin(theta) in [-1, 1].
VectorXcd steering_vector(int antennas, double sin_theta);

// |z(theta)^H w|^2 over a grid of sin(theta) values for one node's beamformer.
VectorXd beampattern(const VectorXcd& w_node, const VectorXd& sin_theta_grid);

}  // namespace fgamcd::radio
