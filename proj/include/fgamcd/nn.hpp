#pragma once

#include <Eigen/Dense>
#include <vector>

#include "fgamcd/common.hpp"

namespace fgamcd::nn {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Activation { identity, relu, tanh_act, elu, sigmoid };

double activate(Activation a, double x);
double activate_grad(Activation a, double x);  // derivative at pre-activation x

// Dense feed-forward network with explicit forward caches and backward passes;
// sized for the small per-agent networks used here.
class Mlp {
 public:
  Mlp() = default;
  // dims = {in, hidden..., out}; hidden activation applied to all but the last
  // layer, `output` to the last
  Mlp(const std::vector<int>& dims, Activation hidden, Activation output, RngStream& rng);

  struct Cache {
    VectorXd input;
    std::vector<VectorXd> pre;   // pre-activations per layer
    std::vector<VectorXd> post;  // post-activations per layer
  };

  VectorXd forward(const VectorXd& x) const;
  VectorXd forward(const VectorXd& x, Cache& cache) const;
  // Accumulates parameter gradients into `grads` (must be same-shaped; use
  // zeros_like) and returns the gradient w.r.t. the input.
  VectorXd backward(const Cache& cache, const VectorXd& dy, Mlp& grads) const;

  Mlp zeros_like() const;
  int param_count() const;
  VectorXd flatten() const;
  void unflatten(const VectorXd& flat);
  void add_scaled(const Mlp& other, double s);  // this += s * other
  void zero();

  int input_dim() const { return weights.empty() ? 0 : static_cast<int>(weights.front().cols()); }
  int output_dim() const { return weights.empty() ? 0 : static_cast<int>(weights.back().rows()); }

  std::vector<MatrixXd> weights;
  std::vector<VectorXd> biases;
  std::vector<Activation> acts;  // one per layer
};

// Adam over a flat parameter vector.
class Adam {
 public:
  Adam() = default;
  explicit Adam(int dim, double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);
  // returns the update to subtract from the parameters
  VectorXd step(const VectorXd& grad);
  double lr = 1e-3;

 private:
  VectorXd m_, v_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
};

}  // namespace fgamcd::nn
