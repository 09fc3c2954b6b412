#include "fgamcd/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace fgamcd::nn {

double activate(Activation a, double x) {
  switch (a) {
    case Activation::identity: return x;
    case Activation::relu: return x > 0.0 ? x : 0.0;
    case Activation::tanh_act: return std::tanh(x);
    case Activation::elu: return x > 0.0 ? x : std::expm1(x);
    case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-x));
  }
  return x;
}

double activate_grad(Activation a, double x) {
  switch (a) {
    case Activation::identity: return 1.0;
    case Activation::relu: return x > 0.0 ? 1.0 : 0.0;
    case Activation::tanh_act: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Activation::elu: return x > 0.0 ? 1.0 : std::exp(x);
    case Activation::sigmoid: {
      const double s = 1.0 / (1.0 + std::exp(-x));
      return s * (1.0 - s);
    }
  }
  return 1.0;
}

Mlp::Mlp(const std::vector<int>& dims, Activation hidden, Activation output, RngStream& rng) {
  if (dims.size() < 2) throw std::invalid_argument("Mlp: need at least input and output dims");
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    MatrixXd w(dims[l + 1], dims[l]);
    const Activation act = (l + 2 == dims.size()) ? output : hidden;
    const double scale = (act == Activation::relu || act == Activation::elu)
                             ? std::sqrt(2.0 / dims[l])
                             : std::sqrt(1.0 / dims[l]);
    for (int i = 0; i < w.rows(); ++i)
      for (int j = 0; j < w.cols(); ++j) w(i, j) = scale * rng.normal();
    weights.push_back(std::move(w));
    biases.push_back(VectorXd::Zero(dims[l + 1]));
    acts.push_back(act);
  }
}

VectorXd Mlp::forward(const VectorXd& x) const {
  VectorXd h = x;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    VectorXd pre = weights[l] * h + biases[l];
    for (int i = 0; i < pre.size(); ++i) pre(i) = activate(acts[l], pre(i));
    h = std::move(pre);
  }
  return h;
}

VectorXd Mlp::forward(const VectorXd& x, Cache& cache) const {
  cache.input = x;
  cache.pre.clear();
  cache.post.clear();
  VectorXd h = x;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    VectorXd pre = weights[l] * h + biases[l];
    cache.pre.push_back(pre);
    for (int i = 0; i < pre.size(); ++i) pre(i) = activate(acts[l], pre(i));
    cache.post.push_back(pre);
    h = std::move(pre);
  }
  return h;
}

VectorXd Mlp::backward(const Cache& cache, const VectorXd& dy, Mlp& grads) const {
  if (grads.weights.size() != weights.size())
    throw std::invalid_argument("Mlp::backward: gradient holder shape mismatch");
  VectorXd delta = dy;
  for (int l = static_cast<int>(weights.size()) - 1; l >= 0; --l) {
    VectorXd dpre(delta.size());
    for (int i = 0; i < delta.size(); ++i)
      dpre(i) = delta(i) * activate_grad(acts[l], cache.pre[l](i));
    const VectorXd& in = (l == 0) ? cache.input : cache.post[l - 1];
    grads.weights[l].noalias() += dpre * in.transpose();
    grads.biases[l] += dpre;
    delta = weights[l].transpose() * dpre;
  }
  return delta;
}

Mlp Mlp::zeros_like() const {
  Mlp z;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    z.weights.push_back(MatrixXd::Zero(weights[l].rows(), weights[l].cols()));
    z.biases.push_back(VectorXd::Zero(biases[l].size()));
    z.acts.push_back(acts[l]);
  }
  return z;
}

int Mlp::param_count() const {
  int n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l)
    n += static_cast<int>(weights[l].size() + biases[l].size());
  return n;
}

VectorXd Mlp::flatten() const {
  VectorXd flat(param_count());
  int at = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    for (int j = 0; j < weights[l].cols(); ++j)
      for (int i = 0; i < weights[l].rows(); ++i) flat(at++) = weights[l](i, j);
    for (int i = 0; i < biases[l].size(); ++i) flat(at++) = biases[l](i);
  }
  return flat;
}

void Mlp::unflatten(const VectorXd& flat) {
  int at = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    for (int j = 0; j < weights[l].cols(); ++j)
      for (int i = 0; i < weights[l].rows(); ++i) weights[l](i, j) = flat(at++);
    for (int i = 0; i < biases[l].size(); ++i) biases[l](i) = flat(at++);
  }
  if (at != flat.size()) throw std::invalid_argument("Mlp::unflatten: size mismatch");
}

void Mlp::add_scaled(const Mlp& other, double s) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l] += s * other.weights[l];
    biases[l] += s * other.biases[l];
  }
}

void Mlp::zero() {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l].setZero();
    biases[l].setZero();
  }
}

Adam::Adam(int dim, double lr_in, double beta1, double beta2, double eps)
    : lr(lr_in), m_(VectorXd::Zero(dim)), v_(VectorXd::Zero(dim)), beta1_(beta1), beta2_(beta2), eps_(eps) {}

VectorXd Adam::step(const VectorXd& grad) {
  if (m_.size() != grad.size()) throw std::invalid_argument("Adam: dimension mismatch");
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  VectorXd update(grad.size());
  for (int i = 0; i < grad.size(); ++i)
    update(i) = lr * (m_(i) / bc1) / (std::sqrt(v_(i) / bc2) + eps_);
  return update;
}

}  // namespace fgamcd::nn
