#include <doctest.h>

#include "fgamcd/esn.hpp"
#include "support/oracles.hpp"

using namespace fgamcd;
using namespace fgamcd::esn;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_SUITE_BEGIN("esn");

TEST_CASE("initialization satisfies the echo state property exactly") {
  RngStream rng(81);
  auto p = init_esn(32, 7, 5, 0.5, 0.5, rng);
  CHECK(spectral_norm(p.w_in) == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(spectral_norm(p.w_re) == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(p.w_out.isZero());
  CHECK_THROWS(init_esn(8, 2, 2, 0.5, 1.0, rng));
}

TEST_CASE("reservoir step basics") {
  RngStream rng(82);
  auto p = init_esn(16, 4, 3, 0.5, 0.5, rng);
  SUBCASE("zero state and input stay zero") {
    const VectorXd q = esn_step_state(p, VectorXd::Zero(16), VectorXd::Zero(4));
    CHECK(q.norm() == 0.0);
    CHECK(esn_readout(p, q).norm() == 0.0);
  }
  SUBCASE("state norm obeys the geometric-series bound") {
    // ||q(k)|| <= psi_in * sqrt(Bs^2 + Bd^2) * (1 - psi_re^k) / (1 - psi_re)
    const double psi_in = 0.5, psi_re = 0.5;
    const double input_bound = 1.0;  // inputs scaled into the unit ball below
    VectorXd q = VectorXd::Zero(16);
    for (int k = 1; k <= 50; ++k) {
      VectorXd v = VectorXd::Random(4);
      v *= input_bound / std::max(v.norm(), 1e-12);
      q = esn_step_state(p, q, v);
      const double bound =
          psi_in * input_bound * (1.0 - std::pow(psi_re, k)) / (1.0 - psi_re);
      CHECK(q.norm() <= bound + 1e-9);
    }
  }
}

TEST_CASE("ridge tuning recovers a planted readout") {
  RngStream rng(83);
  const int reservoir = 12, out = 3;
  auto p = init_esn(reservoir, 5, out, 0.5, 0.5, rng);
  MatrixXd planted(out, reservoir);
  for (int i = 0; i < out; ++i)
    for (int j = 0; j < reservoir; ++j) planted(i, j) = rng.normal();

  std::vector<VectorXd> states, labels;
  VectorXd q = VectorXd::Zero(reservoir);
  for (int k = 0; k < 200; ++k) {
    VectorXd v = VectorXd::Random(5);
    q = esn_step_state(p, q, v);
    states.push_back(q);
    labels.push_back(planted * q);
  }
  const MatrixXd recovered = tune_output(states, labels, 1e-10);
  CHECK((recovered - planted).cwiseAbs().maxCoeff() <= 1e-6);

  // single pair with ridge 0 interpolates exactly in the readout direction
  const MatrixXd w1 = tune_output({states[0]}, {labels[0]}, 1e-12);
  CHECK((w1 * states[0] - labels[0]).norm() <= 1e-6 * labels[0].norm());
}

TEST_CASE("tuning never increases the training loss") {
  RngStream rng(84);
  const int reservoir = 10, out = 2;
  auto p = init_esn(reservoir, 4, out, 0.5, 0.5, rng);
  std::vector<VectorXd> states, labels;
  VectorXd q = VectorXd::Zero(reservoir);
  for (int k = 0; k < 60; ++k) {
    q = esn_step_state(p, q, VectorXd::Random(4));
    states.push_back(q);
    labels.push_back(VectorXd::Random(out));
  }
  auto loss_of = [&](const MatrixXd& w) {
    double loss = 0.0;
    for (std::size_t i = 0; i < states.size(); ++i)
      loss += (w * states[i] - labels[i]).squaredNorm();
    return loss;
  };
  const MatrixXd before = p.w_out;  // zeros
  const MatrixXd tuned = tune_output(states, labels, 1e-6);
  CHECK(loss_of(tuned) <= loss_of(before) + 1e-12);
}

TEST_CASE("recursive trainer matches the closed form") {
  RngStream rng(85);
  const int reservoir = 8, out = 2;
  const double ridge = 1e-4;
  RidgeTrainer trainer(reservoir, out, ridge);
  std::vector<VectorXd> states, labels;
  for (int k = 0; k < 40; ++k) {
    VectorXd q = VectorXd::Random(reservoir);
    VectorXd y = VectorXd::Random(out);
    trainer.observe(q, y);
    states.push_back(q);
    labels.push_back(y);
  }
  const MatrixXd direct = tune_output(states, labels, ridge);
  CHECK((trainer.readout() - direct).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("one-step prediction of a linear system reaches 1e-3 MSE") {
  RngStream rng(86);
  const int state_dim = 3, reservoir = 64;
  // linear environment: s' = A s + B d, r = c . s, all small amplitudes
  MatrixXd a = 0.6 * MatrixXd::Random(state_dim, state_dim);
  VectorXd bvec = 0.3 * VectorXd::Random(state_dim);
  VectorXd cvec = 0.5 * VectorXd::Random(state_dim);
  auto p = init_esn(reservoir, state_dim + 1, state_dim + 1, 0.5, 0.5, rng);

  std::vector<VectorXd> states, labels;
  VectorXd s = 0.1 * VectorXd::Random(state_dim);
  VectorXd q = VectorXd::Zero(reservoir);
  for (int k = 0; k < 600; ++k) {
    const double d = 0.1 * rng.uniform(-1.0, 1.0);
    VectorXd v(state_dim + 1);
    v << s, d;
    q = esn_step_state(p, q, v);
    const VectorXd s_next = a * s + bvec * d;
    VectorXd label(state_dim + 1);
    label << cvec.dot(s), s_next;
    states.push_back(q);
    labels.push_back(label);
    s = s_next;
  }
  p.w_out = tune_output(states, labels, 1e-8);
  double mse = 0.0;
  for (std::size_t i = 0; i < states.size(); ++i)
    mse += (p.w_out * states[i] - labels[i]).squaredNorm();
  mse /= states.size();
  CHECK(mse <= 1e-3);
}

TEST_CASE("acceptance threshold is inclusive") {
  VectorXd a = VectorXd::Zero(3), b = VectorXd::Zero(3);
  CHECK(accept_sample(a, b, 0.5));
  b(0) = 0.5;
  CHECK(accept_sample(a, b, 0.5));
  b(0) = 0.5 + 1e-9;
  CHECK(!accept_sample(a, b, 0.5));
}

TEST_CASE("synthetic budget schedule") {
  CHECK(synth_budget(5, 0.8, 450, 0.8, 10) == 360);
  CHECK(synth_budget(15, 0.8, 450, 0.8, 10) == 288);
  CHECK(synth_budget(25, 0.8, 450, 0.8, 10) == 230);
  CHECK(synth_budget(0, 0.0, 450, 0.8, 10) == 0);
  CHECK_THROWS(synth_budget(-1, 0.8, 450, 0.8, 10));
}

TEST_CASE("bound: gamma to zero leaves only the threshold term") {
  BoundConstants c;
  c.gamma = 0.0;
  c.concentration = 2.5;
  const double xi = 1.3;
  CHECK(theorem1_bound(c, 0.5, xi) == doctest::Approx(c.concentration * xi).epsilon(1e-12));
}

TEST_CASE("bound increases in xi at fixed effective sample count") {
  // freezing K' isolates the linear xi term; realize it with tau0 = 0
  BoundConstants c;
  const double b1 = theorem1_bound(c, 0.0, 1.0);
  const double b2 = theorem1_bound(c, 0.0, 1.4);
  CHECK(b2 > b1);
  CHECK(b2 - b1 ==
        doctest::Approx((1.4 - 1.0) * (1.0 + c.gamma * c.phi_out * c.phi_in)).epsilon(1e-9));
}

TEST_CASE("pathological constants are rejected with a diagnostic") {
  BoundConstants c;
  // tau0 = 1, xi = 1: effective samples go negative
  CHECK(effective_samples(c, 1.0, 1.0) < 0.0);
  CHECK_THROWS(theorem1_bound(c, 1.0, 1.0));
}

TEST_CASE("grid search finds the published optimum as an interior point") {
  BoundConstants c;  // defaults are the published constants
  std::vector<double> tau0_grid, xi_grid;
  for (int i = 0; i <= 10; ++i) tau0_grid.push_back(0.1 * i);
  for (int j = 0; j <= 25; ++j) xi_grid.push_back(1.0 + 0.02 * j);
  const auto result = bound_grid_search(c, tau0_grid, xi_grid);
  CHECK(result.tau0 == doctest::Approx(0.8));
  CHECK(result.xi == doctest::Approx(1.12));
  CHECK(result.argmin_interior);
  // rejected corner points carry NaN in the surface
  bool has_rejected = false;
  for (const auto& row : result.surface)
    if (std::isnan(row[2])) has_rejected = true;
  CHECK(has_rejected);
}

TEST_CASE("constant surface keeps the first grid point") {
  BoundConstants c;
  c.gamma = 0.0;  // bound = concentration * xi, constant over tau0
  const auto result = bound_grid_search(c, {0.0, 0.5, 1.0}, {1.2});
  CHECK(result.tau0 == 0.0);
  CHECK(result.xi == 1.2);
}

TEST_SUITE_END();
