#include <doctest.h>

#include "fgamcd/common.hpp"
#include "fgamcd/radio.hpp"

using namespace fgamcd;
using namespace fgamcd::radio;

TEST_SUITE_BEGIN("radio");

TEST_CASE("downlink rate scalar cases") {
  const double sigma2 = 0.25;
  const double B = 1e6;
  VectorXcd h(1), w(1);
  h << 1.0;
  SUBCASE("no participant gives zero rate") {
    w << 1.0;
    CHECK(downlink_rate(h, {0}, w, 1, sigma2, B) == 0.0);
  }
  SUBCASE("h=1, w=sqrt(3)*sigma gives 2B") {
    w << std::sqrt(3.0 * sigma2);
    CHECK(downlink_rate(h, {1}, w, 1, sigma2, B) == doctest::Approx(2.0 * B).epsilon(1e-12));
  }
}

TEST_CASE("two coherent nodes quadruple the SNR") {
  const double sigma2 = 1.0, B = 1.0;
  VectorXcd h(2), w(2);
  h << 1.0, 1.0;
  w << 0.7, 0.7;
  const double amp1 = downlink_amplitude(h, {1, 0}, w, 1);
  const double amp2 = downlink_amplitude(h, {1, 1}, w, 1);
  CHECK(amp2 == doctest::Approx(2.0 * amp1));
  const double snr1 = amp1 * amp1 / sigma2;
  const double snr2 = amp2 * amp2 / sigma2;
  CHECK(snr2 == doctest::Approx(4.0 * snr1));
  (void)B;
}

TEST_CASE("worst-case amplitude: scalar evaluation") {
  VectorXcd h(1), w(1);
  h << 1.0;
  w << 2.0;
  std::vector<MatrixXcd> blocks{MatrixXcd::Constant(1, 1, 100.0)};
  SUBCASE("budget 1: radius 0.1 shrinks amplitude to 1.8") {
    const double amp = worst_case_amplitude(h, blocks, w, 1.0);
    CHECK(amp == doctest::Approx(1.8).epsilon(1e-12));
    const double snr = amp * amp;
    CHECK(snr == doctest::Approx(3.24).epsilon(1e-12));
  }
  SUBCASE("zero beamformer gives zero") {
    VectorXcd wz = VectorXcd::Zero(1);
    CHECK(worst_case_amplitude(h, blocks, wz, 1.0) == 0.0);
  }
  SUBCASE("huge error radius clamps at zero") {
    std::vector<MatrixXcd> loose{MatrixXcd::Constant(1, 1, 0.01)};
    CHECK(worst_case_amplitude(h, loose, w, 1.0) == 0.0);
  }
}

TEST_CASE("worst-case rate lower-bounds sampled realizations") {
  RngStream rng(21);
  const int m = 3, n = 2;
  const double sigma2 = 0.5, B = 1.0, budget = n;
  for (int trial = 0; trial < 20; ++trial) {
    VectorXcd h(n * m), w(n * m);
    for (int i = 0; i < n * m; ++i) {
      h(i) = rng.normal_c();
      w(i) = rng.normal_c();
    }
    std::vector<MatrixXcd> blocks;
    std::vector<double> scale(n);
    for (int b = 0; b < n; ++b) {
      scale[b] = rng.uniform(5.0, 50.0);
      blocks.push_back(scale[b] * MatrixXcd::Identity(m, m));
    }
    std::vector<int> lambda{1, 1};
    const double certified = worst_case_rate(h, blocks, lambda, w, m, sigma2, B, budget);
    for (int draw = 0; draw < 500; ++draw) {
      // sample e in the aggregate ellipsoid e^H C e <= budget
      VectorXcd e(n * m);
      for (int i = 0; i < n * m; ++i) e(i) = rng.normal_c();
      double quad = 0.0;
      for (int b = 0; b < n; ++b) quad += scale[b] * e.segment(b * m, m).squaredNorm();
      const double r = std::pow(rng.uniform(), 1.0 / (2.0 * n * m));
      e *= r * std::sqrt(budget / quad);
      const VectorXcd h_real = h + e;
      const double realized = downlink_rate(h_real, lambda, w, m, sigma2, B);
      CHECK(realized >= certified - 1e-9);
    }
  }
}

TEST_CASE("steering identity: pattern peaks at the steered angle") {
  const int m = 6;
  const double u0 = 0.3;
  const std::complex<double> c(0.5, -0.25);
  const VectorXcd w = c * steering_vector(m, u0);
  VectorXd grid(3);
  grid << -0.5, u0, 0.9;
  const VectorXd p = beampattern(w, grid);
  CHECK(p(1) == doctest::Approx(m * m * std::norm(c)).epsilon(1e-12));
  CHECK(p(0) < p(1));
  CHECK(p(2) < p(1));
}

TEST_CASE("zero beamformer radiates nothing") {
  VectorXd grid = VectorXd::LinSpaced(32, -1.0, 1.0);
  const VectorXd p = beampattern(VectorXcd::Zero(4), grid);
  CHECK(p.maxCoeff() == 0.0);
}

TEST_CASE("mean radiated power over a uniform sin-angle grid equals ||w||^2") {
  RngStream rng(22);
  const int m = 5;
  VectorXcd w(m);
  for (int i = 0; i < m; ++i) w(i) = rng.normal_c();
  const int g = 4096;
  // midpoint grid over u in [-1, 1): steering vectors are orthonormal rows in
  // frequency, so the quadrature mean approaches ||w||^2
  VectorXd grid(g);
  for (int i = 0; i < g; ++i) grid(i) = -1.0 + (2.0 * i + 1.0) / g;
  const VectorXd p = beampattern(w, grid);
  CHECK(p.mean() == doctest::Approx(w.squaredNorm()).epsilon(1e-6));
}

TEST_SUITE_END();
