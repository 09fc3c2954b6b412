#include <doctest.h>

#include "fgamcd/environment.hpp"
#include "support/oracles.hpp"

using namespace fgamcd;
using namespace fgamcd::env;

namespace {

// Small fixed scenario shared by the environment tests.
struct Fixture {
  repo::Repository repository;
  repo::RequestProfile profile;
  Topology topo;
  EnvConfig cfg;

  Fixture(int nodes = 2, int users = 3, int antennas = 2, std::uint64_t seed = 101) {
    RngStream rng(seed);
    repository = repo::synthesize_repository(2, 1, 0.5, 3, {1e6, 1e6}, rng);
    auto topo_rng = RngStream::substream(seed, "topology");
    topo = make_topology(nodes, users, antennas, 1000.0, 1500.0, topo_rng);
    profile.target_model.assign(users, 1);
    profile.target_model.back() = 2;
    profile.qos_bps.assign(users, 1e6);
    cfg.capacity_fraction = 0.6;
  }

  Environment make(std::uint64_t seed = 5) const {
    return Environment(repository, profile, topo, cfg, seed);
  }
};

StepDecision zero_decision(const Topology& t) {
  StepDecision d;
  d.caching = VectorXi::Zero(t.node_count);
  d.migration = Eigen::MatrixXi::Zero(t.node_count, t.node_count);
  d.participation = VectorXi::Zero(t.node_count);
  d.beamformers = VectorXcd::Zero(t.node_count * t.antennas);
  return d;
}

}  // namespace

TEST_SUITE_BEGIN("environment");

TEST_CASE("participation matches its formula on all binary inputs up to N=4") {
  for (int n = 1; n <= 4; ++n) {
    for (int a = 0; a <= 1; ++a) {
      const int combos = 1 << (n - 1);
      for (int mask = 0; mask < combos; ++mask) {
        std::vector<int> inbound;
        int sum = a;
        for (int b = 0; b < n - 1; ++b) {
          inbound.push_back((mask >> b) & 1);
          sum += inbound.back();
        }
        CHECK(participation(a, inbound) == std::min(sum, 1));
      }
    }
  }
}

TEST_CASE("participation trivial cases") {
  CHECK(participation(1, {}) == 1);
  CHECK(participation(0, {1}) == 1);
  CHECK(participation(1, {1, 1}) == 1);
  CHECK(participation(0, {}) == 0);
}

TEST_CASE("pb_delay: direct evaluations") {
  StepDecision d;
  d.migration = Eigen::MatrixXi::Zero(2, 2);
  MatrixXd backhaul = MatrixXd::Constant(2, 2, 1e10);

  SUBCASE("no migration, one user at 2 Gbit/s, 1 Gbit payload") {
    VectorXd rates(1);
    rates << 2e9;
    const double s_bytes = 1e9 / 8.0;
    CHECK(pb_delay(d, s_bytes, backhaul, rates, {0}) == doctest::Approx(0.5));
  }
  SUBCASE("one migration at 10 Gbit/s plus broadcast at 5 Gbit/s") {
    d.migration(0, 1) = 1;
    VectorXd rates(1);
    rates << 5e9;
    const double s_bytes = 1e9 / 8.0;
    CHECK(pb_delay(d, s_bytes, backhaul, rates, {0}) == doctest::Approx(0.3));
  }
  SUBCASE("PB requested by nobody costs nothing") {
    VectorXd rates(1);
    rates << 1.0;
    CHECK(pb_delay(d, 1e9, backhaul, rates, {}) == 0.0);
  }
  SUBCASE("requesting user with zero rate signals infeasible delivery") {
    VectorXd rates(1);
    rates << 0.0;
    CHECK(std::isinf(pb_delay(d, 1e9, backhaul, rates, {0})));
  }
}

TEST_CASE("pb_delay monotone nonincreasing in rates") {
  RngStream rng(31);
  StepDecision d;
  d.migration = Eigen::MatrixXi::Zero(2, 2);
  d.migration(0, 1) = 1;
  for (int trial = 0; trial < 50; ++trial) {
    MatrixXd backhaul(2, 2);
    backhaul << 0.0, rng.uniform(1e9, 1e10), rng.uniform(1e9, 1e10), 0.0;
    VectorXd rates(2);
    rates << rng.uniform(1e8, 1e9), rng.uniform(1e8, 1e9);
    const double base = pb_delay(d, 1e7, backhaul, rates, {0, 1});
    MatrixXd faster_bh = backhaul * 1.5;
    CHECK(pb_delay(d, 1e7, faster_bh, rates, {0, 1}) <= base + 1e-15);
    VectorXd faster(2);
    faster << rates(0) * 2.0, rates(1);
    CHECK(pb_delay(d, 1e7, backhaul, faster, {0, 1}) <= base + 1e-15);
  }
}

TEST_CASE("total delay sums exactly") {
  CHECK(total_delay({}) == 0.0);
  CHECK(total_delay({0.3, 0.5}) == doctest::Approx(0.8).epsilon(1e-15));
  RngStream rng(32);
  std::vector<double> delays(450);
  for (auto& v : delays) v = rng.uniform(0.0, 2.0);
  // second code path: Kahan-style accumulation as the independent recomputation
  double sum = 0.0, comp = 0.0;
  for (double v : delays) {
    const double y = v - comp;
    const double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
  CHECK(total_delay(delays) == doctest::Approx(sum).epsilon(1e-14));
  CHECK_THROWS(total_delay({0.1, std::numeric_limits<double>::infinity()}));
}

TEST_CASE("reward branches") {
  RewardConfig cfg;
  cfg.r1 = 10.0;
  cfg.r2 = 10.0;
  CHECK(compute_reward(false, 0, DeliveryStatus::not_requested, 0.0, cfg) == 0.0);
  CHECK(compute_reward(true, 0, DeliveryStatus::no_participant, 0.0, cfg) == -10.0);
  CHECK(compute_reward(true, 2, DeliveryStatus::feasible, 0.3, cfg) == doctest::Approx(-0.3));
  CHECK(compute_reward(true, 1, DeliveryStatus::infeasible, 0.3, cfg) == doctest::Approx(-10.3));
}

TEST_CASE("observation layout and visibility masking") {
  Fixture f;
  auto env = f.make();

  const int n0_users = static_cast<int>(f.topo.users_of[0].size());
  const int n1_users = static_cast<int>(f.topo.users_of[1].size());
  CHECK(env.observation_dim(0) == 2 + n0_users + 2 + n1_users);
  CHECK(env.state_dim() == env.observation_dim(0) + env.observation_dim(1));

  // full visibility at this radius: neighbor slots populated
  const VectorXd obs = env.observation(0);
  CHECK(obs.size() == env.observation_dim(0));
  CHECK(obs(0) > 0.0);                       // normalized PB size
  CHECK(obs(1 + n0_users + 1 - 1) >= 0.0);   // remaining capacity slot

  // masked topology: all neighbor entries zero
  Fixture masked;
  masked.topo.visibility.setZero();
  auto env2 = masked.make();
  const VectorXd obs2 = env2.observation(0);
  for (int i = 2 + n0_users; i < obs2.size(); ++i) CHECK(obs2(i) == 0.0);
}

TEST_CASE("isolated node with one user has own-part length 3") {
  Fixture f(1, 1, 2, 202);
  auto env = f.make();
  CHECK(env.observation_dim(0) == 3);
}

TEST_CASE("step bookkeeping: zero action on unrequested PB") {
  Fixture f;
  auto env = f.make();
  // find an unrequested PB: model 2's unique blocks when nobody requests 2
  f.profile.target_model.assign(3, 1);
  auto env2 = Environment(f.repository, f.profile, f.topo, f.cfg, 5);
  auto mult = f.repository.pb_multiplicity();
  int unique2 = 0;
  for (int pb : f.repository.models[1].pb_ids)
    if (mult[pb - 1] == 1) unique2 = pb;
  REQUIRE(unique2 > 0);
  // advance to that PB with zero actions
  DeliveryOutcome none;
  none.status = DeliveryStatus::not_requested;
  none.user_rates = VectorXd::Zero(3);
  while (env2.current_pb() != unique2) env2.apply(zero_decision(f.topo), none);
  const VectorXd before = env2.cache().remaining;
  auto result = env2.apply(zero_decision(f.topo), none);
  CHECK(result.reward == 0.0);
  CHECK((env2.cache().remaining - before).norm() == 0.0);
}

TEST_CASE("caching reduces remaining capacity by exactly the PB size") {
  Fixture f;
  auto env = f.make();
  auto d = zero_decision(f.topo);
  d.caching(0) = 1;
  d.participation(0) = 1;
  DeliveryOutcome out;
  out.status = DeliveryStatus::feasible;
  out.user_rates = VectorXd::Constant(3, 1e9);
  const double before = env.cache().remaining(0);
  env.apply(d, out);
  CHECK(env.cache().remaining(0) ==
        doctest::Approx(before - f.repository.pb_size(1)).epsilon(1e-12));
}

TEST_CASE("episode reward equals negative delay minus penalties") {
  Fixture f;
  auto env = f.make(17);
  RngStream rng(18);
  double reward_sum = 0.0;
  double delay_sum = 0.0;
  double penalty_sum = 0.0;
  env.reset(0);
  while (!env.done()) {
    auto d = zero_decision(f.topo);
    const bool requested = env.pb_requested(env.current_pb());
    DeliveryOutcome out;
    if (rng.uniform() < 0.7) {
      d.caching(0) = 1;
      d.participation(0) = 1;
      out.status = DeliveryStatus::feasible;
      out.user_rates = VectorXd::Constant(3, rng.uniform(5e8, 2e9));
    } else {
      out.status = DeliveryStatus::no_participant;
      out.user_rates = VectorXd::Zero(3);
    }
    auto r = env.apply(d, out);
    reward_sum += r.reward;
    if (r.delivered) delay_sum += r.migration_delay + r.broadcast_delay;
    if (requested && !r.delivered) penalty_sum += f.cfg.reward.r2;
    if (r.infeasible && r.delivered) penalty_sum += f.cfg.reward.r1;
  }
  CHECK(reward_sum == doctest::Approx(-delay_sum - penalty_sum).epsilon(1e-9));
}

TEST_CASE("storage never goes negative and the capacity bound holds") {
  Fixture f;
  f.cfg.capacity_fraction = 0.2;
  auto env = f.make(19);
  DeliveryOutcome out;
  out.status = DeliveryStatus::feasible;
  out.user_rates = VectorXd::Constant(3, 1e9);
  env.reset(0);
  while (!env.done()) {
    auto d = zero_decision(f.topo);
    const double size = f.repository.pb_size(env.current_pb());
    for (int n = 0; n < f.topo.node_count; ++n)
      if (env.cache().remaining(n) >= size) {
        d.caching(n) = 1;
        d.participation(n) = 1;
      }
    env.apply(d, out);
  }
  const auto& cache = env.cache();
  for (int n = 0; n < f.topo.node_count; ++n) {
    CHECK(cache.remaining(n) >= 0.0);
    double used = 0.0;
    for (int k = 0; k < env.steps(); ++k)
      if (cache.cached(n, k)) used += f.repository.pb_size(k + 1);
    CHECK(used <= cache.capacity(n) + 1e-9);
  }
}

TEST_CASE("decision validation rejects capacity and migration violations") {
  Fixture f;
  f.cfg.capacity_fraction = 1e-12;  // nothing fits
  auto env = f.make(20);
  auto d = zero_decision(f.topo);
  d.caching(0) = 1;
  CHECK_THROWS(env.validate_decision(d));

  Fixture g;
  auto env2 = g.make(21);
  auto d2 = zero_decision(g.topo);
  d2.migration(0, 1) = 1;  // migrating without caching
  CHECK_THROWS(env2.validate_decision(d2));
}

TEST_CASE("realized channels stay inside the error ellipsoid") {
  Fixture f;
  auto env = f.make(23);
  const auto& r = env.realization();
  const double scale = f.cfg.channel.error_shape_scale;
  for (int k = 0; k < env.steps(); ++k)
    for (int n = 0; n < f.topo.node_count; ++n)
      for (int u = 0; u < f.topo.user_count; ++u) {
        const VectorXcd e = r.h_true[k][n][u] - r.h_est[k][n][u];
        CHECK(scale * e.squaredNorm() <= 1.0 + 1e-9);
      }
}

TEST_CASE("channel statistics: pathloss exact, rician power within 2%") {
  RngStream rng(41);
  Topology topo = make_topology(1, 1, 4, 1000.0, 500.0, rng);
  ChannelModel model;
  model.error_shape_scale = 1e30;  // negligible error
  const int draws = 20000;        // 20000 * 4 antennas = 8e4 samples
  auto crng = RngStream(42);
  double power = 0.0;
  const double dx = topo.user_pos(0, 0) - topo.node_pos(0, 0);
  const double dy = topo.user_pos(0, 1) - topo.node_pos(0, 1);
  const double dist = std::max(std::hypot(dx, dy), 1.0);
  const double gain = std::pow(10.0, model.ref_gain_db / 10.0) * std::pow(dist, -model.pathloss_exp);
  for (int i = 0; i < draws; ++i) {
    auto real = draw_channels(topo, model, 1, crng);
    power += real.h_est[0][0][0].squaredNorm() / gain;
  }
  power /= draws * topo.antennas;  // E[||h_bar||^2] / M should be 1
  CHECK(power == doctest::Approx(1.0).epsilon(0.02));
}

TEST_SUITE_END();
