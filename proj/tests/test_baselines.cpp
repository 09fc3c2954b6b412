#include <doctest.h>

#include "fgamcd/baselines.hpp"
#include "fgamcd/harness.hpp"

using namespace fgamcd;
using namespace fgamcd::baselines;

namespace {

harness::ExperimentConfig tiny_cfg(std::uint64_t seed = 31) {
  auto cfg = harness::smoke_profile();
  cfg.master_seed = seed;
  cfg.train.episodes = 2;
  cfg.train.reservoir_dim = 16;
  cfg.train.embed_dim = 3;
  cfg.train.actor_hidden = 4;
  cfg.train.plain_actor_hidden = 6;
  cfg.train.critic_hidden = 6;
  cfg.train.mixing_hidden = 4;
  return cfg;
}

}  // namespace

TEST_SUITE_BEGIN("baselines");

TEST_CASE("policy names round-trip") {
  for (const auto name :
       {"maasn_da", "qmix_da", "no_action_semantics", "no_value_decomp", "no_augmentation",
        "rnn_augmentation", "trimcaching_greedy", "no_cooperation", "tdma_unicast",
        "coarse_grained", "full_comp", "hybrid_multicast"}) {
    CHECK(policy_name(policy_from_name(name)) == name);
  }
  CHECK_THROWS(policy_from_name("nonsense"));
}

TEST_CASE("trimcaching fills storage and saturates the hit ratio") {
  auto cfg = tiny_cfg();
  auto s = harness::make_scenario(cfg);

  SUBCASE("capacity for everything gives hit ratio 1") {
    Eigen::VectorXd cap = Eigen::VectorXd::Constant(cfg.nodes, s.repository.unique_bytes() * 2.0);
    auto caching = trimcaching_caching(s.repository, s.profile, s.topology, cap);
    CHECK(hit_ratio(s.repository, s.profile, s.topology, caching) == doctest::Approx(1.0));
    // every PB cached somewhere
    for (int k = 0; k < s.repository.pb_count(); ++k) CHECK(caching.col(k).sum() >= 1);
  }
  SUBCASE("zero capacity caches nothing") {
    Eigen::VectorXd cap = Eigen::VectorXd::Zero(cfg.nodes);
    auto caching = trimcaching_caching(s.repository, s.profile, s.topology, cap);
    CHECK(caching.sum() == 0);
    CHECK(hit_ratio(s.repository, s.profile, s.topology, caching) <= 1e-12);
  }
}

TEST_CASE("greedy caching matches exhaustive optimum on a toy instance") {
  // 2 nodes, 3 PBs: enumerate all 2^6 caching matrices under capacity
  auto cfg = tiny_cfg(32);
  cfg.models = 3;
  cfg.bases = 3;
  cfg.pbs_per_model = 1;
  cfg.reuse_ratio = 0.0;
  cfg.users = 3;
  cfg.pb_min_bytes = 1000.0;
  cfg.pb_max_bytes = 1000.0;
  auto s = harness::make_scenario(cfg);
  REQUIRE(s.repository.pb_count() == 3);
  Eigen::VectorXd cap = Eigen::VectorXd::Constant(2, 1500.0);  // one PB per node

  auto greedy = trimcaching_caching(s.repository, s.profile, s.topology, cap);
  const double greedy_ratio = hit_ratio(s.repository, s.profile, s.topology, greedy);

  double best = 0.0;
  for (int mask = 0; mask < 64; ++mask) {
    Eigen::MatrixXi c(2, 3);
    for (int n = 0; n < 2; ++n)
      for (int k = 0; k < 3; ++k) c(n, k) = (mask >> (n * 3 + k)) & 1;
    bool fits = true;
    for (int n = 0; n < 2; ++n) {
      double used = 0.0;
      for (int k = 0; k < 3; ++k) used += c(n, k) * 1000.0;
      if (used > cap(n)) fits = false;
    }
    if (!fits) continue;
    best = std::max(best, hit_ratio(s.repository, s.profile, s.topology, c));
  }
  CHECK(greedy_ratio == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("coarse expansion duplicates shared bytes") {
  auto cfg = tiny_cfg(33);
  cfg.pb_min_bytes = cfg.pb_max_bytes = 4096.0;  // equal sizes, exact ratios
  auto s = harness::make_scenario(cfg);
  // 2 models x 4 PBs at 0.5: fine footprint 6 blocks, coarse footprint 8
  REQUIRE(s.repository.pb_count() == 6);
  auto exp = coarse_grained_restrict(s.repository);
  CHECK(exp.repo.pb_count() == 8);
  CHECK(exp.repo.unique_bytes() == doctest::Approx(2.0 * 4.0 * 4096.0));
  CHECK(s.repository.unique_bytes() == doctest::Approx(1.5 * 4.0 * 4096.0));
  CHECK(exp.repo.reuse_ratio == 0.0);
  // zero-reuse repositories expand to themselves
  cfg.reuse_ratio = 0.0;
  auto s0 = harness::make_scenario(cfg);
  auto exp0 = coarse_grained_restrict(s0.repository);
  CHECK(exp0.repo.pb_count() == s0.repository.pb_count());
  CHECK(exp0.repo.unique_bytes() == doctest::Approx(s0.repository.unique_bytes()));
}

TEST_CASE("hybrid multicast threshold") {
  CHECK(delivery::hybrid_multicast_mode(1, 0.0) == delivery::TransmissionMode::comp_broadcast);
  CHECK(delivery::hybrid_multicast_mode(2, 2.0) == delivery::TransmissionMode::unicast);
  CHECK(delivery::hybrid_multicast_mode(3, 2.0) == delivery::TransmissionMode::comp_broadcast);
  CHECK(delivery::hybrid_multicast_mode(100, 1e18) == delivery::TransmissionMode::unicast);
  CHECK_THROWS(delivery::hybrid_multicast_mode(1, -1.0));
}

TEST_CASE("no-cooperation decisions never migrate and lambda equals caching") {
  auto cfg = tiny_cfg(34);
  cfg.policy = "no_cooperation";
  auto s = harness::make_scenario(cfg);
  auto setup = policy_setup(PolicyKind::no_cooperation, cfg.train, s.repository, s.profile,
                            s.topology, s.capacity);
  REQUIRE(setup.adapter != nullptr);
  auto environment = harness::make_environment(cfg, s);
  trainer::MaasnTrainer t(std::move(environment), setup.config, setup.adapter);
  auto& e = t.environment();
  e.reset(0);
  while (!e.done()) {
    auto d = t.greedy_decision();
    CHECK(d.migration.sum() == 0);
    for (int n = 0; n < cfg.nodes; ++n) CHECK(d.participation(n) == d.caching(n));
    e.validate_decision(d);  // storage and migration constraints hold
    auto outcome = delivery::evaluate(e, d, setup.config.delivery);
    e.apply(d, outcome);
  }
}

TEST_CASE("full-comp adapter migrates everywhere once cached") {
  auto cfg = tiny_cfg(35);
  auto s = harness::make_scenario(cfg);
  auto setup =
      policy_setup(PolicyKind::full_comp, cfg.train, s.repository, s.profile, s.topology,
                   s.capacity);
  trainer::MaasnTrainer t(harness::make_environment(cfg, s), setup.config, setup.adapter);
  auto& e = t.environment();
  e.reset(0);
  int cached_steps = 0;
  while (!e.done()) {
    auto d = t.greedy_decision();
    e.validate_decision(d);
    if (d.caching.sum() > 0) {
      ++cached_steps;
      for (int n = 0; n < cfg.nodes; ++n) CHECK(d.participation(n) == 1);
      for (int n = 0; n < cfg.nodes; ++n)
        for (int m = 0; m < cfg.nodes; ++m)
          if (n != m) CHECK(d.migration(n, m) == d.caching(n));
    }
    auto outcome = delivery::evaluate(e, d, setup.config.delivery);
    e.apply(d, outcome);
  }
  (void)cached_steps;
}

TEST_CASE("every baseline produces decisions satisfying the storage and migration constraints") {
  for (const auto name : {"maasn_da", "trimcaching_greedy", "no_cooperation", "full_comp"}) {
    auto cfg = tiny_cfg(36);
    cfg.policy = name;
    auto s = harness::make_scenario(cfg);
    auto setup = policy_setup(policy_from_name(name), cfg.train, s.repository, s.profile,
                              s.topology, s.capacity);
    trainer::MaasnTrainer t(harness::make_environment(cfg, s), setup.config, setup.adapter);
    auto& e = t.environment();
    for (int ep = 0; ep < 2; ++ep) {
      e.reset(ep);
      while (!e.done()) {
        auto d = t.greedy_decision();
        CHECK_NOTHROW(e.validate_decision(d));
        auto outcome = delivery::evaluate(e, d, setup.config.delivery);
        e.apply(d, outcome);
      }
    }
  }
}

TEST_CASE("qmix trainer runs and selects per-dimension greedy actions") {
  auto cfg = tiny_cfg(37);
  auto s = harness::make_scenario(cfg);
  trainer::TrainConfig tc = cfg.train;
  tc.episodes = 2;
  QmixTrainer q(harness::make_environment(cfg, s), tc);
  auto stats = q.train();
  CHECK(stats.size() == 2);
  auto& e = q.environment();
  e.reset(0);
  auto d = q.greedy_decision();
  CHECK_NOTHROW(e.validate_decision(d));
  // migration bits obey the caching gate
  for (int n = 0; n < cfg.nodes; ++n)
    if (!d.caching(n))
      for (int m = 0; m < cfg.nodes; ++m) CHECK(d.migration(n, m) == 0);
}

TEST_CASE("tdma delay: single user coincides with broadcast under MRT") {
  auto cfg = tiny_cfg(38);
  cfg.users = 1;
  auto s = harness::make_scenario(cfg);
  auto environment = harness::make_environment(cfg, s);
  environment.reset(0);
  while (!environment.pb_requested(environment.current_pb())) {
    env::StepDecision d;
    d.caching = env::VectorXi::Zero(cfg.nodes);
    d.migration = Eigen::MatrixXi::Zero(cfg.nodes, cfg.nodes);
    d.participation = env::VectorXi::Zero(cfg.nodes);
    d.beamformers = env::VectorXcd::Zero(cfg.nodes * cfg.antennas);
    env::DeliveryOutcome none;
    none.status = env::DeliveryStatus::not_requested;
    none.user_rates = Eigen::VectorXd::Zero(cfg.users);
    environment.apply(d, none);
  }
  std::vector<int> lambda(cfg.nodes, 1);
  auto in = delivery::make_instance(environment, lambda, 1.0);
  const auto w = beam::mrt_beamformer(in, 0);
  const auto rates = beam::certify_worst_case(in, w);
  const double bits = 8.0 * in.pb_size_bytes;
  // one user: sum over users == max over users
  const double tdma_delay = bits / rates(0);
  const double broadcast_delay = bits / rates(0);
  CHECK(tdma_delay == broadcast_delay);

  // two users at identical rates: TDMA doubles the broadcast time
  const double r = rates(0);
  const double two_user_tdma = bits / r + bits / r;
  CHECK(two_user_tdma == doctest::Approx(2.0 * broadcast_delay));
}

TEST_SUITE_END();
