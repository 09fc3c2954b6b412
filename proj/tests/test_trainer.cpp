#include <doctest.h>

#include "fgamcd/harness.hpp"
#include "support/oracles.hpp"

using namespace fgamcd;
using namespace fgamcd::trainer;
using Eigen::VectorXd;

namespace {

// Tiny but complete learner over the smoke scenario.
MaasnTrainer tiny_trainer(TrainConfig overrides = {}, std::uint64_t seed = 7,
                          double gamma = 0.95) {
  harness::ExperimentConfig cfg = harness::smoke_profile();
  cfg.master_seed = seed;
  cfg.train.embed_dim = 3;
  cfg.train.actor_hidden = 4;
  cfg.train.plain_actor_hidden = 6;
  cfg.train.critic_hidden = 6;
  cfg.train.mixing_hidden = 4;
  cfg.train.reservoir_dim = 16;
  cfg.train.episodes = overrides.episodes > 0 ? overrides.episodes : 2;
  cfg.train.use_augmentation = overrides.use_augmentation;
  cfg.train.seed = seed;
  cfg.train.gamma = gamma;
  cfg.train.value_decomposition = overrides.value_decomposition;
  cfg.train.actor_grad_through_mixing = overrides.actor_grad_through_mixing;
  auto scenario = harness::make_scenario(cfg);
  TrainConfig tc = cfg.train;
  return MaasnTrainer(harness::make_environment(cfg, scenario), tc);
}

}  // namespace

TEST_SUITE_BEGIN("trainer");

TEST_CASE("smoke episode stores one real tuple per step") {
  auto t = tiny_trainer();
  const int steps = t.environment().steps();
  auto stats = t.run_episode(0);
  CHECK(static_cast<int>(t.buffer().size()) >= steps);
  int real = 0;
  for (std::size_t i = 0; i < t.buffer().size(); ++i)
    if (!t.buffer().at(i).synthetic) ++real;
  CHECK(real == steps);
  CHECK(stats.cum_reward <= 0.0);
}

TEST_CASE("critic loss: gamma 0 with zero critics gives mean squared reward") {
  TrainConfig ov;
  ov.use_augmentation = false;
  auto t = tiny_trainer(ov, 7, /*gamma=*/0.0);
  t.run_episode(0);
  // zero all critics and mixing hypernetworks
  for (auto& c : t.critics()) c.unflatten(VectorXd::Zero(c.param_count()));
  t.mixing().unflatten(VectorXd::Zero(t.mixing().param_count()));

  std::vector<const marl::ExperienceTuple*> batch;
  double expect = 0.0;
  for (std::size_t i = 0; i < t.buffer().size(); ++i) {
    batch.push_back(&t.buffer().at(i));
    expect += t.buffer().at(i).r * t.buffer().at(i).r;
  }
  expect /= batch.size();
  const double loss = t.critic_loss(batch);
  CHECK(loss == doctest::Approx(expect).epsilon(1e-9));

  // batch of identical tuples equals the single-tuple loss
  std::vector<const marl::ExperienceTuple*> rep(5, batch.front());
  CHECK(t.critic_loss(rep) == doctest::Approx(t.critic_loss({batch.front()})).epsilon(1e-12));
}

TEST_CASE("critic gradients match finite differences") {
  for (bool decomp : {true, false}) {
    TrainConfig ov;
    ov.use_augmentation = false;
    ov.value_decomposition = decomp;
    auto t = tiny_trainer(ov, 11);
    t.run_episode(0);
    std::vector<const marl::ExperienceTuple*> batch;
    for (std::size_t i = 0; i < std::min<std::size_t>(t.buffer().size(), 4); ++i)
      batch.push_back(&t.buffer().at(i));

    // pack (critics..., mixing) into one flat vector for the FD oracle
    const int agents = static_cast<int>(t.critics().size());
    int total = 0;
    for (const auto& c : t.critics()) total += c.param_count();
    const int mix_params = t.mixing().param_count();
    REQUIRE(total + mix_params <= 4000);

    auto get_flat = [&]() {
      VectorXd flat(total + mix_params);
      int at = 0;
      for (const auto& c : t.critics()) {
        flat.segment(at, c.param_count()) = c.flatten();
        at += c.param_count();
      }
      flat.segment(at, mix_params) = t.mixing().flatten();
      return flat;
    };
    auto set_flat = [&](const VectorXd& flat) {
      int at = 0;
      for (auto& c : t.critics()) {
        c.unflatten(flat.segment(at, c.param_count()));
        at += c.param_count();
      }
      t.mixing().unflatten(flat.segment(at, mix_params));
    };

    std::vector<nn::Mlp> cgrads;
    for (const auto& c : t.critics()) cgrads.push_back(c.zeros_like());
    marl::MixingParams mgrads = t.mixing().zeros_like();
    t.critic_loss(batch, &cgrads, &mgrads);
    VectorXd analytic(total + mix_params);
    int at = 0;
    for (int n = 0; n < agents; ++n) {
      analytic.segment(at, cgrads[n].param_count()) = cgrads[n].flatten();
      at += cgrads[n].param_count();
    }
    analytic.segment(at, mix_params) = decomp ? mgrads.flatten() : VectorXd::Zero(mix_params);

    const VectorXd flat0 = get_flat();
    auto f = [&](const VectorXd& flat) {
      set_flat(flat);
      const double loss = t.critic_loss(batch);
      return loss;
    };
    const VectorXd fd = oracles::fd_gradient(f, flat0, 1e-5);
    set_flat(flat0);
    CHECK(oracles::rel_err(analytic, fd) <= 1e-4);
  }
}

TEST_CASE("actor loss: zero critic gives zero loss and zero gradient") {
  TrainConfig ov;
  ov.use_augmentation = false;
  auto t = tiny_trainer(ov, 12);
  t.run_episode(0);
  for (auto& c : t.critics()) c.unflatten(VectorXd::Zero(c.param_count()));
  std::vector<const marl::ExperienceTuple*> batch{&t.buffer().at(0)};
  std::vector<marl::ActorNoise> noises(1);
  noises[0].a = 0.6;
  noises[0].b = VectorXd::Constant(1, 0.4);
  marl::ActorParams grads = t.actors()[0].zeros_like();
  const double loss = t.actor_loss(0, batch, noises, &grads);
  CHECK(loss == 0.0);
  CHECK(grads.flatten().norm() == 0.0);
}

TEST_CASE("actor gradients match finite differences") {
  for (bool through_mixing : {false, true}) {
    TrainConfig ov;
    ov.use_augmentation = false;
    ov.actor_grad_through_mixing = through_mixing;
    auto t = tiny_trainer(ov, 13);
    t.run_episode(0);
    std::vector<const marl::ExperienceTuple*> batch;
    for (std::size_t i = 0; i < std::min<std::size_t>(t.buffer().size(), 3); ++i)
      batch.push_back(&t.buffer().at(i));
    std::vector<marl::ActorNoise> noises(batch.size());
    RngStream rng(14);
    for (auto& noise : noises) {
      noise.a = rng.uniform(0.55, 0.9);  // keep the caching output above threshold
      noise.b = VectorXd::Constant(1, rng.uniform(0.2, 0.8));
    }

    const int agent = 0;
    REQUIRE(t.actors()[agent].param_count() <= 1000);
    marl::ActorParams grads = t.actors()[agent].zeros_like();
    t.actor_loss(agent, batch, noises, &grads);

    const VectorXd flat0 = t.actors()[agent].flatten();
    auto f = [&](const VectorXd& flat) {
      t.actors()[agent].unflatten(flat);
      const double loss = t.actor_loss(agent, batch, noises);
      return loss;
    };
    const VectorXd fd = oracles::fd_gradient(f, flat0, 1e-5);
    t.actors()[agent].unflatten(flat0);
    CHECK(oracles::rel_err(grads.flatten(), fd) <= 1e-4);
  }
}

TEST_CASE("actor loss decreases after one small gradient step") {
  TrainConfig ov;
  ov.use_augmentation = false;
  auto t = tiny_trainer(ov, 15);
  t.run_episode(0);
  t.run_episode(1);
  std::vector<const marl::ExperienceTuple*> batch;
  for (std::size_t i = 0; i < std::min<std::size_t>(t.buffer().size(), 6); ++i)
    batch.push_back(&t.buffer().at(i));
  std::vector<marl::ActorNoise> noises(batch.size());
  RngStream rng(16);
  for (auto& noise : noises) {
    noise.a = rng.uniform(0.55, 0.9);
    noise.b = VectorXd::Constant(1, rng.uniform(0.2, 0.8));
  }
  marl::ActorParams grads = t.actors()[0].zeros_like();
  const double before = t.actor_loss(0, batch, noises, &grads);
  VectorXd flat = t.actors()[0].flatten();
  flat -= 1e-4 * grads.flatten();
  t.actors()[0].unflatten(flat);
  const double after = t.actor_loss(0, batch, noises);
  CHECK(after <= before + 1e-12);
}

TEST_CASE("soft update with rate one copies the main parameters") {
  harness::ExperimentConfig cfg = harness::smoke_profile();
  cfg.train.embed_dim = 3;
  cfg.train.actor_hidden = 4;
  cfg.train.critic_hidden = 6;
  cfg.train.mixing_hidden = 4;
  cfg.train.reservoir_dim = 8;
  cfg.train.episodes = 1;
  cfg.train.soft_update = 1.0;
  cfg.train.use_augmentation = false;
  auto scenario = harness::make_scenario(cfg);
  MaasnTrainer t(harness::make_environment(cfg, scenario), cfg.train);
  t.run_episode(0);  // includes one soft update at rate 1
  for (std::size_t n = 0; n < t.actors().size(); ++n) {
    CHECK(t.target_actors()[n].flatten() == t.actors()[n].flatten());
    CHECK(t.target_critics()[n].flatten() == t.critics()[n].flatten());
  }
  CHECK(t.target_mixing().flatten() == t.mixing().flatten());
}

TEST_CASE("per-episode synthetic count never exceeds the budget") {
  harness::ExperimentConfig cfg = harness::smoke_profile();
  cfg.train.episodes = 3;
  cfg.train.reservoir_dim = 16;
  cfg.train.embed_dim = 3;
  cfg.train.actor_hidden = 4;
  cfg.train.critic_hidden = 6;
  cfg.train.mixing_hidden = 4;
  cfg.train.xi = 50.0;  // generous threshold so acceptance happens
  auto scenario = harness::make_scenario(cfg);
  MaasnTrainer t(harness::make_environment(cfg, scenario), cfg.train);
  for (int e = 0; e < 3; ++e) {
    auto stats = t.run_episode(e);
    const long budget = esn::synth_budget(e, cfg.train.tau0, t.environment().steps(),
                                          cfg.train.attenuation, cfg.train.decay_period);
    CHECK(stats.synthetic_added <= budget);
  }
}

TEST_CASE("training run with augmentation disabled is bit-reproducible") {
  TrainConfig ov;
  ov.use_augmentation = false;
  ov.episodes = 2;
  auto t1 = tiny_trainer(ov, 21);
  auto t2 = tiny_trainer(ov, 21);
  auto r1 = t1.train();
  auto r2 = t2.train();
  REQUIRE(r1.size() == r2.size());
  for (std::size_t i = 0; i < r1.size(); ++i) {
    CHECK(r1[i].cum_reward == r2[i].cum_reward);
    CHECK(r1[i].total_delay == r2[i].total_delay);
    CHECK(r1[i].critic_loss == r2[i].critic_loss);
  }
  CHECK(t1.actors()[0].flatten() == t2.actors()[0].flatten());
}

TEST_CASE("checkpoint round-trips all parameters") {
  TrainConfig ov;
  ov.use_augmentation = false;
  auto t1 = tiny_trainer(ov, 22);
  t1.run_episode(0);
  const std::string path = "/tmp/fgamcd_ckpt_test.bin";
  t1.save_checkpoint(path);
  auto t2 = tiny_trainer(ov, 22);
  t2.load_checkpoint(path);
  CHECK(t1.actors()[0].flatten() == t2.actors()[0].flatten());
  CHECK(t1.critics()[1].flatten() == t2.critics()[1].flatten());
  CHECK(t1.mixing().flatten() == t2.mixing().flatten());
}

TEST_SUITE_END();
