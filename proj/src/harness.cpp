#include "fgamcd/harness.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace fgamcd::harness {

using nlohmann::json;

namespace {

json channel_to_json(const env::ChannelModel& c) {
  return json{{"ref_gain_db", c.ref_gain_db},
              {"pathloss_exp", c.pathloss_exp},
              {"rician_factor", c.rician_factor},
              {"noise_power", c.noise_power},
              {"error_shape_scale", c.error_shape_scale},
              {"bandwidth", c.bandwidth},
              {"p_max", c.p_max},
              {"backhaul_lo", c.backhaul_lo},
              {"backhaul_hi", c.backhaul_hi}};
}

void channel_from_json(const json& j, env::ChannelModel& c) {
  c.ref_gain_db = j.value("ref_gain_db", c.ref_gain_db);
  c.pathloss_exp = j.value("pathloss_exp", c.pathloss_exp);
  c.rician_factor = j.value("rician_factor", c.rician_factor);
  c.noise_power = j.value("noise_power", c.noise_power);
  c.error_shape_scale = j.value("error_shape_scale", c.error_shape_scale);
  c.bandwidth = j.value("bandwidth", c.bandwidth);
  c.p_max = j.value("p_max", c.p_max);
  c.backhaul_lo = j.value("backhaul_lo", c.backhaul_lo);
  c.backhaul_hi = j.value("backhaul_hi", c.backhaul_hi);
}

json train_to_json(const trainer::TrainConfig& t) {
  return json{{"episodes", t.episodes},
              {"batch_size", t.batch_size},
              {"buffer_capacity", t.buffer_capacity},
              {"updates_per_episode", t.updates_per_episode},
              {"actor_lr", t.actor_lr},
              {"critic_lr", t.critic_lr},
              {"soft_update", t.soft_update},
              {"gamma", t.gamma},
              {"temp_start", t.temp_start},
              {"temp_end", t.temp_end},
              {"embed_dim", t.embed_dim},
              {"actor_hidden", t.actor_hidden},
              {"plain_actor_hidden", t.plain_actor_hidden},
              {"critic_hidden", t.critic_hidden},
              {"mixing_hidden", t.mixing_hidden},
              {"use_augmentation", t.use_augmentation},
              {"tau0", t.tau0},
              {"xi", t.xi},
              {"attenuation", t.attenuation},
              {"decay_period", t.decay_period},
              {"reservoir_dim", t.reservoir_dim},
              {"action_semantics", t.action_semantics},
              {"value_decomposition", t.value_decomposition},
              {"actor_grad_through_mixing", t.actor_grad_through_mixing},
              {"rnn_augmentation", t.rnn_augmentation},
              {"dc_penalty", t.delivery.dc_penalty}};
}

void train_from_json(const json& j, trainer::TrainConfig& t) {
  t.episodes = j.value("episodes", t.episodes);
  t.batch_size = j.value("batch_size", t.batch_size);
  t.buffer_capacity = j.value("buffer_capacity", t.buffer_capacity);
  t.updates_per_episode = j.value("updates_per_episode", t.updates_per_episode);
  t.actor_lr = j.value("actor_lr", t.actor_lr);
  t.critic_lr = j.value("critic_lr", t.critic_lr);
  t.soft_update = j.value("soft_update", t.soft_update);
  t.gamma = j.value("gamma", t.gamma);
  t.temp_start = j.value("temp_start", t.temp_start);
  t.temp_end = j.value("temp_end", t.temp_end);
  t.embed_dim = j.value("embed_dim", t.embed_dim);
  t.actor_hidden = j.value("actor_hidden", t.actor_hidden);
  t.plain_actor_hidden = j.value("plain_actor_hidden", t.plain_actor_hidden);
  t.critic_hidden = j.value("critic_hidden", t.critic_hidden);
  t.mixing_hidden = j.value("mixing_hidden", t.mixing_hidden);
  t.use_augmentation = j.value("use_augmentation", t.use_augmentation);
  t.tau0 = j.value("tau0", t.tau0);
  t.xi = j.value("xi", t.xi);
  t.attenuation = j.value("attenuation", t.attenuation);
  t.decay_period = j.value("decay_period", t.decay_period);
  t.reservoir_dim = j.value("reservoir_dim", t.reservoir_dim);
  t.action_semantics = j.value("action_semantics", t.action_semantics);
  t.value_decomposition = j.value("value_decomposition", t.value_decomposition);
  t.actor_grad_through_mixing = j.value("actor_grad_through_mixing", t.actor_grad_through_mixing);
  t.rnn_augmentation = j.value("rnn_augmentation", t.rnn_augmentation);
  t.delivery.dc_penalty = j.value("dc_penalty", t.delivery.dc_penalty);
}

}  // namespace

std::string ExperimentConfig::to_json() const {
  json j;
  j["format"] = "fgamcd-experiment";
  j["version"] = 1;
  j["models"] = models;
  j["bases"] = bases;
  j["pbs_per_model"] = pbs_per_model;
  j["reuse_ratio"] = reuse_ratio;
  j["pb_min_bytes"] = pb_min_bytes;
  j["pb_max_bytes"] = pb_max_bytes;
  j["zipf_iota"] = zipf_iota;
  j["qos_lo"] = qos_lo;
  j["qos_hi"] = qos_hi;
  j["nodes"] = nodes;
  j["users"] = users;
  j["antennas"] = antennas;
  j["area_side"] = area_side;
  j["visibility_radius"] = visibility_radius;
  j["channel"] = channel_to_json(channel);
  j["r1"] = reward.r1;
  j["r2"] = reward.r2;
  j["gamma"] = reward.gamma;
  j["capacity_fraction"] = capacity_fraction;
  j["redraw_channels"] = redraw_channels;
  j["reward_scale"] = reward_scale;
  j["train"] = train_to_json(train);
  j["policy"] = policy;
  j["hybrid_threshold"] = hybrid_threshold;
  j["eval_episodes"] = eval_episodes;
  j["master_seed"] = master_seed;
  return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  const json j = json::parse(text);
  if (j.value("format", "") != "fgamcd-experiment")
    throw std::runtime_error("ExperimentConfig: not an experiment file");
  ExperimentConfig c;
  c.models = j.value("models", c.models);
  c.bases = j.value("bases", c.bases);
  c.pbs_per_model = j.value("pbs_per_model", c.pbs_per_model);
  c.reuse_ratio = j.value("reuse_ratio", c.reuse_ratio);
  c.pb_min_bytes = j.value("pb_min_bytes", c.pb_min_bytes);
  c.pb_max_bytes = j.value("pb_max_bytes", c.pb_max_bytes);
  c.zipf_iota = j.value("zipf_iota", c.zipf_iota);
  c.qos_lo = j.value("qos_lo", c.qos_lo);
  c.qos_hi = j.value("qos_hi", c.qos_hi);
  c.nodes = j.value("nodes", c.nodes);
  c.users = j.value("users", c.users);
  c.antennas = j.value("antennas", c.antennas);
  c.area_side = j.value("area_side", c.area_side);
  c.visibility_radius = j.value("visibility_radius", c.visibility_radius);
  if (j.contains("channel")) channel_from_json(j["channel"], c.channel);
  c.reward.r1 = j.value("r1", c.reward.r1);
  c.reward.r2 = j.value("r2", c.reward.r2);
  c.reward.gamma = j.value("gamma", c.reward.gamma);
  c.capacity_fraction = j.value("capacity_fraction", c.capacity_fraction);
  c.redraw_channels = j.value("redraw_channels", c.redraw_channels);
  c.reward_scale = j.value("reward_scale", c.reward_scale);
  if (j.contains("train")) train_from_json(j["train"], c.train);
  c.policy = j.value("policy", c.policy);
  c.hybrid_threshold = j.value("hybrid_threshold", c.hybrid_threshold);
  c.eval_episodes = j.value("eval_episodes", c.eval_episodes);
  c.master_seed = j.value("master_seed", c.master_seed);
  return c;
}

std::uint64_t ExperimentConfig::hash() const { return fnv1a(to_json()); }

ExperimentConfig desk_profile() {
  ExperimentConfig c;
  c.models = 8;
  c.bases = 2;
  c.pbs_per_model = 4;
  c.reuse_ratio = 0.4;
  c.nodes = 3;
  c.users = 6;
  c.antennas = 4;
  // desk radio calibration: low-SNR regime where coordinated transmission
  // roughly doubles rates while the error ellipsoid stays a material fraction
  // of the channel norm
  c.area_side = 600.0;
  c.channel.ref_gain_db = -40.0;
  c.channel.error_shape_scale = 1e13;
  c.qos_lo = 1.5e8;
  c.qos_hi = 3.0e8;
  c.train.episodes = 200;
  c.train.gamma = c.reward.gamma;
  c.train.updates_per_episode = 4;
  c.train.delivery.solver.tol = 1e-6;
  c.train.delivery.solver.max_admm_iter = 12000;
  return c;
}

ExperimentConfig smoke_profile() {
  ExperimentConfig c = desk_profile();
  c.models = 2;
  c.bases = 1;
  c.pbs_per_model = 4;
  c.reuse_ratio = 0.5;
  c.nodes = 2;
  c.users = 3;
  c.antennas = 2;
  c.qos_lo = 0.8e8;
  c.qos_hi = 1.6e8;
  c.train.episodes = 5;
  c.train.reservoir_dim = 64;
  c.train.embed_dim = 8;
  c.train.actor_hidden = 16;
  c.train.plain_actor_hidden = 24;
  c.train.critic_hidden = 24;
  c.train.mixing_hidden = 8;
  c.eval_episodes = 2;
  return c;
}

Scenario make_scenario(const ExperimentConfig& cfg) {
  Scenario s;
  auto repo_rng = RngStream::substream(cfg.master_seed, "repository");
  s.repository = repo::synthesize_repository(cfg.models, cfg.bases, cfg.reuse_ratio,
                                             cfg.pbs_per_model,
                                             {cfg.pb_min_bytes, cfg.pb_max_bytes}, repo_rng);
  auto topo_rng = RngStream::substream(cfg.master_seed, "topology");
  s.topology = env::make_topology(cfg.nodes, cfg.users, cfg.antennas, cfg.area_side,
                                  cfg.visibility_radius, topo_rng);
  auto req_rng = RngStream::substream(cfg.master_seed, "requests");
  s.profile =
      repo::sample_requests(s.repository, cfg.users, cfg.zipf_iota, cfg.qos_lo, cfg.qos_hi, req_rng);
  s.capacity = Eigen::VectorXd::Constant(cfg.nodes,
                                         cfg.capacity_fraction * s.repository.unique_bytes());
  return s;
}

env::Environment make_environment(const ExperimentConfig& cfg, const Scenario& scenario) {
  env::EnvConfig ec;
  ec.channel = cfg.channel;
  ec.reward = cfg.reward;
  ec.capacity_fraction = cfg.capacity_fraction;
  ec.redraw_channels_each_episode = cfg.redraw_channels;
  ec.reward_scale = cfg.reward_scale;
  return env::Environment(scenario.repository, scenario.profile, scenario.topology, ec,
                          cfg.master_seed);
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  Scenario scenario = make_scenario(cfg);

  const auto kind = baselines::policy_from_name(cfg.policy);
  trainer::TrainConfig tc = cfg.train;
  tc.seed = cfg.master_seed;
  tc.gamma = cfg.reward.gamma;
  auto setup = baselines::policy_setup(kind, tc, scenario.repository, scenario.profile,
                                       scenario.topology, scenario.capacity,
                                       cfg.hybrid_threshold);

  ExperimentResult result;
  if (setup.needs_coarse_env) {
    auto expansion = baselines::coarse_grained_restrict(scenario.repository);
    setup.adapter = std::make_shared<baselines::CoarseAdapter>(expansion);
    scenario.repository = expansion.repo;
  }
  env::Environment environment = make_environment(cfg, scenario);
  result.pb_count = environment.steps();
  result.achieved_reuse = scenario.repository.reuse_ratio;

  if (setup.use_qmix) {
    baselines::QmixTrainer qmix(std::move(environment), setup.config, setup.adapter);
    result.episodes = qmix.train();
    result.eval = qmix.evaluate(cfg.eval_episodes);
  } else {
    trainer::MaasnTrainer learner(std::move(environment), setup.config, setup.adapter);
    result.episodes = learner.train();
    if (setup.eval_delivery_override) learner.set_delivery(setup.eval_delivery);
    result.eval = learner.evaluate(cfg.eval_episodes);
  }
  result.wall_train_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

void write_experiment_outputs(const ExperimentConfig& cfg, const ExperimentResult& result,
                              const std::string& out_prefix) {
  {
    CsvWriter csv(out_prefix + "_episodes.csv",
                  {"episode", "cum_reward", "cum_reward_learner", "total_delay",
                   "migration_delay", "broadcast_delay", "infeasible_steps",
                   "undelivered_steps", "synthetic_added", "actor_grad_norm", "critic_loss"});
    for (const auto& e : result.episodes)
      csv.row({std::to_string(e.episode), CsvWriter::fmt(e.cum_reward),
               CsvWriter::fmt(e.cum_reward_learner), CsvWriter::fmt(e.total_delay),
               CsvWriter::fmt(e.migration_delay), CsvWriter::fmt(e.broadcast_delay),
               std::to_string(e.infeasible_steps), std::to_string(e.undelivered_steps),
               std::to_string(e.synthetic_added), CsvWriter::fmt(e.actor_grad_norm),
               CsvWriter::fmt(e.critic_loss)});
  }
  {
    CsvWriter csv(out_prefix + "_eval.csv",
                  {"total_delay", "migration_delay", "broadcast_delay", "mean_reward",
                   "undelivered_steps", "infeasible_steps", "episodes"});
    const auto& e = result.eval;
    csv.row({CsvWriter::fmt(e.total_delay), CsvWriter::fmt(e.migration_delay),
             CsvWriter::fmt(e.broadcast_delay), CsvWriter::fmt(e.mean_reward),
             std::to_string(e.undelivered_steps), std::to_string(e.infeasible_steps),
             std::to_string(e.episodes)});
  }
  {
    // wall-clock lives apart from the deterministic outputs
    CsvWriter csv(out_prefix + "_timings.csv",
                  {"episode", "wall_decision_s", "wall_subroutine_s", "wall_learn_s"});
    for (const auto& e : result.episodes)
      csv.row({std::to_string(e.episode), CsvWriter::fmt(e.wall_decision_s),
               CsvWriter::fmt(e.wall_subroutine_s), CsvWriter::fmt(e.wall_learn_s)});
  }
  write_manifest(cfg, out_prefix + "_manifest.json");
}

ExperimentConfig apply_axis(const ExperimentConfig& base, const std::string& axis, double value) {
  ExperimentConfig c = base;
  if (axis == "capacity")
    c.capacity_fraction = value;
  else if (axis == "users")
    c.users = static_cast<int>(value);
  else if (axis == "nodes")
    c.nodes = static_cast<int>(value);
  else if (axis == "antennas")
    c.antennas = static_cast<int>(value);
  else if (axis == "zipf")
    c.zipf_iota = value;
  else if (axis == "reuse")
    c.reuse_ratio = value;
  else
    throw std::invalid_argument("apply_axis: unknown axis " + axis);
  return c;
}

std::vector<SweepPoint> sweep(const ExperimentConfig& base, const std::string& axis,
                              const std::vector<double>& values,
                              const std::vector<std::string>& policies,
                              const std::vector<std::uint64_t>& seeds) {
  std::vector<SweepPoint> points;
  for (double value : values) {
    for (const auto& policy : policies) {
      for (std::uint64_t seed : seeds) {
        ExperimentConfig c = apply_axis(base, axis, value);
        c.policy = policy;
        c.master_seed = seed;
        const auto result = run_experiment(c);
        SweepPoint p;
        p.axis = axis;
        p.value = value;
        p.policy = policy;
        p.seed = seed;
        p.total_delay = result.eval.total_delay;
        p.mean_reward = result.eval.mean_reward;
        p.undelivered = result.eval.undelivered_steps;
        points.push_back(p);
      }
    }
  }
  return points;
}

void write_sweep_csv(const std::vector<SweepPoint>& points, const std::string& path) {
  CsvWriter csv(path, {"axis", "value", "policy", "seed", "total_delay", "mean_reward",
                       "undelivered"});
  for (const auto& p : points)
    csv.row({p.axis, CsvWriter::fmt(p.value), p.policy, std::to_string(p.seed),
             CsvWriter::fmt(p.total_delay), CsvWriter::fmt(p.mean_reward),
             std::to_string(p.undelivered)});
}

std::vector<RateCdfRow> rate_cdf(const ExperimentConfig& cfg, int draws,
                                 const std::vector<double>& error_scales) {
  std::vector<RateCdfRow> rows;
  Scenario scenario = make_scenario(cfg);
  for (double scale : error_scales) {
    ExperimentConfig c = cfg;
    c.channel.error_shape_scale = scale;
    env::Environment environment = make_environment(c, scenario);
    environment.reset(0);
    // the first PB with at least one requester, delivered by the full cluster
    while (!environment.pb_requested(environment.current_pb()) && !environment.done()) {
      env::StepDecision d;
      d.caching = env::VectorXi::Zero(c.nodes);
      d.migration = Eigen::MatrixXi::Zero(c.nodes, c.nodes);
      d.participation = env::VectorXi::Zero(c.nodes);
      d.beamformers = env::VectorXcd::Zero(c.nodes * c.antennas);
      env::DeliveryOutcome none;
      none.status = env::DeliveryStatus::not_requested;
      none.user_rates = Eigen::VectorXd::Zero(c.users);
      environment.apply(d, none);
    }
    if (environment.done()) throw std::runtime_error("rate_cdf: no requested PB in scenario");

    std::vector<int> lambda(c.nodes, 1);
    auto instance = delivery::make_instance(environment, lambda, cfg.train.delivery.dc_penalty);
    beam::SolverConfig robust_cfg = cfg.train.delivery.solver;
    robust_cfg.robust = true;
    beam::SolverConfig naive_cfg = robust_cfg;
    naive_cfg.robust = false;
    const auto robust_sol = beam::solve_pb_beamforming(instance, robust_cfg);
    const auto naive_sol = beam::solve_pb_beamforming(instance, naive_cfg);
    if (robust_sol.status != env::DeliveryStatus::feasible)
      throw std::runtime_error("rate_cdf: robust design infeasible at this scale");

    auto err_rng = RngStream::substream(cfg.master_seed, "cdf-errors",
                                        static_cast<std::uint64_t>(scale));
    const int m = c.antennas;
    for (int draw = 0; draw < draws; ++draw) {
      for (int u = 0; u < c.users; ++u) {
        if (!instance.request_flags[u]) continue;
        // error sampled per node inside its own ellipsoid
        Eigen::VectorXcd e = Eigen::VectorXcd::Zero(c.nodes * m);
        for (int n = 0; n < c.nodes; ++n) {
          Eigen::VectorXcd g(m);
          for (int i = 0; i < m; ++i) g(i) = err_rng.normal_c();
          const double quad = (g.adjoint() * instance.error_blocks[u][n] * g)(0).real();
          const double radius = std::pow(err_rng.uniform(), 1.0 / (2.0 * m));
          if (quad > 0.0) e.segment(n * m, m) = g * (radius / std::sqrt(quad));
        }
        const Eigen::VectorXcd h_real = instance.h_est_stacked[u] + e;
        RateCdfRow row;
        row.error_scale = scale;
        row.draw = draw;
        row.user = u;
        row.qos = instance.qos_bps(u);
        row.robust_rate = radio::downlink_rate(h_real, lambda, robust_sol.w, m,
                                               instance.noise_power(u), instance.bandwidth);
        row.nonrobust_rate = radio::downlink_rate(h_real, lambda, naive_sol.w, m,
                                                  instance.noise_power(u), instance.bandwidth);
        rows.push_back(row);
      }
    }
  }
  return rows;
}

void write_rate_cdf_csv(const std::vector<RateCdfRow>& rows, const std::string& path) {
  CsvWriter csv(path, {"error_scale", "draw", "user", "robust_rate", "nonrobust_rate", "qos"});
  for (const auto& r : rows)
    csv.row({CsvWriter::fmt(r.error_scale), std::to_string(r.draw), std::to_string(r.user),
             CsvWriter::fmt(r.robust_rate), CsvWriter::fmt(r.nonrobust_rate),
             CsvWriter::fmt(r.qos)});
}

std::vector<RuntimeRow> runtime_table(const ExperimentConfig& cfg, int measure_episodes) {
  std::vector<RuntimeRow> rows;
  for (const char* policy : {"maasn_da", "full_comp"}) {
    ExperimentConfig c = cfg;
    c.policy = policy;
    Scenario scenario = make_scenario(c);
    trainer::TrainConfig tc = c.train;
    tc.seed = c.master_seed;
    auto setup = baselines::policy_setup(baselines::policy_from_name(policy), tc,
                                         scenario.repository, scenario.profile,
                                         scenario.topology, scenario.capacity);
    trainer::MaasnTrainer learner(make_environment(c, scenario), setup.config, setup.adapter);
    learner.train();
    RuntimeRow row;
    row.setting = policy;
    double decision = 0.0, subroutine = 0.0;
    int steps = 0;
    for (int ep = 0; ep < measure_episodes; ++ep) {
      auto& environment = learner.environment();
      environment.reset(500000 + ep);
      while (!environment.done()) {
        const auto t0 = std::chrono::steady_clock::now();
        auto d = learner.greedy_decision();
        const auto t1 = std::chrono::steady_clock::now();
        const auto outcome = delivery::evaluate(environment, d, learner.config().delivery);
        const auto t2 = std::chrono::steady_clock::now();
        environment.apply(d, outcome);
        decision += std::chrono::duration<double>(t1 - t0).count();
        subroutine += std::chrono::duration<double>(t2 - t1).count();
        ++steps;
      }
    }
    row.decision_ms = 1e3 * decision / steps;
    row.subroutine_ms = 1e3 * subroutine / steps;
    row.steps = steps;
    rows.push_back(row);
  }
  return rows;
}

void write_runtime_csv(const std::vector<RuntimeRow>& rows, const std::string& path) {
  CsvWriter csv(path, {"setting", "decision_ms", "subroutine_ms", "steps"});
  for (const auto& r : rows)
    csv.row({r.setting, CsvWriter::fmt(r.decision_ms), CsvWriter::fmt(r.subroutine_ms),
             std::to_string(r.steps)});
}

void write_bound_surface_csv(const esn::GridSearchResult& result, const std::string& path) {
  CsvWriter csv(path, {"tau0", "xi", "bound"});
  for (const auto& row : result.surface)
    csv.row({CsvWriter::fmt(row[0]), CsvWriter::fmt(row[1]),
             std::isnan(row[2]) ? "rejected" : CsvWriter::fmt(row[2])});
}

void write_manifest(const ExperimentConfig& cfg, const std::string& path,
                    const std::string& extra_note) {
  json j;
  j["config_hash"] = cfg.hash();
  j["master_seed"] = cfg.master_seed;
  j["code_version"] = kVersion;
  j["policy"] = cfg.policy;
  if (!extra_note.empty()) j["note"] = extra_note;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_manifest: cannot open " + path);
  out << j.dump(2) << '\n';
}

}  // namespace fgamcd::harness
