// Command-line front end: scenario synthesis, training, evaluation, sweeps,
// standalone beamforming solves, and figure-data exports.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "fgamcd/harness.hpp"

using namespace fgamcd;

namespace {

harness::ExperimentConfig load_config(const std::string& path, const std::string& profile) {
  harness::ExperimentConfig cfg =
      profile == "smoke" ? harness::smoke_profile() : harness::desk_profile();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    cfg = harness::ExperimentConfig::from_json(text);
  }
  return cfg;
}

void add_common(CLI::App* cmd, std::string& config_path, std::string& profile,
                std::uint64_t& seed, std::string& out) {
  cmd->add_option("--config", config_path, "experiment config JSON");
  cmd->add_option("--profile", profile, "built-in profile: desk | smoke")->default_val("desk");
  cmd->add_option("--seed", seed, "master seed override");
  cmd->add_option("--out", out, "output prefix/path");
}

beam::BeamformingInstance instance_from_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open instance " + path);
  nlohmann::json j = nlohmann::json::parse(in);
  beam::BeamformingInstance inst;
  inst.lambda = j.at("lambda").get<std::vector<int>>();
  inst.antennas_per_node = j.at("antennas_per_node").get<int>();
  inst.pb_size_bytes = j.at("pb_size_bytes").get<double>();
  inst.bandwidth = j.at("bandwidth").get<double>();
  inst.p_max = j.at("p_max").get<double>();
  inst.dc_penalty = j.value("dc_penalty", 1.0);
  const int users = j.at("request_flags").size();
  inst.request_flags = j.at("request_flags").get<std::vector<int>>();
  inst.qos_bps.resize(users);
  inst.noise_power.resize(users);
  for (int u = 0; u < users; ++u) {
    inst.qos_bps(u) = j.at("qos_bps")[u].get<double>();
    inst.noise_power(u) = j.at("noise_power")[u].get<double>();
  }
  const int dim = static_cast<int>(inst.lambda.size()) * inst.antennas_per_node;
  for (int u = 0; u < users; ++u) {
    Eigen::VectorXcd h(dim);
    const auto& hre = j.at("h_est_re")[u];
    const auto& him = j.at("h_est_im")[u];
    for (int i = 0; i < dim; ++i)
      h(i) = std::complex<double>(hre[i].get<double>(), him[i].get<double>());
    inst.h_est_stacked.push_back(h);
    std::vector<Eigen::MatrixXcd> blocks;
    for (std::size_t n = 0; n < inst.lambda.size(); ++n) {
      const double scale = j.at("error_scale")[u][n].get<double>();
      blocks.push_back(scale *
                       Eigen::MatrixXcd::Identity(inst.antennas_per_node, inst.antennas_per_node));
    }
    inst.error_blocks.push_back(std::move(blocks));
  }
  return inst;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fine-grained model caching and downloading laboratory"};
  app.require_subcommand(1);

  std::string config_path, profile = "desk", out = "fgamcd_out";
  std::uint64_t seed = 0;

  // synth-repo
  auto* synth = app.add_subcommand("synth-repo", "synthesize a model repository");
  add_common(synth, config_path, profile, seed, out);
  synth->callback([&] {
    auto cfg = load_config(config_path, profile);
    if (seed) cfg.master_seed = seed;
    auto scenario = harness::make_scenario(cfg);
    repo::save_repository(scenario.repository, out + "_repository.json");
    std::cout << "pbs=" << scenario.repository.pb_count()
              << " models=" << scenario.repository.model_count()
              << " reuse=" << scenario.repository.reuse_ratio << "\n"
              << "wrote " << out + "_repository.json" << "\n";
  });

  // train
  auto* train = app.add_subcommand("train", "train a policy and evaluate it");
  std::string policy;
  add_common(train, config_path, profile, seed, out);
  train->add_option("--policy", policy, "policy name (see README)");
  train->callback([&] {
    auto cfg = load_config(config_path, profile);
    if (seed) cfg.master_seed = seed;
    if (!policy.empty()) cfg.policy = policy;
    auto result = harness::run_experiment(cfg);
    harness::write_experiment_outputs(cfg, result, out);
    std::cout << "episodes=" << result.episodes.size()
              << " eval_delay=" << result.eval.total_delay
              << " undelivered=" << result.eval.undelivered_steps << "\n"
              << "wrote " << out << "_{episodes,eval,timings}.csv and manifest\n";
  });

  // eval (train is cheap at desk scale; eval re-runs the pipeline end to end)
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a trained policy on held-out draws");
  int eval_eps = 5;
  add_common(eval_cmd, config_path, profile, seed, out);
  eval_cmd->add_option("--episodes", eval_eps, "evaluation episodes");
  eval_cmd->add_option("--policy", policy, "policy name");
  eval_cmd->callback([&] {
    auto cfg = load_config(config_path, profile);
    if (seed) cfg.master_seed = seed;
    if (!policy.empty()) cfg.policy = policy;
    cfg.eval_episodes = eval_eps;
    auto result = harness::run_experiment(cfg);
    std::cout << "policy=" << cfg.policy << " eval_delay=" << result.eval.total_delay
              << " mean_reward=" << result.eval.mean_reward
              << " undelivered=" << result.eval.undelivered_steps << "\n";
  });

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "sweep one axis over values and policies");
  std::string axis = "capacity";
  std::vector<double> values;
  std::vector<std::string> policies{"maasn_da"};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  add_common(sweep_cmd, config_path, profile, seed, out);
  sweep_cmd->add_option("--axis", axis, "capacity|users|nodes|antennas|zipf|reuse");
  sweep_cmd->add_option("--values", values, "axis values")->required();
  sweep_cmd->add_option("--policies", policies, "policy names");
  sweep_cmd->add_option("--seeds", seeds, "seed list");
  sweep_cmd->callback([&] {
    auto cfg = load_config(config_path, profile);
    auto points = harness::sweep(cfg, axis, values, policies, seeds);
    harness::write_sweep_csv(points, out + "_sweep.csv");
    harness::write_manifest(cfg, out + "_sweep_manifest.json", "axis=" + axis);
    std::cout << "wrote " << points.size() << " rows to " << out + "_sweep.csv\n";
  });

  // beamform: standalone solve from an instance file
  auto* beam_cmd = app.add_subcommand("beamform", "solve one broadcast design instance");
  std::string instance_path;
  bool non_robust = false;
  beam_cmd->add_option("--instance", instance_path, "instance JSON")->required();
  beam_cmd->add_option("--out", out, "output prefix");
  beam_cmd->add_flag("--non-robust", non_robust, "constraints on the channel estimate only");
  beam_cmd->callback([&] {
    auto inst = instance_from_json(instance_path);
    beam::SolverConfig scfg;
    scfg.robust = !non_robust;
    auto sol = beam::solve_pb_beamforming(inst, scfg);
    CsvWriter csv(out + "_beamform.csv",
                  {"user", "certified_rate", "qos", "eps_qos", "eps_delay"});
    for (int u = 0; u < inst.user_count(); ++u)
      csv.row({std::to_string(u), CsvWriter::fmt(sol.certified_rates(u)),
               CsvWriter::fmt(inst.qos_bps(u)), CsvWriter::fmt(sol.eps_qos(u)),
               CsvWriter::fmt(sol.eps_delay(u))});
    std::cout << "status=" << (sol.status == env::DeliveryStatus::feasible ? "feasible" : "infeasible")
              << " zeta=" << sol.zeta << " rank_residual=" << sol.rank_residual
              << " dc_iterations=" << sol.dc_iterations << "\n"
              << "wrote " << out + "_beamform.csv\n";
  });

  // bound-search
  auto* bound_cmd = app.add_subcommand("bound-search", "grid search of the convergence bound");
  double tau0_step = 0.1, xi_lo = 1.0, xi_hi = 1.5, xi_step = 0.02;
  std::vector<double> thetas{1.0};
  bound_cmd->add_option("--out", out, "output prefix");
  bound_cmd->add_option("--tau0-step", tau0_step, "tau0 grid step");
  bound_cmd->add_option("--xi-lo", xi_lo, "xi grid start");
  bound_cmd->add_option("--xi-hi", xi_hi, "xi grid end");
  bound_cmd->add_option("--xi-step", xi_step, "xi grid step");
  bound_cmd->add_option("--concentration", thetas, "concentration coefficients to scan");
  bound_cmd->callback([&] {
    esn::BoundConstants constants;
    std::vector<double> tau0_grid, xi_grid;
    for (double t = 0.0; t <= 1.0 + 1e-12; t += tau0_step) tau0_grid.push_back(t);
    for (double x = xi_lo; x <= xi_hi + 1e-12; x += xi_step) xi_grid.push_back(x);
    for (double theta : thetas) {
      constants.concentration = theta;
      auto result = esn::bound_grid_search(constants, tau0_grid, xi_grid);
      const std::string path =
          out + "_bound_surface_theta" + CsvWriter::fmt(theta) + ".csv";
      harness::write_bound_surface_csv(result, path);
      std::cout << "concentration=" << theta << " argmin tau0=" << result.tau0
                << " xi=" << result.xi << " bound=" << result.bound
                << (result.argmin_interior ? " (interior)" : " (boundary)") << "\n"
                << "wrote " << path << "\n";
    }
  });

  // rate-cdf
  auto* cdf_cmd = app.add_subcommand("rate-cdf", "robust vs estimate-only realized rates");
  int draws = 200;
  std::vector<double> scales;
  add_common(cdf_cmd, config_path, profile, seed, out);
  cdf_cmd->add_option("--draws", draws, "error realizations per scale");
  cdf_cmd->add_option("--scales", scales, "error shape scales");
  cdf_cmd->callback([&] {
    auto cfg = load_config(config_path, profile);
    if (seed) cfg.master_seed = seed;
    if (scales.empty())
      scales = {cfg.channel.error_shape_scale, cfg.channel.error_shape_scale / 4.0};
    auto rows = harness::rate_cdf(cfg, draws, scales);
    harness::write_rate_cdf_csv(rows, out + "_rate_cdf.csv");
    std::cout << "wrote " << rows.size() << " rows to " << out + "_rate_cdf.csv\n";
  });

  // beampattern
  auto* pattern_cmd = app.add_subcommand("beampattern", "per-node radiated power over angle");
  int grid_points = 181;
  add_common(pattern_cmd, config_path, profile, seed, out);
  pattern_cmd->add_option("--grid", grid_points, "number of sin-angle samples");
  pattern_cmd->callback([&] {
    auto cfg = load_config(config_path, profile);
    if (seed) cfg.master_seed = seed;
    auto scenario = harness::make_scenario(cfg);
    auto environment = harness::make_environment(cfg, scenario);
    environment.reset(0);
    while (!environment.pb_requested(environment.current_pb()) && !environment.done()) {
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
    auto inst = delivery::make_instance(environment, lambda, 1.0);
    auto sol = beam::solve_pb_beamforming(inst, cfg.train.delivery.solver);
    Eigen::VectorXd grid(grid_points);
    for (int i = 0; i < grid_points; ++i) grid(i) = -1.0 + 2.0 * i / (grid_points - 1);
    CsvWriter csv(out + "_beampattern.csv", {"sin_theta", "node", "power"});
    for (int n = 0; n < cfg.nodes; ++n) {
      const auto w_n = sol.w.segment(n * cfg.antennas, cfg.antennas);
      const auto power = radio::beampattern(w_n, grid);
      for (int i = 0; i < grid_points; ++i)
        csv.row({CsvWriter::fmt(grid(i)), std::to_string(n), CsvWriter::fmt(power(i))});
    }
    std::cout << "wrote " << out + "_beampattern.csv\n";
  });

  // runtime
  auto* runtime_cmd = app.add_subcommand("runtime", "decision vs subroutine wall-clock table");
  int measure_eps = 2;
  add_common(runtime_cmd, config_path, profile, seed, out);
  runtime_cmd->add_option("--episodes", measure_eps, "measurement episodes");
  runtime_cmd->callback([&] {
    auto cfg = load_config(config_path, profile);
    if (seed) cfg.master_seed = seed;
    auto rows = harness::runtime_table(cfg, measure_eps);
    harness::write_runtime_csv(rows, out + "_runtime.csv");
    for (const auto& r : rows)
      std::cout << r.setting << ": decision " << r.decision_ms << " ms, subroutine "
                << r.subroutine_ms << " ms over " << r.steps << " steps\n";
    std::cout << "wrote " << out + "_runtime.csv\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
