#pragma once

#include <string>
#include <vector>

#include "fgamcd/baselines.hpp"
#include "fgamcd/trainer.hpp"

namespace fgamcd::harness {

// Full scenario + learning description. Everything observable in the outputs
// derives from these fields plus the master seed.
struct ExperimentConfig {
  // repository
  int models = 8;
  int bases = 2;
  int pbs_per_model = 4;
  double reuse_ratio = 0.4;
  double pb_min_bytes = 2.0 * 1024 * 1024;
  double pb_max_bytes = 16.0 * 1024 * 1024;
  // requests
  double zipf_iota = 0.5;
  double qos_lo = 2.0e8;
  double qos_hi = 4.0e8;
  // topology / radio
  int nodes = 3;
  int users = 6;
  int antennas = 4;
  double area_side = 1000.0;
  double visibility_radius = 500.0;
  env::ChannelModel channel;
  env::RewardConfig reward;
  double capacity_fraction = 0.4;
  bool redraw_channels = true;
  double reward_scale = 10.0;
  // learning
  trainer::TrainConfig train;
  // policy & evaluation
  std::string policy = "maasn_da";
  double hybrid_threshold = 2.0;
  int eval_episodes = 3;
  std::uint64_t master_seed = 1;

  std::string to_json() const;
  static ExperimentConfig from_json(const std::string& text);
  std::uint64_t hash() const;
};

// Desk-scale defaults: every conic block stays small and a full training run
// finishes in minutes while keeping the structural phenomena intact.
ExperimentConfig desk_profile();
// Tiny smoke setup for fast end-to-end checks.
ExperimentConfig smoke_profile();

struct Scenario {
  repo::Repository repository;
  repo::RequestProfile profile;
  env::Topology topology;
  Eigen::VectorXd capacity;
};

Scenario make_scenario(const ExperimentConfig& cfg);
env::Environment make_environment(const ExperimentConfig& cfg, const Scenario& scenario);

struct ExperimentResult {
  std::vector<trainer::EpisodeStats> episodes;
  trainer::EvalStats eval;
  double wall_train_s = 0.0;
  int pb_count = 0;
  double achieved_reuse = 0.0;
};

// Trains (or constructs) the configured policy and evaluates it on held-out
// channel draws. CSV/manifest emission is separate so callers can aggregate.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

// Writes per-episode training metrics, the evaluation summary, and a run
// manifest. Wall-clock figures go to a separate timings file so the
// deterministic outputs stay byte-stable.
void write_experiment_outputs(const ExperimentConfig& cfg, const ExperimentResult& result,
                              const std::string& out_prefix);

struct SweepPoint {
  std::string axis;
  double value = 0.0;
  std::string policy;
  std::uint64_t seed = 0;
  double total_delay = 0.0;
  double mean_reward = 0.0;
  int undelivered = 0;
};

// axis is one of: capacity | users | nodes | antennas | zipf | reuse
ExperimentConfig apply_axis(const ExperimentConfig& base, const std::string& axis, double value);

std::vector<SweepPoint> sweep(const ExperimentConfig& base, const std::string& axis,
                              const std::vector<double>& values,
                              const std::vector<std::string>& policies,
                              const std::vector<std::uint64_t>& seeds);

void write_sweep_csv(const std::vector<SweepPoint>& points, const std::string& path);

struct RateCdfRow {
  double error_scale = 0.0;
  int draw = 0;
  int user = 0;
  double robust_rate = 0.0;
  double nonrobust_rate = 0.0;
  double qos = 0.0;
};

// Realized downlink rates over sampled channel errors for the robust design
// and the estimate-only comparison design, at several error-shape scales.
std::vector<RateCdfRow> rate_cdf(const ExperimentConfig& cfg, int draws,
                                 const std::vector<double>& error_scales);

void write_rate_cdf_csv(const std::vector<RateCdfRow>& rows, const std::string& path);

struct RuntimeRow {
  std::string setting;
  double decision_ms = 0.0;
  double subroutine_ms = 0.0;
  int steps = 0;
};

// Per-step wall-clock of the decision stage vs the beamforming subroutine for
// the learned participation pattern and the everyone-transmits setting.
std::vector<RuntimeRow> runtime_table(const ExperimentConfig& cfg, int measure_episodes = 2);

void write_runtime_csv(const std::vector<RuntimeRow>& rows, const std::string& path);

// Fig-5-style surface export.
void write_bound_surface_csv(const esn::GridSearchResult& result, const std::string& path);

void write_manifest(const ExperimentConfig& cfg, const std::string& path,
                    const std::string& extra_note = "");

}  // namespace fgamcd::harness
