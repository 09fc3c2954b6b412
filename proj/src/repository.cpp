#include "fgamcd/repository.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include <json.hpp>

namespace fgamcd::repo {

double Repository::model_bytes(int model_id) const {
  const auto& m = models.at(model_id - 1);
  double total = 0.0;
  for (int pb : m.pb_ids) total += pb_size(pb);
  return total;
}

double Repository::total_model_bytes() const {
  double total = 0.0;
  for (const auto& m : models)
    for (int pb : m.pb_ids) total += pb_size(pb);
  return total;
}

double Repository::unique_bytes() const {
  double total = 0.0;
  for (const auto& pb : pbs) total += pb.size_bytes;
  return total;
}

bool Repository::model_contains(int model_id, int pb_id) const {
  const auto& ids = models.at(model_id - 1).pb_ids;
  return std::find(ids.begin(), ids.end(), pb_id) != ids.end();
}

std::vector<int> Repository::pb_multiplicity() const {
  std::vector<int> mult(pbs.size(), 0);
  for (const auto& m : models)
    for (int pb : m.pb_ids) mult[pb - 1]++;
  return mult;
}

namespace {

double draw_log_uniform(const SizeDistribution& d, RngStream& rng) {
  const double lo = std::log(d.min_bytes);
  const double hi = std::log(d.max_bytes);
  return std::exp(rng.uniform(lo, hi));
}

}  // namespace

Repository synthesize_repository(int j_count, int base_count, double reuse_ratio,
                                 int pb_count_per_model, const SizeDistribution& sizes,
                                 RngStream& rng) {
  if (j_count < 1 || base_count < 1 || j_count < base_count)
    throw std::invalid_argument("synthesize_repository: need j_count >= base_count >= 1");
  if (reuse_ratio < 0.0 || reuse_ratio >= 1.0)
    throw std::invalid_argument("synthesize_repository: reuse_ratio must lie in [0,1)");
  if (pb_count_per_model < 1)
    throw std::invalid_argument("synthesize_repository: pb_count_per_model must be positive");
  if (!(sizes.min_bytes > 0.0) || sizes.max_bytes < sizes.min_bytes)
    throw std::invalid_argument("synthesize_repository: size distribution needs positive support");

  Repository repo;
  repo.base_count = base_count;

  // Spread models over bases as evenly as possible.
  std::vector<int> group_size(base_count, j_count / base_count);
  for (int i = 0; i < j_count % base_count; ++i) group_size[i]++;

  int next_pb = 1;
  int next_model = 1;
  double shared_bytes_counted = 0.0;  // shared PB bytes counted once per containing model
  double total_bytes = 0.0;

  for (int g = 0; g < base_count; ++g) {
    const int members = group_size[g];
    // Per-model PB sizes drawn up front; the shared prefix reuses model 0's draw.
    std::vector<std::vector<double>> draw(members);
    for (int i = 0; i < members; ++i) {
      draw[i].resize(pb_count_per_model);
      for (int p = 0; p < pb_count_per_model; ++p) draw[i][p] = draw_log_uniform(sizes, rng);
    }

    // Choose the longest prefix whose byte fraction of the group stays at or
    // below the target (round-down semantics); singleton groups cannot share.
    int prefix_len = 0;
    if (reuse_ratio > 0.0 && members >= 2) {
      if (pb_count_per_model < 2)
        throw std::runtime_error(
            "synthesize_repository: reuse_ratio > 0 needs at least 2 PBs per model "
            "(granularity error)");
      // fraction(L) uses model 0's first L draws as the shared sizes for all
      // members; it is strictly increasing in L.
      for (int L = 1; L <= pb_count_per_model - 1; ++L) {
        double prefix_bytes = 0.0;
        for (int p = 0; p < L; ++p) prefix_bytes += draw[0][p];
        double bytes = static_cast<double>(members) * prefix_bytes;
        for (int i = 0; i < members; ++i)
          for (int p = L; p < pb_count_per_model; ++p) bytes += draw[i][p];
        const double frac = static_cast<double>(members) * prefix_bytes / bytes;
        if (frac <= reuse_ratio + 1e-12)
          prefix_len = L;
        else
          break;
      }
    }

    // Materialize shared prefix PBs once.
    std::vector<int> prefix_ids;
    for (int p = 0; p < prefix_len; ++p) {
      repo.pbs.push_back({next_pb, draw[0][p]});
      prefix_ids.push_back(next_pb);
      ++next_pb;
    }

    for (int i = 0; i < members; ++i) {
      ModelSpec m;
      m.id = next_model++;
      m.pb_ids = prefix_ids;
      for (int p = prefix_len; p < pb_count_per_model; ++p) {
        repo.pbs.push_back({next_pb, draw[i][p]});
        m.pb_ids.push_back(next_pb);
        ++next_pb;
      }
      repo.models.push_back(std::move(m));
    }

    double prefix_bytes = 0.0;
    for (int p = 0; p < prefix_len; ++p) prefix_bytes += draw[0][p];
    shared_bytes_counted += static_cast<double>(members) * prefix_bytes;
    double group_bytes = static_cast<double>(members) * prefix_bytes;
    for (int i = 0; i < members; ++i)
      for (int p = prefix_len; p < pb_count_per_model; ++p) group_bytes += draw[i][p];
    total_bytes += group_bytes;
  }

  repo.reuse_ratio = total_bytes > 0.0 ? shared_bytes_counted / total_bytes : 0.0;
  return repo;
}

std::vector<double> zipf_weights(int j_count, double iota) {
  if (j_count < 1) throw std::invalid_argument("zipf_weights: j_count must be positive");
  if (iota < 0.0) throw std::invalid_argument("zipf_weights: iota must be nonnegative");
  std::vector<double> w(j_count);
  double z = 0.0;
  for (int j = 1; j <= j_count; ++j) {
    w[j - 1] = std::pow(static_cast<double>(j), -iota);
    z += w[j - 1];
  }
  for (double& v : w) v /= z;
  return w;
}

RequestProfile sample_requests(const Repository& repo, int u_count, double iota,
                               double qos_lo, double qos_hi, RngStream& rng) {
  if (!(qos_lo > 0.0) || qos_hi < qos_lo)
    throw std::invalid_argument("sample_requests: QoS range must be positive");
  const auto w = zipf_weights(repo.model_count(), iota);
  std::vector<double> cdf(w.size());
  std::partial_sum(w.begin(), w.end(), cdf.begin());

  RequestProfile profile;
  profile.zipf_iota = iota;
  profile.target_model.resize(u_count);
  profile.qos_bps.resize(u_count);
  for (int u = 0; u < u_count; ++u) {
    const double x = rng.uniform();
    const auto it = std::lower_bound(cdf.begin(), cdf.end(), x);
    profile.target_model[u] = static_cast<int>(it - cdf.begin()) + 1;
    if (profile.target_model[u] > repo.model_count()) profile.target_model[u] = repo.model_count();
    profile.qos_bps[u] = rng.uniform(qos_lo, qos_hi);
  }
  return profile;
}

std::vector<int> requesting_users(const Repository& repo, const RequestProfile& profile, int pb_id) {
  if (pb_id < 1 || pb_id > repo.pb_count())
    throw std::invalid_argument("requesting_users: pb_id out of range");
  std::vector<int> users;
  for (std::size_t u = 0; u < profile.target_model.size(); ++u)
    if (repo.model_contains(profile.target_model[u], pb_id)) users.push_back(static_cast<int>(u));
  return users;
}

std::string to_json(const Repository& repo) {
  nlohmann::json j;
  j["format"] = "fgamcd-repository";
  j["version"] = 1;
  j["base_count"] = repo.base_count;
  j["reuse_ratio"] = repo.reuse_ratio;
  auto& pbs = j["pbs"] = nlohmann::json::array();
  for (const auto& pb : repo.pbs) pbs.push_back({{"id", pb.id}, {"size_bytes", pb.size_bytes}});
  auto& models = j["models"] = nlohmann::json::array();
  for (const auto& m : repo.models) models.push_back({{"id", m.id}, {"pb_ids", m.pb_ids}});
  // shared-PB map: PBs contained in more than one model
  auto mult = repo.pb_multiplicity();
  auto& shared = j["shared_pbs"] = nlohmann::json::array();
  for (std::size_t i = 0; i < mult.size(); ++i)
    if (mult[i] >= 2) shared.push_back(static_cast<int>(i) + 1);
  return j.dump(2);
}

Repository repository_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  if (j.value("format", "") != "fgamcd-repository")
    throw std::runtime_error("repository_from_json: not a repository file");
  if (j.value("version", 0) != 1)
    throw std::runtime_error("repository_from_json: unsupported version");
  Repository repo;
  repo.base_count = j["base_count"].get<int>();
  repo.reuse_ratio = j["reuse_ratio"].get<double>();
  for (const auto& pb : j["pbs"])
    repo.pbs.push_back({pb["id"].get<int>(), pb["size_bytes"].get<double>()});
  for (const auto& m : j["models"]) {
    ModelSpec spec;
    spec.id = m["id"].get<int>();
    spec.pb_ids = m["pb_ids"].get<std::vector<int>>();
    repo.models.push_back(std::move(spec));
  }
  return repo;
}

void save_repository(const Repository& repo, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_repository: cannot open " + path);
  out << to_json(repo) << '\n';
}

Repository load_repository(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_repository: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return repository_from_json(text);
}

}  // namespace fgamcd::repo
