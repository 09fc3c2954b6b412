#include "fgamcd/beamforming.hpp"
#include <cstdlib>
#include <cstdio>

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

namespace fgamcd::beam {

namespace {

using conic::AdmmSolver;
using conic::ConicProblem;
using conic::ConicSolution;
using conic::ConicSolveOptions;
using conic::herm_diag_index;
using conic::herm_offdiag_index;
using conic::LinearIneq;
using conic::LmiBlock;
using conic::SolveStatus;

std::vector<int> participating_nodes(const std::vector<int>& lambda) {
  std::vector<int> part;
  for (std::size_t n = 0; n < lambda.size(); ++n)
    if (lambda[n]) part.push_back(static_cast<int>(n));
  return part;
}

std::vector<int> requesting_indices(const std::vector<int>& flags) {
  std::vector<int> req;
  for (std::size_t u = 0; u < flags.size(); ++u)
    if (flags[u]) req.push_back(static_cast<int>(u));
  return req;
}

// Participating-space view with channels normalized to O(1). The S-Procedure
// multiplier of each user is rescaled so its error-shape block has unit-order
// norm; eps_scale converts solver multipliers back to instance units.
struct Reduced {
  std::vector<int> part;
  std::vector<int> req;
  int m = 0;
  int dim = 0;                             // m * |part|
  double h_scale = 1.0;                    // channel normalizer
  std::vector<VectorXcd> h;                // per requester, normalized
  std::vector<std::vector<MatrixXcd>> c;   // per requester, per participating node, rescaled
  VectorXd corner_budget;                  // per requester: node count / eps_scale
  VectorXd eps_scale;                      // multiplier rescaling per requester
  VectorXd qos_thresh;                     // sigma^2 (2^{Q/B}-1) / h_scale^2
  VectorXd sigma_scaled;                   // sigma^2 / h_scale^2
  double bits = 0.0;
  double bandwidth = 0.0;
  double p_max = 0.0;

  double delay_thresh(int i, double zeta) const {
    return sigma_scaled(i) * (std::pow(2.0, zeta * bits / bandwidth) - 1.0);
  }
};

Reduced reduce(const BeamformingInstance& in) {
  Reduced r;
  r.part = participating_nodes(in.lambda);
  r.req = requesting_indices(in.request_flags);
  r.m = in.antennas_per_node;
  r.dim = r.m * static_cast<int>(r.part.size());
  r.bits = 8.0 * in.pb_size_bytes;
  r.bandwidth = in.bandwidth;
  r.p_max = in.p_max;
  const double nodes = static_cast<double>(in.node_count());

  double h2_max = 0.0;
  for (int u : r.req) {
    double h2 = 0.0;
    for (int t = 0; t < static_cast<int>(r.part.size()); ++t)
      h2 += in.h_est_stacked[u].segment(r.part[t] * r.m, r.m).squaredNorm();
    h2_max = std::max(h2_max, h2);
  }
  r.h_scale = h2_max > 0.0 ? std::sqrt(h2_max) : 1.0;

  r.qos_thresh.resize(r.req.size());
  r.sigma_scaled.resize(r.req.size());
  r.corner_budget.resize(r.req.size());
  r.eps_scale.resize(r.req.size());
  for (std::size_t i = 0; i < r.req.size(); ++i) {
    const int u = r.req[i];
    VectorXcd h(r.dim);
    std::vector<MatrixXcd> blocks;
    double c_norm = 0.0;
    for (int t = 0; t < static_cast<int>(r.part.size()); ++t) {
      h.segment(t * r.m, r.m) = in.h_est_stacked[u].segment(r.part[t] * r.m, r.m);
      blocks.push_back(in.error_blocks[u][r.part[t]] * (r.h_scale * r.h_scale));
      c_norm = std::max(c_norm, blocks.back().cwiseAbs().maxCoeff());
    }
    const double tau = c_norm > 0.0 ? c_norm : 1.0;
    for (auto& b : blocks) b /= tau;
    r.eps_scale(i) = tau;
    r.corner_budget(i) = nodes / tau;
    r.h.push_back(h / r.h_scale);
    r.c.push_back(std::move(blocks));
    r.sigma_scaled(i) = in.noise_power(u) / (r.h_scale * r.h_scale);
    r.qos_thresh(i) =
        r.sigma_scaled(i) * (std::pow(2.0, in.qos_bps(u) / in.bandwidth) - 1.0);
  }
  return r;
}

// Emits the affine dependence of one S-Procedure block on the packed W
// parameters: top-left W, border W h, corner +h^H W h.
void emit_w_terms(LmiBlock& block, const VectorXcd& h, int dim) {
  const int corner = dim;
  for (int i = 0; i < dim; ++i) {
    const int p = herm_diag_index(i);
    block.terms.push_back({p, i, i, 1.0});
    if (std::abs(h(i)) > 0.0) {
      block.terms.push_back({p, i, corner, h(i)});
      block.terms.push_back({p, corner, corner, std::norm(h(i))});
    }
  }
  for (int i = 0; i < dim; ++i)
    for (int j = i + 1; j < dim; ++j) {
      const int pre = herm_offdiag_index(dim, i, j, false);
      const int pim = herm_offdiag_index(dim, i, j, true);
      block.terms.push_back({pre, i, j, 1.0});
      block.terms.push_back({pim, i, j, {0.0, 1.0}});
      // border: (W h)_i gains W_ij h_j, (W h)_j gains conj(W_ij) h_i
      block.terms.push_back({pre, i, corner, h(j)});
      block.terms.push_back({pre, j, corner, h(i)});
      block.terms.push_back({pim, i, corner, std::complex<double>(0.0, 1.0) * h(j)});
      block.terms.push_back({pim, j, corner, std::complex<double>(0.0, -1.0) * h(i)});
      const std::complex<double> z = std::conj(h(i)) * h(j);
      block.terms.push_back({pre, corner, corner, 2.0 * z.real()});
      block.terms.push_back({pim, corner, corner, -2.0 * z.imag()});
    }
}

// var layout: W params | eps_qos per requester | eps_delay per requester | [slack]
struct VarLayout {
  int wparams = 0;
  int requesters = 0;
  bool slack = false;
  int eps_qos(int i) const { return wparams + i; }
  int eps_delay(int i) const { return wparams + requesters + i; }
  int slack_var() const { return wparams + 2 * requesters; }
  int total() const { return wparams + 2 * requesters + (slack ? 1 : 0); }
};

LmiBlock w_psd_block(int dim) {
  LmiBlock b;
  b.dim = dim;
  b.constant = MatrixXcd::Zero(dim, dim);
  for (int i = 0; i < dim; ++i) b.terms.push_back({herm_diag_index(i), i, i, 1.0});
  for (int i = 0; i < dim; ++i)
    for (int j = i + 1; j < dim; ++j) {
      b.terms.push_back({herm_offdiag_index(dim, i, j, false), i, j, 1.0});
      b.terms.push_back({herm_offdiag_index(dim, i, j, true), i, j, {0.0, 1.0}});
    }
  return b;
}

// One robust constraint block in the reduced space with free corner constant
// (set per solve): [[eps C + W, W h], [h^H W, -eps*budget - thresh + h^H W h]].
LmiBlock robust_block(const Reduced& r, int i, int eps_var, bool slack, int slack_var) {
  LmiBlock b;
  b.dim = r.dim + 1;
  b.constant = MatrixXcd::Zero(b.dim, b.dim);
  emit_w_terms(b, r.h[i], r.dim);
  for (int t = 0; t < static_cast<int>(r.part.size()); ++t) {
    const MatrixXcd& cb = r.c[i][t];
    for (int a = 0; a < r.m; ++a)
      for (int bcol = a; bcol < r.m; ++bcol) {
        const std::complex<double> v = cb(a, bcol);
        if (std::abs(v) == 0.0) continue;
        b.terms.push_back({eps_var, t * r.m + a, t * r.m + bcol,
                           (a == bcol) ? std::complex<double>(v.real(), 0.0) : v});
      }
  }
  b.terms.push_back({eps_var, r.dim, r.dim, -r.corner_budget(i)});
  if (slack)
    for (int i2 = 0; i2 <= r.dim; ++i2) b.terms.push_back({slack_var, i2, i2, 1.0});
  return b;
}

// Non-robust variant: the rate constraints hold on the channel estimate only,
// h^H W h >= thresh, as linear rows.
LinearIneq estimate_rate_row(const Reduced& r, int i, bool slack, int slack_var) {
  LinearIneq row;
  const VectorXcd& h = r.h[i];
  for (int a = 0; a < r.dim; ++a) {
    row.terms.push_back({herm_diag_index(a), std::norm(h(a))});
    for (int b2 = a + 1; b2 < r.dim; ++b2) {
      const std::complex<double> z = std::conj(h(a)) * h(b2);
      row.terms.push_back({herm_offdiag_index(r.dim, a, b2, false), 2.0 * z.real()});
      row.terms.push_back({herm_offdiag_index(r.dim, a, b2, true), -2.0 * z.imag()});
    }
  }
  if (slack) row.terms.push_back({slack_var, 1.0});
  row.offset = 0.0;  // -thresh filled per solve
  return row;
}

struct ProblemPair {
  ConicProblem phase1;   // min slack s.t. slack-relaxed constraints
  ConicProblem main;     // min DC penalty s.t. constraints
  VarLayout layout_p1;
  VarLayout layout_main;
  // indices into the lmi/ineq arrays for per-solve constant updates
  std::vector<int> qos_block_at, delay_block_at;       // main
  std::vector<int> qos_block_p1, delay_block_p1;       // phase1
  std::vector<int> qos_row_at, delay_row_at;           // non-robust main
  std::vector<int> qos_row_p1, delay_row_p1;           // non-robust phase1
};

ProblemPair build_problems(const Reduced& r, bool robust) {
  ProblemPair p;
  const int wparams = conic::herm_param_count(r.dim);
  const int nreq = static_cast<int>(r.req.size());
  p.layout_p1 = {wparams, nreq, true};
  p.layout_main = {wparams, nreq, false};

  auto power_rows = [&](const VarLayout& layout, bool slack, std::vector<LinearIneq>& rows) {
    for (int t = 0; t < static_cast<int>(r.part.size()); ++t) {
      LinearIneq row;
      row.offset = r.p_max;
      for (int a = 0; a < r.m; ++a)
        row.terms.push_back({herm_diag_index(t * r.m + a), -1.0});
      if (slack) row.terms.push_back({layout.slack_var(), 1.0});
      rows.push_back(row);
    }
  };

  for (ConicProblem* prob : {&p.phase1, &p.main}) {
    const bool is_p1 = (prob == &p.phase1);
    const VarLayout& layout = is_p1 ? p.layout_p1 : p.layout_main;
    prob->herm_dim = r.dim;
    prob->extra_vars = layout.total() - wparams;
    prob->lmis.push_back(w_psd_block(r.dim));
    for (int i = 0; i < nreq; ++i) {
      prob->nonneg_vars.push_back(layout.eps_qos(i));
      prob->nonneg_vars.push_back(layout.eps_delay(i));
      if (robust) {
        auto& qos_list = is_p1 ? p.qos_block_p1 : p.qos_block_at;
        auto& delay_list = is_p1 ? p.delay_block_p1 : p.delay_block_at;
        qos_list.push_back(static_cast<int>(prob->lmis.size()));
        prob->lmis.push_back(robust_block(r, i, layout.eps_qos(i), is_p1, layout.slack_var()));
        delay_list.push_back(static_cast<int>(prob->lmis.size()));
        prob->lmis.push_back(robust_block(r, i, layout.eps_delay(i), is_p1, layout.slack_var()));
      } else {
        auto& qos_list = is_p1 ? p.qos_row_p1 : p.qos_row_at;
        auto& delay_list = is_p1 ? p.delay_row_p1 : p.delay_row_at;
        qos_list.push_back(static_cast<int>(prob->ineqs.size()));
        prob->ineqs.push_back(estimate_rate_row(r, i, is_p1, layout.slack_var()));
        delay_list.push_back(static_cast<int>(prob->ineqs.size()));
        prob->ineqs.push_back(estimate_rate_row(r, i, is_p1, layout.slack_var()));
      }
    }
    power_rows(layout, is_p1, prob->ineqs);
    if (is_p1) {
      // cap the slack from below: only its sign near zero matters and the
      // bounded problem is easier on the splitting iteration
      LinearIneq cap;
      cap.offset = 1.0;
      cap.terms.push_back({layout.slack_var(), 1.0});
      prob->ineqs.push_back(cap);
    }
    prob->objective = VectorXd::Zero(layout.total());
  }
  p.phase1.objective(p.layout_p1.slack_var()) = 1.0;
  return p;
}

void set_phase1_constants(ProblemPair& p, const Reduced& r, double zeta, bool robust) {
  const int nreq = static_cast<int>(r.req.size());
  for (int i = 0; i < nreq; ++i) {
    if (robust) {
      p.phase1.lmis[p.qos_block_p1[i]].constant(r.dim, r.dim) = -r.qos_thresh(i);
      p.phase1.lmis[p.delay_block_p1[i]].constant(r.dim, r.dim) = -r.delay_thresh(i, zeta);
    } else {
      p.phase1.ineqs[p.qos_row_p1[i]].offset = -r.qos_thresh(i);
      p.phase1.ineqs[p.delay_row_p1[i]].offset = -r.delay_thresh(i, zeta);
    }
  }
}

void set_main_constants(ProblemPair& p, const Reduced& r, double zeta, bool robust) {
  const int nreq = static_cast<int>(r.req.size());
  for (int i = 0; i < nreq; ++i) {
    if (robust) {
      p.main.lmis[p.qos_block_at[i]].constant(r.dim, r.dim) = -r.qos_thresh(i);
      p.main.lmis[p.delay_block_at[i]].constant(r.dim, r.dim) = -r.delay_thresh(i, zeta);
    } else {
      p.main.ineqs[p.qos_row_at[i]].offset = -r.qos_thresh(i);
      p.main.ineqs[p.delay_row_at[i]].offset = -r.delay_thresh(i, zeta);
    }
  }
}

// Upper bound on any requester's achievable rate: perfect-CSI full-power MRT.
double zeta_upper_bound(const BeamformingInstance& in, const Reduced& r) {
  double z = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < r.req.size(); ++i) {
    const int u = r.req[i];
    double amp = 0.0;
    for (int t = 0; t < static_cast<int>(r.part.size()); ++t)
      amp += std::sqrt(in.p_max) *
             in.h_est_stacked[u].segment(r.part[t] * r.m, r.m).norm();
    const double rate = radio::rate_from_amplitude(amp, in.noise_power(u), in.bandwidth);
    z = std::min(z, rate / r.bits);
  }
  return z * 1.001;
}

}  // namespace

std::optional<MatrixXcd> build_qos_lmi(const BeamformingInstance& in, int user,
                                       const MatrixXcd& W, double eps1) {
  if (!in.request_flags[user]) return std::nullopt;
  const int dim = in.stacked_dim();
  const VectorXcd& h = in.h_est_stacked[user];
  MatrixXcd block(dim + 1, dim + 1);
  MatrixXcd c_agg = MatrixXcd::Zero(dim, dim);
  for (int n = 0; n < in.node_count(); ++n)
    c_agg.block(n * in.antennas_per_node, n * in.antennas_per_node, in.antennas_per_node,
                in.antennas_per_node) = in.error_blocks[user][n];
  const double kappa1 =
      in.noise_power(user) * (std::pow(2.0, in.qos_bps(user) / in.bandwidth) - 1.0) -
      (h.adjoint() * W * h)(0).real();
  block.topLeftCorner(dim, dim) = eps1 * c_agg + W;
  block.col(dim).head(dim) = W * h;
  block.row(dim).head(dim) = (W * h).adjoint();
  block(dim, dim) = -eps1 * static_cast<double>(in.node_count()) - kappa1;
  return block;
}

std::optional<MatrixXcd> build_delay_lmi(const BeamformingInstance& in, int user,
                                         const MatrixXcd& W, double eps2, double zeta) {
  if (!in.request_flags[user]) return std::nullopt;
  const double bits = 8.0 * in.pb_size_bytes;
  const int dim = in.stacked_dim();
  const VectorXcd& h = in.h_est_stacked[user];
  MatrixXcd block(dim + 1, dim + 1);
  MatrixXcd c_agg = MatrixXcd::Zero(dim, dim);
  for (int n = 0; n < in.node_count(); ++n)
    c_agg.block(n * in.antennas_per_node, n * in.antennas_per_node, in.antennas_per_node,
                in.antennas_per_node) = in.error_blocks[user][n];
  const double kappa2 =
      in.noise_power(user) * (std::pow(2.0, zeta * bits / in.bandwidth) - 1.0) -
      (h.adjoint() * W * h)(0).real();
  block.topLeftCorner(dim, dim) = eps2 * c_agg + W;
  block.col(dim).head(dim) = W * h;
  block.row(dim).head(dim) = (W * h).adjoint();
  block(dim, dim) = -eps2 * static_cast<double>(in.node_count()) - kappa2;
  return block;
}

VectorXd certify_worst_case(const BeamformingInstance& in, const VectorXcd& w) {
  VectorXd rates(in.user_count());
  const int m = in.antennas_per_node;
  VectorXcd w_masked = w;
  for (int n = 0; n < in.node_count(); ++n)
    if (!in.lambda[n]) w_masked.segment(n * m, m).setZero();
  for (int u = 0; u < in.user_count(); ++u) {
    VectorXcd h = in.h_est_stacked[u];
    for (int n = 0; n < in.node_count(); ++n)
      if (!in.lambda[n]) h.segment(n * m, m).setZero();
    const double amp = radio::worst_case_amplitude(h, in.error_blocks[u], w_masked,
                                                   static_cast<double>(in.node_count()));
    rates(u) = radio::rate_from_amplitude(amp, in.noise_power(u), in.bandwidth);
  }
  return rates;
}

VectorXcd mrt_beamformer(const BeamformingInstance& in, int user) {
  const int m = in.antennas_per_node;
  VectorXcd w = VectorXcd::Zero(in.stacked_dim());
  for (int n = 0; n < in.node_count(); ++n) {
    if (!in.lambda[n]) continue;
    const VectorXcd h = in.h_est_stacked[user].segment(n * m, m);
    const double norm = h.norm();
    if (norm > 0.0) w.segment(n * m, m) = std::sqrt(in.p_max) * h / norm;
  }
  return w;
}

std::optional<BeamformingSolution> solve_single_user(const BeamformingInstance& in) {
  const auto req = requesting_indices(in.request_flags);
  const auto part = participating_nodes(in.lambda);
  if (req.size() != 1 || part.empty()) return std::nullopt;
  const int u = req[0];
  const int m = in.antennas_per_node;

  // isotropy check: C_{n,u} = c_n I for participating nodes
  std::vector<double> c_scale;
  for (int n : part) {
    const MatrixXcd& c = in.error_blocks[u][n];
    const double diag = c(0, 0).real();
    if ((c - diag * MatrixXcd::Identity(m, m)).cwiseAbs().maxCoeff() > 1e-12 * std::abs(diag))
      return std::nullopt;
    c_scale.push_back(diag);
  }

  const int np = static_cast<int>(part.size());
  std::vector<double> a(np);
  for (int t = 0; t < np; ++t) a[t] = in.h_est_stacked[u].segment(part[t] * m, m).norm();
  const double rad = std::sqrt(static_cast<double>(in.node_count()));
  const double smax = std::sqrt(in.p_max);

  // maximize f(s) = sum s_t a_t - rad * sqrt(sum s_t^2 / c_t) over 0 <= s <= smax
  // by enumerating active sets: A at full power, I interior stationary.
  double best_f = 0.0;
  std::vector<double> best_s(np, 0.0);
  for (int mask = 0; mask < (1 << np); ++mask) {
    std::vector<int> full, interior;
    for (int t = 0; t < np; ++t) ((mask >> t) & 1) ? full.push_back(t) : interior.push_back(t);
    double sum_full = 0.0;
    for (int t : full) sum_full += in.p_max / c_scale[t];
    double sum_int = 0.0;
    for (int t : interior) sum_int += a[t] * a[t] * c_scale[t];
    const double denom = 1.0 - sum_int / (rad * rad);
    std::vector<double> s(np, 0.0);
    double g;
    if (interior.empty()) {
      g = std::sqrt(sum_full);
    } else {
      if (denom <= 1e-14) continue;
      if (sum_full == 0.0) continue;  // all-interior stationary point has f = 0
      g = std::sqrt(sum_full / denom);
    }
    if (!(g > 0.0)) continue;
    bool ok = true;
    for (int t : full) s[t] = smax;
    for (int t : interior) {
      s[t] = a[t] * c_scale[t] * g / rad;
      if (s[t] > smax * (1.0 + 1e-12)) ok = false;
    }
    // full-power coordinates need nonnegative ascent direction at the boundary
    for (int t : full)
      if (a[t] - rad * smax / (c_scale[t] * g) < -1e-12 * (1.0 + a[t])) ok = false;
    if (!ok) continue;
    double lin = 0.0, quad = 0.0;
    for (int t = 0; t < np; ++t) {
      lin += s[t] * a[t];
      quad += s[t] * s[t] / c_scale[t];
    }
    const double f = lin - rad * std::sqrt(quad);
    if (f > best_f) {
      best_f = f;
      best_s = s;
    }
  }

  BeamformingSolution sol;
  sol.w = VectorXcd::Zero(in.stacked_dim());
  for (int t = 0; t < np; ++t) {
    const VectorXcd h = in.h_est_stacked[u].segment(part[t] * m, m);
    const double norm = h.norm();
    if (norm > 0.0 && best_s[t] > 0.0) sol.w.segment(part[t] * m, m) = best_s[t] * h / norm;
  }
  sol.W = sol.w * sol.w.adjoint();
  sol.rank_residual = 0.0;
  sol.certified_rates = certify_worst_case(in, sol.w);
  sol.eps_qos = VectorXd::Zero(in.user_count());
  sol.eps_delay = VectorXd::Zero(in.user_count());
  const double rate = sol.certified_rates(u);
  sol.zeta = rate / (8.0 * in.pb_size_bytes);
  sol.status = rate >= in.qos_bps(u) * (1.0 - 1e-12) ? env::DeliveryStatus::feasible
                                                     : env::DeliveryStatus::infeasible;
  return sol;
}

BeamformingSolution solve_pb_beamforming(const BeamformingInstance& in, const SolverConfig& cfg) {
  const auto part = participating_nodes(in.lambda);
  const auto req = requesting_indices(in.request_flags);
  if (part.empty()) throw std::invalid_argument("solve_pb_beamforming: no participating node");
  if (req.empty()) throw std::invalid_argument("solve_pb_beamforming: no requesting user");

  // exact dispatch for a single requester with isotropic error shapes
  if (cfg.robust && cfg.allow_closed_form && req.size() == 1) {
    if (auto fast = solve_single_user(in)) return *fast;
  }

  Reduced r = reduce(in);
  ProblemPair prob = build_problems(r, cfg.robust);

  AdmmSolver phase1(prob.phase1);
  AdmmSolver main(prob.main);

  BeamformingSolution sol;
  sol.eps_qos = VectorXd::Zero(in.user_count());
  sol.eps_delay = VectorXd::Zero(in.user_count());
  sol.W = MatrixXcd::Zero(in.stacked_dim(), in.stacked_dim());
  sol.w = VectorXcd::Zero(in.stacked_dim());
  sol.certified_rates = VectorXd::Zero(in.user_count());

  ConicSolveOptions popt;
  popt.tol = cfg.probe_tol;
  popt.max_iter = cfg.max_admm_iter;

  popt.detect_infeasibility = false;  // phase 1 is feasible by construction

  auto probe = [&](double zeta, bool warm) {
    set_phase1_constants(prob, r, zeta, cfg.robust);
    ConicSolution ps = phase1.solve(prob.phase1, popt, warm);
    ++sol.bisection_probes;
    if (ps.status != SolveStatus::optimal) {
      // a near-converged slack level still classifies robustly away from the
      // margin; rerun cold once before giving up on the probe
      if (std::max(ps.residuals.primal, ps.residuals.dual) > 30.0 * popt.tol) {
        ps = phase1.solve(prob.phase1, popt, false);
        if (ps.status != SolveStatus::optimal &&
            std::max(ps.residuals.primal, ps.residuals.dual) > 30.0 * popt.tol)
          return std::numeric_limits<double>::infinity();
      }
    }
    return ps.objective;
  };

  // QoS-only feasibility: delay constraints vanish as zeta -> 0
  const double s0 = probe(0.0, false);
  if (!(s0 <= -cfg.feas_margin)) {
    sol.status = env::DeliveryStatus::infeasible;
    return sol;
  }

  // bracket the largest feasible zeta; the QoS floor is feasible by
  // construction since every requester's rate already reaches Q_u
  double lo = std::numeric_limits<double>::infinity();
  for (int u : req) lo = std::min(lo, in.qos_bps(u));
  lo /= r.bits;
  double s_lo = probe(lo, true);
  if (!(s_lo <= -cfg.feas_margin)) {
    // QoS feasible but the margin vanishes exactly at the implied rate; treat
    // the QoS point itself as the delay optimum.
    lo = 0.0;
    s_lo = s0;
  }
  double hi = zeta_upper_bound(in, r);
  double s_hi = probe(hi, true);
  int guard = 0;
  while (s_hi <= -cfg.feas_margin && guard++ < 8) {
    hi *= 2.0;
    s_hi = probe(hi, true);
  }

  bool force_midpoint = false;
  while (hi - lo > cfg.bisect_rel_tol * std::max(lo, 1e-6 * hi)) {
    const double width = hi - lo;
    double mid;
    if (!force_midpoint && std::isfinite(s_hi) && std::isfinite(s_lo) && s_hi > s_lo) {
      // false position on the slack level, clamped away from the bracket ends
      const double target = -cfg.feas_margin;
      mid = lo + (target - s_lo) / (s_hi - s_lo) * width;
      const double pad = 0.1 * width;
      mid = std::clamp(mid, lo + pad, hi - pad);
    } else {
      mid = 0.5 * (lo + hi);
    }
    const double s_mid = probe(mid, true);
    if (s_mid <= -cfg.feas_margin) {
      lo = mid;
      s_lo = s_mid;
    } else {
      hi = mid;
      s_hi = s_mid;
    }
    // interpolation that barely shrinks the bracket falls back to bisection
    force_midpoint = (hi - lo) > 0.6 * width;
    if (sol.bisection_probes > 48) break;
  }
  sol.zeta = lo;

  // DC refinement at the certified-feasible zeta. A solve stuck against the
  // feasibility boundary is retried with a slightly retreated zeta.
  ConicSolveOptions mopt;
  mopt.tol = cfg.tol;
  mopt.max_iter = cfg.max_admm_iter;
  mopt.detect_infeasibility = false;  // feasibility established by phase 1

  double mu = in.dc_penalty;
  MatrixXcd u1 = MatrixXcd::Zero(r.dim, r.dim);  // linearization term, u1 u1^H
  MatrixXcd w_red = MatrixXcd::Zero(r.dim, r.dim);
  bool have_solution = false;
  double best_residual = std::numeric_limits<double>::infinity();
  int stall = 0;
  int escalations = 0;
  double zeta_dc = lo;
  int retreats = 0;
  set_main_constants(prob, r, zeta_dc, cfg.robust);
  if (std::getenv("FGAMCD_DUMP_MAIN")) std::fprintf(stderr, "%s", conic::dump_problem(prob.main).c_str());

  for (int iter = 0; iter < cfg.dc_max_iter; ++iter) {
    VectorXd c = VectorXd::Zero(prob.layout_main.total());
    c.head(conic::herm_param_count(r.dim)) =
        mu * conic::pack_gradient(MatrixXcd::Identity(r.dim, r.dim) - u1);
    prob.main.objective = c;
    ConicSolution ms = main.solve(prob.main, mopt, iter > 0);
    ++sol.dc_iterations;
    if (std::getenv("FGAMCD_DEBUG_DC"))
      std::fprintf(stderr, "dc iter=%d status=%d iters=%d rp=%.3e rd=%.3e\n", iter,
                   static_cast<int>(ms.status), ms.iterations, ms.residuals.primal,
                   ms.residuals.dual);
    auto near_converged = [&](const ConicSolution& cs) {
      return std::max(cs.residuals.primal, cs.residuals.dual) <= 50.0 * mopt.tol;
    };
    if (ms.status != SolveStatus::optimal && !near_converged(ms)) {
      if (!have_solution && retreats < 3) {
        // stuck against the feasibility boundary: retreat zeta a little and
        // restart this iteration cold
        zeta_dc *= 1.0 - 2e-3;
        ++retreats;
        set_main_constants(prob, r, zeta_dc, cfg.robust);
        ms = main.solve(prob.main, mopt, false);
      }
      if (ms.status != SolveStatus::optimal && !near_converged(ms)) {
        ConicSolveOptions retry = mopt;
        retry.max_iter = 2 * mopt.max_iter;
        ms = main.solve(prob.main, retry, false);
        if (ms.status != SolveStatus::optimal && !near_converged(ms)) break;
      }
    }
    w_red = ms.matrix_value;
    have_solution = true;
    sol.zeta = zeta_dc;
    for (std::size_t i = 0; i < r.req.size(); ++i) {
      sol.eps_qos(r.req[i]) = ms.scalar_values[i] / r.eps_scale(i);
      sol.eps_delay(r.req[i]) = ms.scalar_values[r.req.size() + i] / r.eps_scale(i);
    }

    // rank bookkeeping on the PSD-clipped spectrum
    Eigen::SelfAdjointEigenSolver<MatrixXcd> es(w_red);
    const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
    w_red = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().adjoint();
    const double trace = ev.sum();
    const double top = ev.maxCoeff();
    const double residual = trace - top;
    sol.rank_residual = residual;
    sol.dc_objectives.push_back(mu * residual);
    sol.dc_mu.push_back(mu);

    if (residual <= cfg.rank_tol * std::max(trace, 1e-30)) break;
    // residual has reached the inner-solver noise floor
    if (residual <= cfg.rank_plateau * trace && residual > 0.5 * best_residual && iter >= 1)
      break;

    if (residual > 0.9 * best_residual) {
      if (++stall >= 3 && escalations < cfg.mu_escalations) {
        mu *= 2.0;
        ++escalations;
        stall = 0;
      }
    } else {
      stall = 0;
    }
    best_residual = std::min(best_residual, residual);

    const int top_idx = static_cast<int>(es.eigenvalues().size()) - 1;
    const VectorXcd v = es.eigenvectors().col(top_idx);
    u1 = v * v.adjoint();
  }

  if (!have_solution) {
    sol.status = env::DeliveryStatus::infeasible;
    return sol;
  }

  // rank-one extraction with a power-preserving rescale
  Eigen::SelfAdjointEigenSolver<MatrixXcd> es(w_red);
  const int top_idx = static_cast<int>(es.eigenvalues().size()) - 1;
  const double sigma1 = std::max(es.eigenvalues()(top_idx), 0.0);
  VectorXcd w_vec = std::sqrt(sigma1) * es.eigenvectors().col(top_idx);
  double scale = std::numeric_limits<double>::infinity();
  for (int t = 0; t < static_cast<int>(r.part.size()); ++t) {
    const double p = w_vec.segment(t * r.m, r.m).squaredNorm();
    if (p > 0.0) scale = std::min(scale, std::sqrt(in.p_max / p));
  }
  if (std::isfinite(scale)) w_vec *= scale;

  for (int t = 0; t < static_cast<int>(r.part.size()); ++t)
    sol.w.segment(r.part[t] * r.m, r.m) = w_vec.segment(t * r.m, r.m);
  for (int t1 = 0; t1 < static_cast<int>(r.part.size()); ++t1)
    for (int t2 = 0; t2 < static_cast<int>(r.part.size()); ++t2)
      sol.W.block(r.part[t1] * r.m, r.part[t2] * r.m, r.m, r.m) =
          w_red.block(t1 * r.m, t2 * r.m, r.m, r.m);
  sol.certified_rates = certify_worst_case(in, sol.w);

  // the closed-form certificate is the final authority on feasibility of the
  // extracted beamformer
  sol.status = env::DeliveryStatus::feasible;
  for (int u = 0; u < in.user_count(); ++u)
    if (in.request_flags[u] && sol.certified_rates(u) < in.qos_bps(u) * (1.0 - 1e-6))
      sol.status = env::DeliveryStatus::infeasible;
  return sol;
}

}  // namespace fgamcd::beam
