#include "fgamcd/conic.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

namespace fgamcd::conic {

int herm_param_count(int dim) { return dim * dim; }

int herm_diag_index(int i) { return i; }

int herm_offdiag_index(int dim, int i, int j, bool imag) {
  if (i >= j) throw std::invalid_argument("herm_offdiag_index: need i < j");
  // pairs (0,1),(0,2),...,(0,D-1),(1,2),... row-major
  const int before = i * dim - i * (i + 1) / 2 + (j - i - 1);
  return dim + 2 * before + (imag ? 1 : 0);
}

VectorXd pack_hermitian(const MatrixXcd& m) {
  const int d = static_cast<int>(m.rows());
  VectorXd x(herm_param_count(d));
  for (int i = 0; i < d; ++i) x(herm_diag_index(i)) = m(i, i).real();
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) {
      x(herm_offdiag_index(d, i, j, false)) = m(i, j).real();
      x(herm_offdiag_index(d, i, j, true)) = m(i, j).imag();
    }
  return x;
}

MatrixXcd unpack_hermitian(const VectorXd& x, int dim) {
  MatrixXcd m(dim, dim);
  for (int i = 0; i < dim; ++i) m(i, i) = x(herm_diag_index(i));
  for (int i = 0; i < dim; ++i)
    for (int j = i + 1; j < dim; ++j) {
      const std::complex<double> v(x(herm_offdiag_index(dim, i, j, false)),
                                   x(herm_offdiag_index(dim, i, j, true)));
      m(i, j) = v;
      m(j, i) = std::conj(v);
    }
  return m;
}

VectorXd pack_gradient(const MatrixXcd& g) {
  const int d = static_cast<int>(g.rows());
  VectorXd c = VectorXd::Zero(herm_param_count(d));
  for (int i = 0; i < d; ++i) c(herm_diag_index(i)) = g(i, i).real();
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) {
      c(herm_offdiag_index(d, i, j, false)) = 2.0 * g(i, j).real();
      c(herm_offdiag_index(d, i, j, true)) = 2.0 * g(i, j).imag();
    }
  return c;
}

MatrixXd embed_real(const MatrixXcd& m) {
  const int d = static_cast<int>(m.rows());
  MatrixXd a(2 * d, 2 * d);
  a.topLeftCorner(d, d) = m.real();
  a.topRightCorner(d, d) = -m.imag();
  a.bottomLeftCorner(d, d) = m.imag();
  a.bottomRightCorner(d, d) = m.real();
  return a;
}

MatrixXcd unembed_real(const MatrixXd& a) {
  const int d = static_cast<int>(a.rows()) / 2;
  MatrixXcd m(d, d);
  m.real() = a.topLeftCorner(d, d);
  m.imag() = a.bottomLeftCorner(d, d);
  return m;
}

MatrixXcd project_psd(const MatrixXcd& hermitian) {
  const double scale = 1.0 + hermitian.cwiseAbs().maxCoeff();
  if ((hermitian - hermitian.adjoint()).cwiseAbs().maxCoeff() > 1e-9 * scale)
    throw std::invalid_argument("project_psd: input is not Hermitian");
  Eigen::SelfAdjointEigenSolver<MatrixXcd> es((hermitian + hermitian.adjoint()) * 0.5);
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().adjoint();
}

namespace {

// Per-block entry-consolidated form: each upper-triangular (r,c) slot lists
// the variables touching it.
struct EntryVar {
  int var;
  std::complex<double> coef;
};
struct BlockEntry {
  int row, col;
  std::vector<EntryVar> vars;
};
struct BlockLayout {
  int dim = 0;
  std::vector<BlockEntry> entries;
};


}  // namespace

struct AdmmSolver::Impl {
  int var_count = 0;
  int herm_dim = 0;
  int extra_vars = 0;
  std::vector<BlockLayout> blocks;
  std::vector<LinearIneq> rows;  // including nonneg vars folded in
  Eigen::LDLT<MatrixXd> gram_ldlt;
  std::size_t structure_sig = 0;

  // terminal state for warm starts
  bool has_state = false;
  VectorXd x;
  std::vector<MatrixXcd> z_blocks, u_blocks;
  VectorXd z_rows, u_rows;
  double rho_state = 1.0;

  void build(const ConicProblem& p) {
    var_count = p.var_count();
    herm_dim = p.herm_dim;
    extra_vars = p.extra_vars;
    blocks.clear();
    for (const auto& lmi : p.lmis) {
      BlockLayout layout;
      layout.dim = lmi.dim;
      std::map<std::pair<int, int>, std::map<int, std::complex<double>>> grouped;
      for (const auto& t : lmi.terms) {
        if (t.row > t.col) throw std::invalid_argument("LmiTerm: need row <= col");
        if (t.row == t.col && std::abs(t.coef.imag()) > 0.0)
          throw std::invalid_argument("LmiTerm: diagonal coefficient must be real");
        grouped[{t.row, t.col}][t.var] += t.coef;
      }
      for (const auto& [rc, vars] : grouped) {
        BlockEntry e;
        e.row = rc.first;
        e.col = rc.second;
        for (const auto& [v, coef] : vars) e.vars.push_back({v, coef});
        layout.entries.push_back(std::move(e));
      }
      blocks.push_back(std::move(layout));
    }
    rows = p.ineqs;
    for (int v : p.nonneg_vars) rows.push_back(LinearIneq{{{v, 1.0}}, 0.0});

    // Gram matrix of the linear operator (objective- and constant-independent).
    MatrixXd gram = MatrixXd::Zero(var_count, var_count);
    for (const auto& b : blocks) {
      for (const auto& e : b.entries) {
        const double mult = (e.row == e.col) ? 1.0 : 2.0;
        for (const auto& p1 : e.vars)
          for (const auto& p2 : e.vars)
            gram(p1.var, p2.var) += mult * (std::conj(p1.coef) * p2.coef).real();
      }
    }
    for (const auto& r : rows)
      for (const auto& t1 : r.terms)
        for (const auto& t2 : r.terms) gram(t1.var, t2.var) += t1.coef * t2.coef;
    gram.diagonal().array() += 1e-10;
    gram_ldlt.compute(gram);
    if (gram_ldlt.info() != Eigen::Success)
      throw std::runtime_error("AdmmSolver: Gram factorization failed");

    structure_sig = signature(p);
    has_state = false;
  }

  static std::size_t signature(const ConicProblem& p) {
    std::size_t sig = static_cast<std::size_t>(p.var_count()) * 1315423911u;
    sig ^= p.lmis.size() * 2654435761u;
    for (const auto& l : p.lmis) sig ^= l.terms.size() + 0x9e3779b9 + (sig << 6) + (sig >> 2);
    sig ^= p.ineqs.size() * 97531u;
    sig ^= p.nonneg_vars.size() * 31u;
    return sig;
  }

  void apply_forward(const ConicProblem& p, const VectorXd& xv, std::vector<MatrixXcd>& bz,
                     VectorXd& br) const {
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      bz[i] = p.lmis[i].constant;
      for (const auto& e : blocks[i].entries) {
        std::complex<double> acc(0.0, 0.0);
        for (const auto& ev : e.vars) acc += ev.coef * xv(ev.var);
        bz[i](e.row, e.col) += acc;
        if (e.row != e.col) bz[i](e.col, e.row) += std::conj(acc);
      }
    }
    // inequality offsets come from the caller's problem so successive solves
    // may move the constant parts; appended nonneg rows keep offset zero
    for (std::size_t j = 0; j < rows.size(); ++j) {
      double acc = j < p.ineqs.size() ? p.ineqs[j].offset : rows[j].offset;
      for (const auto& t : rows[j].terms) acc += t.coef * xv(t.var);
      br(j) = acc;
    }
  }

  // adjoint of the linear part applied to (matrices, rows)
  VectorXd apply_adjoint(const std::vector<MatrixXcd>& mz, const VectorXd& mr) const {
    VectorXd out = VectorXd::Zero(var_count);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      for (const auto& e : blocks[i].entries) {
        const std::complex<double> m = mz[i](e.row, e.col);
        const double mult = (e.row == e.col) ? 1.0 : 2.0;
        for (const auto& ev : e.vars) out(ev.var) += mult * (std::conj(ev.coef) * m).real();
      }
    }
    for (std::size_t j = 0; j < rows.size(); ++j)
      for (const auto& t : rows[j].terms) out(t.var) += t.coef * mr(j);
    return out;
  }
};

AdmmSolver::AdmmSolver(const ConicProblem& structure) : impl_(std::make_unique<Impl>()) {
  impl_->build(structure);
}

AdmmSolver::~AdmmSolver() = default;
AdmmSolver::AdmmSolver(AdmmSolver&&) noexcept = default;
AdmmSolver& AdmmSolver::operator=(AdmmSolver&&) noexcept = default;

ConicSolution AdmmSolver::solve(const ConicProblem& p, const ConicSolveOptions& opt, bool warm) {
  Impl& s = *impl_;
  if (Impl::signature(p) != s.structure_sig)
    throw std::invalid_argument("AdmmSolver::solve: problem structure changed");

  const int d = s.var_count;
  VectorXd c = p.objective.size() ? p.objective : VectorXd::Zero(d);
  if (c.size() != d) throw std::invalid_argument("AdmmSolver::solve: objective size mismatch");

  const std::size_t nb = s.blocks.size();
  const std::size_t nr = s.rows.size();

  VectorXd x;
  std::vector<MatrixXcd> z(nb), u(nb);
  VectorXd zr(nr), ur(nr);
  double rho = opt.rho;

  if (warm && s.has_state) {
    x = s.x;
    z = s.z_blocks;
    u = s.u_blocks;
    zr = s.z_rows;
    ur = s.u_rows;
    rho = s.rho_state;
  } else {
    x = VectorXd::Zero(d);
    for (std::size_t i = 0; i < nb; ++i) {
      z[i] = MatrixXcd::Zero(s.blocks[i].dim, s.blocks[i].dim);
      u[i] = MatrixXcd::Zero(s.blocks[i].dim, s.blocks[i].dim);
    }
    zr.setZero();
    ur.setZero();
  }

  std::vector<MatrixXcd> bx(nb);
  VectorXd br(nr);
  for (std::size_t i = 0; i < nb; ++i) bx[i] = MatrixXcd::Zero(s.blocks[i].dim, s.blocks[i].dim);

  ConicSolution sol;
  sol.status = SolveStatus::max_iter;

  double best_primal = std::numeric_limits<double>::infinity();
  int best_primal_iter = 0;
  const double alpha = opt.over_relax;

  int it = 0;
  for (; it < opt.max_iter; ++it) {
    // x-step: (L^T L) x = L^T (v - F0) - c/rho with v = z - u
    {
      std::vector<MatrixXcd> vz(nb);
      for (std::size_t i = 0; i < nb; ++i) vz[i] = z[i] - u[i] - p.lmis[i].constant;
      VectorXd vr(nr);
      for (std::size_t j = 0; j < nr; ++j) {
        const double offset = j < p.ineqs.size() ? p.ineqs[j].offset : s.rows[j].offset;
        vr(j) = zr(j) - ur(j) - offset;
      }
      VectorXd rhs = s.apply_adjoint(vz, vr) - c / rho;
      x = s.gram_ldlt.solve(rhs);
    }

    s.apply_forward(p, x, bx, br);

    // z-step with over-relaxation
    std::vector<MatrixXcd> z_old = z;
    VectorXd zr_old = zr;
    for (std::size_t i = 0; i < nb; ++i) {
      MatrixXcd relaxed = alpha * bx[i] + (1.0 - alpha) * z[i];
      MatrixXcd target = relaxed + u[i];
      Eigen::SelfAdjointEigenSolver<MatrixXcd> es((target + target.adjoint()) * 0.5);
      const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
      z[i] = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().adjoint();
      u[i] += relaxed - z[i];
    }
    for (std::size_t j = 0; j < nr; ++j) {
      const double relaxed = alpha * br(j) + (1.0 - alpha) * zr(j);
      const double target = relaxed + ur(j);
      zr(j) = std::max(target, 0.0);
      ur(j) += relaxed - zr(j);
    }

    if ((it + 1) % opt.check_every == 0 || it + 1 == opt.max_iter) {
      double pr2 = 0.0, scale_b = 0.0, scale_z = 0.0;
      for (std::size_t i = 0; i < nb; ++i) {
        pr2 += (bx[i] - z[i]).squaredNorm();
        scale_b += bx[i].squaredNorm();
        scale_z += z[i].squaredNorm();
      }
      pr2 += (br - zr).squaredNorm();
      scale_b += br.squaredNorm();
      scale_z += zr.squaredNorm();
      const double primal = std::sqrt(pr2) / (1.0 + std::sqrt(std::max(scale_b, scale_z)));

      std::vector<MatrixXcd> dz(nb);
      for (std::size_t i = 0; i < nb; ++i) dz[i] = z[i] - z_old[i];
      VectorXd dr = zr - zr_old;
      const double dual = rho * s.apply_adjoint(dz, dr).norm() / (1.0 + c.norm());

      if (primal < best_primal * opt.stall_factor) {
        best_primal = primal;
        best_primal_iter = it;
      }

      if (primal <= opt.tol && dual <= opt.tol) {
        sol.status = SolveStatus::optimal;
        sol.residuals.primal = primal;
        sol.residuals.dual = dual;
        ++it;
        break;
      }
      // Persistent lack of primal progress at a large residual indicates an
      // empty feasible set for this problem family.
      if (opt.detect_infeasibility && it - best_primal_iter > opt.stall_window &&
          primal > 1e3 * opt.tol) {
        sol.status = SolveStatus::infeasible;
        sol.residuals.primal = primal;
        sol.residuals.dual = dual;
        ++it;
        break;
      }
      sol.residuals.primal = primal;
      sol.residuals.dual = dual;

      if (opt.adaptive_rho) {
        if (primal > 10.0 * dual && rho < 1e6) {
          rho *= 2.0;
          for (auto& m : u) m *= 0.5;
          ur *= 0.5;
        } else if (dual > 10.0 * primal && rho > 1e-6) {
          rho *= 0.5;
          for (auto& m : u) m *= 2.0;
          ur *= 2.0;
        }
      }
    }
  }

  sol.iterations = it;
  sol.x = x;
  if (s.herm_dim > 0)
    sol.matrix_value = unpack_hermitian(x.head(herm_param_count(s.herm_dim)), s.herm_dim);
  sol.scalar_values.assign(x.data() + herm_param_count(s.herm_dim),
                           x.data() + herm_param_count(s.herm_dim) + s.extra_vars);
  sol.objective = c.dot(x);

  s.x = x;
  s.z_blocks = z;
  s.u_blocks = u;
  s.z_rows = zr;
  s.u_rows = ur;
  s.rho_state = rho;
  s.has_state = true;
  return sol;
}

ConicSolution solve(const ConicProblem& problem, const ConicSolveOptions& options) {
  AdmmSolver solver(problem);
  return solver.solve(problem, options, false);
}

std::string dump_problem(const ConicProblem& p) {
  std::ostringstream os;
  os.precision(17);
  os << "fgamcd-conic 1\n";
  os << "herm_dim " << p.herm_dim << " extra " << p.extra_vars << "\n";
  os << "objective";
  for (int i = 0; i < p.objective.size(); ++i) os << ' ' << p.objective(i);
  os << "\n";
  for (const auto& l : p.lmis) {
    os << "lmi " << l.dim << "\n";
    for (int r = 0; r < l.dim; ++r)
      for (int c2 = 0; c2 < l.dim; ++c2)
        os << l.constant(r, c2).real() << ' ' << l.constant(r, c2).imag() << ' ';
    os << "\n";
    for (const auto& t : l.terms)
      os << "  term " << t.var << ' ' << t.row << ' ' << t.col << ' ' << t.coef.real() << ' '
         << t.coef.imag() << "\n";
  }
  for (const auto& r : p.ineqs) {
    os << "ineq " << r.offset;
    for (const auto& t : r.terms) os << " (" << t.var << ',' << t.coef << ')';
    os << "\n";
  }
  os << "nonneg";
  for (int v : p.nonneg_vars) os << ' ' << v;
  os << "\n";
  return os.str();
}

}  // namespace fgamcd::conic
