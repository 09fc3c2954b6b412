#pragma once

#include <Eigen/Dense>
#include <complex>
#include <memory>
#include <vector>

namespace fgamcd::conic {

using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// --- Hermitian variable packing -------------------------------------------
//
// A D x D complex Hermitian matrix is carried as D^2 real parameters: the D
// real diagonal entries first, then (re, im) pairs for each upper off-diagonal
// entry in row-major order. This is the lossless real parameterization of the
// standard 2x real symmetric embedding.

int herm_param_count(int dim);
int herm_diag_index(int i);
int herm_offdiag_index(int dim, int i, int j, bool imag);  // requires i < j

VectorXd pack_hermitian(const MatrixXcd& m);
MatrixXcd unpack_hermitian(const VectorXd& x, int dim);
// c with c^T x == Re tr(G^H W(x)) for Hermitian G
VectorXd pack_gradient(const MatrixXcd& g);

MatrixXd embed_real(const MatrixXcd& m);     // [[X, -Y], [Y, X]]
MatrixXcd unembed_real(const MatrixXd& a);

// Frobenius-nearest PSD matrix via eigenvalue clipping. Rejects inputs that
// are not Hermitian within a small tolerance.
MatrixXcd project_psd(const MatrixXcd& hermitian);

// --- Problem description ----------------------------------------------------
//
//   minimize   c^T x
//   subject to Block_i(x)  PSD           (affine Hermitian blocks)
//              row_j(x)   >= 0           (affine scalar inequalities)
//              x_v        >= 0           (flagged scalars)
//
// x packs one Hermitian matrix variable of dimension `herm_dim` followed by
// `extra_vars` auxiliary scalars.

struct LmiTerm {
  int var = 0;
  int row = 0;
  int col = 0;  // row <= col; Hermitian mirror implied, diagonal coef must be real
  std::complex<double> coef;
};

struct LmiBlock {
  int dim = 0;
  MatrixXcd constant;  // value at x = 0
  std::vector<LmiTerm> terms;
};

struct LinearTerm {
  int var = 0;
  double coef = 0.0;
};

struct LinearIneq {
  std::vector<LinearTerm> terms;
  double offset = 0.0;  // terms . x + offset >= 0
};

struct ConicProblem {
  int herm_dim = 0;
  int extra_vars = 0;
  VectorXd objective;             // size var_count(); empty means zero
  std::vector<LmiBlock> lmis;     // include an identity block to require W PSD
  std::vector<LinearIneq> ineqs;
  std::vector<int> nonneg_vars;   // packed indices constrained >= 0

  int var_count() const { return herm_param_count(herm_dim) + extra_vars; }
};

enum class SolveStatus { optimal, infeasible, max_iter };

struct SolveResiduals {
  double primal = 0.0;
  double dual = 0.0;
  double gap = 0.0;
};

struct ConicSolution {
  MatrixXcd matrix_value;
  std::vector<double> scalar_values;
  SolveStatus status = SolveStatus::max_iter;
  double objective = 0.0;
  SolveResiduals residuals;
  int iterations = 0;
  VectorXd x;  // full packed iterate
};

struct ConicSolveOptions {
  double tol = 1e-6;
  int max_iter = 50000;
  double rho = 1.0;
  double over_relax = 1.6;
  bool adaptive_rho = true;
  int check_every = 25;
  // stall detection for infeasibility reporting; disable for problems known
  // feasible so slow convergence is never misread as emptiness
  bool detect_infeasibility = true;
  int stall_window = 2000;
  double stall_factor = 0.995;
};

// Operator-splitting solver with a cached normal-equation factorization. The
// affine structure (term sparsity and coefficients) is fixed at construction;
// successive solves may change only the constant parts and the objective,
// which is what the delay bisection and DC linearization updates need.
class AdmmSolver {
 public:
  explicit AdmmSolver(const ConicProblem& structure);
  ~AdmmSolver();
  AdmmSolver(AdmmSolver&&) noexcept;
  AdmmSolver& operator=(AdmmSolver&&) noexcept;

  // warm=true continues from the previous terminal state.
  ConicSolution solve(const ConicProblem& problem, const ConicSolveOptions& options,
                      bool warm = false);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// One-shot convenience wrapper.
ConicSolution solve(const ConicProblem& problem, const ConicSolveOptions& options = {});

// Text dump of a problem for offline cross-checking with an external solver.
std::string dump_problem(const ConicProblem& problem);

}  // namespace fgamcd::conic
