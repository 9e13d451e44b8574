#pragma once

#include <Eigen/SparseCore>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "laptime/dual.hpp"
#include "laptime/types.hpp"

namespace laptime {

// One residual block r(x_local) of a sparse NLP.  Blocks own a small,
// explicit list of the global variables they read; both evaluators must be
// instantiations of the same generic callable so dual-number differentiation
// sees exactly the arithmetic that defines the residual.
//
// Conventions: equality blocks demand r(x) = 0, inequality blocks r(x) <= 0.
// Residuals are expected to be nondimensionalized by their builders (forces
// divided by a typical force, etc.) so that one feasibility tolerance is
// meaningful across all rows.
struct ResidualBlock {
  std::string id;          // diagnostic label, e.g. "flc_front[k=12]"
  bool is_inequality = false;
  int dim = 0;             // number of rows
  std::vector<int> vars;   // global variable indices, defining local order
  std::function<void(const double*, double*)> eval_d;
  std::function<void(const Dual*, Dual*)> eval_dual;
  // Declared Jacobian sparsity as (row, local column) pairs; must be a
  // superset of the true nonzeros.  Empty means dense (filled on demand).
  std::vector<std::pair<int, int>> sparsity;

  void make_dense_sparsity() {
    sparsity.clear();
    sparsity.reserve(size_t(dim) * vars.size());
    for (int r = 0; r < dim; ++r) {
      for (int c = 0; c < int(vars.size()); ++c) sparsity.emplace_back(r, c);
    }
  }
};

// Builds a block whose two evaluators share one generic lambda
// f(const Scalar* x_local, Scalar* out).
template <typename F>
ResidualBlock make_block(std::string id, bool is_inequality, int dim,
                         std::vector<int> vars, F f) {
  ResidualBlock b;
  b.id = std::move(id);
  b.is_inequality = is_inequality;
  b.dim = dim;
  b.vars = std::move(vars);
  b.eval_d = [f](const double* x, double* out) { f(x, out); };
  b.eval_dual = [f](const Dual* x, Dual* out) { f(x, out); };
  b.make_dense_sparsity();
  return b;
}

// Additive objective term J += eval(x_local); gradients by one dual pass per
// local variable (terms are small by construction).
struct ObjectiveTerm {
  std::vector<int> vars;
  std::function<double(const double*)> eval_d;
  std::function<Dual(const Dual*)> eval_dual;
};

template <typename F>
ObjectiveTerm make_objective_term(std::vector<int> vars, F f) {
  ObjectiveTerm t;
  t.vars = std::move(vars);
  t.eval_d = [f](const double* x) -> double { return f(x); };
  t.eval_dual = [f](const Dual* x) -> Dual { return f(x); };
  return t;
}

struct NlpProblem {
  int n = 0;
  VecXd lb, ub;       // variable bounds (+-inf allowed; lb == ub pins a var)
  VecXd x0;           // initial guess
  VecXd x_scale;      // typical magnitudes (> 0); empty means all ones
  std::vector<ObjectiveTerm> objective;
  // Constant exact objective Hessian (lower triangle, global indices);
  // optional — the solver adds damping and a quasi-Newton correction.
  std::vector<Eigen::Triplet<double>> objective_hessian;
  std::vector<ResidualBlock> blocks;
};

// Compressed forward-mode Jacobian of one block at x_local: writes one value
// per declared sparsity entry, in declared order.  Columns are greedily
// grouped so columns sharing no row are differentiated in one dual pass.
// Throws SolverError mentioning the block id if a derivative is non-finite.
void ad_jacobian(const ResidualBlock& block, const double* x_local,
                 double* values);

enum class SolveStatus { optimal, max_iter, infeasible, regularized };
const char* to_string(SolveStatus s);

struct SolveOptions {
  int max_iter = 500;
  double tol_feas = 1e-6;   // infinity norm of all residual violations
  double tol_stat = 1e-4;   // scaled-space Lagrangian stationarity
  double tol_compl = 1e-4;  // complementarity at mu -> 0
  double mu_init = 0.1;
  double barrier_factor = 0.2;  // monotone decrease
  double sigma = 1e-3;          // Hessian damping in scaled space
  int lbfgs_memory = 10;        // 0 disables the quasi-Newton correction
  double ftb_tau = 0.995;       // fraction-to-boundary
  double armijo_c1 = 1e-4;
  int max_backtracks = 40;
  double bound_push = 1e-2;     // relative interior push of the start point
  double kappa_sigma = 1e10;    // bound-dual safeguard corridor
  bool quiet = true;
  std::function<void(const std::string&)> log;  // optional iteration log
};

struct SolveReport {
  SolveStatus status = SolveStatus::max_iter;
  int iterations = 0;
  double kkt_stationarity = 0.0;      // scaled space, see SolveResult docs
  double feasibility_inf_norm = 0.0;  // physical residual units
  double complementarity = 0.0;
  double objective = 0.0;
  double mu_final = 0.0;
  std::string worst_block;  // max-violating block at exit (diagnostics)
  int worst_row = -1;
  std::string message;
};

// Solution plus the multipliers needed to certify the KKT conditions:
//   stationarity(scaled) = || D (grad f + J_E' y_eq + J_I' y_ineq)
//                            - zl + zu ||_inf
// with D = diag(x_scale); zl, zu live in scaled space.  Row order of y_eq /
// y_ineq follows block order in the problem (equalities and inequalities
// counted separately); block_row_offset[i] gives block i's first row within
// its kind.
struct SolveResult {
  VecXd x;        // physical units
  VecXd y_eq;     // equality multipliers
  VecXd y_ineq;   // inequality multipliers (>= 0)
  VecXd slacks;   // inequality slacks (>= 0), physical residual units
  VecXd zl, zu;   // bound multipliers in scaled space
  std::vector<int> block_row_offset;
  SolveReport report;
};

SolveResult solve(const NlpProblem& problem, const SolveOptions& options);

// Narrow evaluation surface for substituting an external solver: everything
// a production NLP code needs, with no dependence on the built-in method.
class NlpEvaluator {
 public:
  explicit NlpEvaluator(const NlpProblem& problem);

  int n_vars() const { return n_; }
  int n_eq() const { return m_eq_; }
  int n_ineq() const { return m_ineq_; }

  double eval_objective(const VecXd& x) const;
  void eval_objective_gradient(const VecXd& x, VecXd* grad) const;
  // Residuals stacked in block order, equalities and inequalities separate.
  void eval_residuals(const VecXd& x, VecXd* r_eq, VecXd* r_ineq) const;
  // Jacobian triplets (row within kind, global column, value).
  void eval_jacobians(const VecXd& x,
                      std::vector<Eigen::Triplet<double>>* J_eq,
                      std::vector<Eigen::Triplet<double>>* J_ineq) const;

  const std::vector<int>& block_row_offset() const { return row_offset_; }
  const NlpProblem& problem() const { return *problem_; }

 private:
  const NlpProblem* problem_;
  int n_ = 0, m_eq_ = 0, m_ineq_ = 0;
  std::vector<int> row_offset_;
};

}  // namespace laptime
