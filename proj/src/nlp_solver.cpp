#include "laptime/nlp.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "laptime/errors.hpp"

namespace laptime {

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::max_iter: return "max_iter";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::regularized: return "regularized";
  }
  return "unknown";
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Greedy column grouping: columns whose declared rows never overlap can be
// differentiated in one dual pass.
std::vector<std::vector<int>> column_groups(const ResidualBlock& b) {
  const int nv = int(b.vars.size());
  std::vector<std::vector<int>> col_rows;
  col_rows.resize(size_t(nv));
  for (const auto& [r, c] : b.sparsity) col_rows[size_t(c)].push_back(r);
  std::vector<std::vector<int>> groups;
  std::vector<std::vector<char>> group_rows;
  for (int c = 0; c < nv; ++c) {
    bool placed = false;
    for (size_t g = 0; g < groups.size() && !placed; ++g) {
      bool clash = false;
      for (int r : col_rows[size_t(c)]) {
        if (group_rows[g][size_t(r)]) {
          clash = true;
          break;
        }
      }
      if (!clash) {
        groups[g].push_back(c);
        for (int r : col_rows[size_t(c)]) group_rows[g][size_t(r)] = 1;
        placed = true;
      }
    }
    if (!placed) {
      groups.push_back({c});
      group_rows.emplace_back(size_t(b.dim), char(0));
      for (int r : col_rows[size_t(c)]) group_rows.back()[size_t(r)] = 1;
    }
  }
  return groups;
}

struct BlockPlan {
  std::vector<std::vector<int>> groups;
  // For each group, indices into block.sparsity whose column is in the group.
  std::vector<std::vector<int>> entries;
  std::vector<Dual> x_dual, out_dual;  // reusable buffers
};

BlockPlan make_plan(const ResidualBlock& b) {
  BlockPlan p;
  p.groups = column_groups(b);
  p.entries.resize(p.groups.size());
  std::vector<int> group_of_col(b.vars.size(), -1);
  for (size_t g = 0; g < p.groups.size(); ++g) {
    for (int c : p.groups[g]) group_of_col[size_t(c)] = int(g);
  }
  for (size_t e = 0; e < b.sparsity.size(); ++e) {
    const int g = group_of_col[size_t(b.sparsity[e].second)];
    p.entries[size_t(g)].push_back(int(e));
  }
  p.x_dual.resize(b.vars.size());
  p.out_dual.resize(size_t(b.dim));
  return p;
}

void jacobian_with_plan(const ResidualBlock& b, BlockPlan& plan,
                        const double* x_local, double* values) {
  const int nv = int(b.vars.size());
  for (int c = 0; c < nv; ++c) plan.x_dual[size_t(c)] = Dual(x_local[c]);
  for (size_t g = 0; g < plan.groups.size(); ++g) {
    for (int c : plan.groups[g]) plan.x_dual[size_t(c)].d = 1.0;
    b.eval_dual(plan.x_dual.data(), plan.out_dual.data());
    for (int e : plan.entries[g]) {
      const double der = plan.out_dual[size_t(b.sparsity[size_t(e)].first)].d;
      if (!std::isfinite(der)) {
        throw SolverError("non-finite derivative in block '" + b.id +
                          "' row " + std::to_string(b.sparsity[size_t(e)].first));
      }
      values[e] = der;
    }
    for (int c : plan.groups[g]) plan.x_dual[size_t(c)].d = 0.0;
  }
}

}  // namespace

void ad_jacobian(const ResidualBlock& block, const double* x_local,
                 double* values) {
  BlockPlan plan = make_plan(block);
  jacobian_with_plan(block, plan, x_local, values);
}

NlpEvaluator::NlpEvaluator(const NlpProblem& problem) : problem_(&problem) {
  n_ = problem.n;
  row_offset_.resize(problem.blocks.size(), 0);
  for (size_t i = 0; i < problem.blocks.size(); ++i) {
    const ResidualBlock& b = problem.blocks[i];
    row_offset_[i] = b.is_inequality ? m_ineq_ : m_eq_;
    (b.is_inequality ? m_ineq_ : m_eq_) += b.dim;
  }
}

double NlpEvaluator::eval_objective(const VecXd& x) const {
  double f = 0.0;
  std::vector<double> local;
  for (const ObjectiveTerm& t : problem_->objective) {
    local.resize(t.vars.size());
    for (size_t j = 0; j < t.vars.size(); ++j) local[j] = x[t.vars[j]];
    f += t.eval_d(local.data());
  }
  return f;
}

void NlpEvaluator::eval_objective_gradient(const VecXd& x, VecXd* grad) const {
  grad->setZero(n_);
  std::vector<Dual> local;
  for (const ObjectiveTerm& t : problem_->objective) {
    local.resize(t.vars.size());
    for (size_t j = 0; j < t.vars.size(); ++j) local[j] = Dual(x[t.vars[j]]);
    for (size_t j = 0; j < t.vars.size(); ++j) {
      local[j].d = 1.0;
      const Dual v = t.eval_dual(local.data());
      if (!std::isfinite(v.d)) {
        throw SolverError("non-finite objective derivative");
      }
      (*grad)[t.vars[j]] += v.d;
      local[j].d = 0.0;
    }
  }
}

void NlpEvaluator::eval_residuals(const VecXd& x, VecXd* r_eq,
                                  VecXd* r_ineq) const {
  r_eq->setZero(m_eq_);
  r_ineq->setZero(m_ineq_);
  std::vector<double> local, out;
  for (size_t i = 0; i < problem_->blocks.size(); ++i) {
    const ResidualBlock& b = problem_->blocks[i];
    local.resize(b.vars.size());
    out.resize(size_t(b.dim));
    for (size_t j = 0; j < b.vars.size(); ++j) local[j] = x[b.vars[j]];
    b.eval_d(local.data(), out.data());
    VecXd& dst = b.is_inequality ? *r_ineq : *r_eq;
    for (int r = 0; r < b.dim; ++r) dst[row_offset_[i] + r] = out[size_t(r)];
  }
}

void NlpEvaluator::eval_jacobians(
    const VecXd& x, std::vector<Eigen::Triplet<double>>* J_eq,
    std::vector<Eigen::Triplet<double>>* J_ineq) const {
  J_eq->clear();
  J_ineq->clear();
  std::vector<double> local, values;
  for (size_t i = 0; i < problem_->blocks.size(); ++i) {
    const ResidualBlock& b = problem_->blocks[i];
    local.resize(b.vars.size());
    for (size_t j = 0; j < b.vars.size(); ++j) local[j] = x[b.vars[j]];
    values.resize(b.sparsity.size());
    ad_jacobian(b, local.data(), values.data());
    auto* dst = b.is_inequality ? J_ineq : J_eq;
    for (size_t e = 0; e < b.sparsity.size(); ++e) {
      dst->emplace_back(row_offset_[i] + b.sparsity[e].first,
                        b.vars[size_t(b.sparsity[e].second)], values[e]);
    }
  }
}

namespace {

// ---------------------------------------------------------------------------
// Built-in primal-dual interior-point solver.
//
// Symmetric KKT system (lower triangle assembled; dx, dc are step
// regularizations that perturb only the step, never the fixed point):
//   [ B + Sigma_x + dx I     0       J_E^T   J_I^T ] [Dx ]    [r_x]
//   [ 0                   Sigma_s      0       I   ] [Ds ] = -[r_s]
//   [ J_E                    0       -dc I     0   ] [DyE]    [r_E]
//   [ J_I                    I         0     -dc I ] [DyI]    [r_I]
// The right-hand side rows r_x, r_s carry the *barrier* gradients
// (mu over the slack to each bound) rather than the dual iterates, which
// appear only in the curvature terms Sigma_x = Z Gap^{-1}, Sigma_s = Y S^{-1}
// and in the termination test; this keeps every computed step a descent
// direction for the barrier merit even when the duals trail the barrier
// parameter after an aggressive boundary step.
// B = sigma I + D G D plus a compact limited-memory BFGS correction
// -U M^{-1} U^T applied through the Woodbury identity, so the sparse
// factorization only ever sees the positive-definite base and stays
// quasi-definite (safe for an unpivoted LDL^T).
// ---------------------------------------------------------------------------
class InteriorPointSolver {
 public:
  InteriorPointSolver(const NlpProblem& p, const SolveOptions& opt)
      : prob_(p), opt_(opt), eval_(p) {}

  SolveResult run();

 private:
  struct Point {
    VecXd x_full;   // physical units
    double f = 0.0;
    VecXd grad_t;   // scaled gradient on free vars
    VecXd c_eq, c_in;
    Eigen::SparseMatrix<double> J_eq, J_in;  // scaled, free columns
  };

  void build_variable_maps();
  VecXd full_x(const VecXd& xt) const;
  void evaluate(const VecXd& xt, Point* pt, bool with_derivatives);
  bool evaluate_cheap(const VecXd& xt, double* f, VecXd* c_eq, VecXd* c_in);
  double barrier_terms(const VecXd& xt, const VecXd& s, double mu) const;
  void apply_B0(const VecXd& v, VecXd* out) const;
  void push_pair(const VecXd& sv, const VecXd& yv);
  void locate_row(const VecXd& c_eq, const VecXd& c_in, std::string* block,
                  int* row) const;

  const NlpProblem& prob_;
  SolveOptions opt_;
  NlpEvaluator eval_;

  int nf_ = 0;
  std::vector<int> free_idx_;
  std::vector<int> to_free_;
  VecXd scale_;
  VecXd lb_t_, ub_t_;
  std::vector<char> has_lb_, has_ub_;
  VecXd fixed_value_;
  std::vector<Eigen::Triplet<double>> B_const_;
  std::vector<BlockPlan> plans_;
  int m_eq_ = 0, m_in_ = 0;

  std::vector<VecXd> lb_s_, lb_y_, lb_b0s_;
};

void InteriorPointSolver::build_variable_maps() {
  const int n = prob_.n;
  if (prob_.lb.size() != n || prob_.ub.size() != n || prob_.x0.size() != n) {
    throw SolverError("problem bounds/guess sized inconsistently");
  }
  scale_ = prob_.x_scale.size() == n ? prob_.x_scale : VecXd::Ones(n).eval();
  to_free_.assign(size_t(n), -1);
  fixed_value_ = VecXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    if (!(scale_[i] > 0.0)) throw SolverError("nonpositive variable scale");
    if (prob_.lb[i] > prob_.ub[i]) throw SolverError("lb > ub on a variable");
    if (prob_.lb[i] == prob_.ub[i]) {
      fixed_value_[i] = prob_.lb[i];
    } else {
      to_free_[size_t(i)] = int(free_idx_.size());
      free_idx_.push_back(i);
    }
  }
  nf_ = int(free_idx_.size());
  lb_t_.resize(nf_);
  ub_t_.resize(nf_);
  has_lb_.assign(size_t(nf_), 0);
  has_ub_.assign(size_t(nf_), 0);
  for (int j = 0; j < nf_; ++j) {
    const int g = free_idx_[size_t(j)];
    lb_t_[j] = prob_.lb[g] / scale_[g];
    ub_t_[j] = prob_.ub[g] / scale_[g];
    has_lb_[size_t(j)] = std::isfinite(lb_t_[j]) ? 1 : 0;
    has_ub_[size_t(j)] = std::isfinite(ub_t_[j]) ? 1 : 0;
  }
  for (const auto& t : prob_.objective_hessian) {
    const int fi = to_free_[size_t(t.row())];
    const int fj = to_free_[size_t(t.col())];
    if (fi < 0 || fj < 0) continue;
    const double v = t.value() * scale_[t.row()] * scale_[t.col()];
    B_const_.emplace_back(std::max(fi, fj), std::min(fi, fj), v);
  }
  plans_.reserve(prob_.blocks.size());
  for (const ResidualBlock& b : prob_.blocks) plans_.push_back(make_plan(b));
  m_eq_ = eval_.n_eq();
  m_in_ = eval_.n_ineq();
}

VecXd InteriorPointSolver::full_x(const VecXd& xt) const {
  VecXd x = fixed_value_;
  for (int j = 0; j < nf_; ++j) {
    const int g = free_idx_[size_t(j)];
    x[g] = xt[j] * scale_[g];
  }
  return x;
}

void InteriorPointSolver::evaluate(const VecXd& xt, Point* pt,
                                   bool with_derivatives) {
  pt->x_full = full_x(xt);
  pt->f = eval_.eval_objective(pt->x_full);
  if (!std::isfinite(pt->f)) throw SolverError("non-finite objective");
  eval_.eval_residuals(pt->x_full, &pt->c_eq, &pt->c_in);
  if (!pt->c_eq.allFinite() || !pt->c_in.allFinite()) {
    throw SolverError("non-finite residual at iterate");
  }
  if (!with_derivatives) return;

  VecXd grad;
  eval_.eval_objective_gradient(pt->x_full, &grad);
  pt->grad_t.resize(nf_);
  for (int j = 0; j < nf_; ++j) {
    const int g = free_idx_[size_t(j)];
    pt->grad_t[j] = grad[g] * scale_[g];
  }

  std::vector<Eigen::Triplet<double>> te, ti;
  std::vector<double> local, values;
  for (size_t i = 0; i < prob_.blocks.size(); ++i) {
    const ResidualBlock& b = prob_.blocks[i];
    local.resize(b.vars.size());
    for (size_t j = 0; j < b.vars.size(); ++j) local[j] = pt->x_full[b.vars[j]];
    values.resize(b.sparsity.size());
    jacobian_with_plan(b, plans_[i], local.data(), values.data());
    auto* dst = b.is_inequality ? &ti : &te;
    const int base = eval_.block_row_offset()[i];
    for (size_t e = 0; e < b.sparsity.size(); ++e) {
      const int g = b.vars[size_t(b.sparsity[e].second)];
      const int fj = to_free_[size_t(g)];
      if (fj < 0) continue;
      dst->emplace_back(base + b.sparsity[e].first, fj, values[e] * scale_[g]);
    }
  }
  pt->J_eq.resize(m_eq_, nf_);
  pt->J_eq.setFromTriplets(te.begin(), te.end());
  pt->J_in.resize(m_in_, nf_);
  pt->J_in.setFromTriplets(ti.begin(), ti.end());
}

bool InteriorPointSolver::evaluate_cheap(const VecXd& xt, double* f,
                                         VecXd* c_eq, VecXd* c_in) {
  try {
    const VecXd x = full_x(xt);
    *f = eval_.eval_objective(x);
    eval_.eval_residuals(x, c_eq, c_in);
  } catch (const std::exception&) {
    return false;
  }
  return std::isfinite(*f) && c_eq->allFinite() && c_in->allFinite();
}

double InteriorPointSolver::barrier_terms(const VecXd& xt, const VecXd& s,
                                          double mu) const {
  double acc = 0.0;
  for (int j = 0; j < nf_; ++j) {
    if (has_lb_[size_t(j)]) acc += std::log(xt[j] - lb_t_[j]);
    if (has_ub_[size_t(j)]) acc += std::log(ub_t_[j] - xt[j]);
  }
  for (int i = 0; i < m_in_; ++i) acc += std::log(s[i]);
  return -mu * acc;
}

void InteriorPointSolver::apply_B0(const VecXd& v, VecXd* out) const {
  *out = opt_.sigma * v;
  for (const auto& t : B_const_) {
    (*out)[t.row()] += t.value() * v[t.col()];
    if (t.row() != t.col()) (*out)[t.col()] += t.value() * v[t.row()];
  }
}

void InteriorPointSolver::push_pair(const VecXd& sv, const VecXd& yv) {
  if (opt_.lbfgs_memory <= 0) return;
  const double sn = sv.norm();
  if (!(sn > 1e-14) || !sv.allFinite() || !yv.allFinite()) return;
  VecXd b0s;
  apply_B0(sv, &b0s);
  const double sBs = sv.dot(b0s);
  if (!(sBs > 0.0)) return;
  double sy = sv.dot(yv);
  VecXd y = yv;
  if (sy < 0.2 * sBs) {  // Powell damping keeps the update positive definite
    const double theta = 0.8 * sBs / (sBs - sy);
    y = theta * yv + (1.0 - theta) * b0s;
    sy = sv.dot(y);
  }
  if (!(sy > 1e-12 * sn * y.norm())) return;
  lb_s_.push_back(sv);
  lb_y_.push_back(y);
  lb_b0s_.push_back(b0s);
  while (int(lb_s_.size()) > opt_.lbfgs_memory) {
    lb_s_.erase(lb_s_.begin());
    lb_y_.erase(lb_y_.begin());
    lb_b0s_.erase(lb_b0s_.begin());
  }
}

void InteriorPointSolver::locate_row(const VecXd& c_eq, const VecXd& c_in,
                                     std::string* block, int* row) const {
  double worst = -1.0;
  int kind = 0, r_abs = -1;
  for (int r = 0; r < m_eq_; ++r) {
    if (std::abs(c_eq[r]) > worst) {
      worst = std::abs(c_eq[r]);
      kind = 0;
      r_abs = r;
    }
  }
  for (int r = 0; r < m_in_; ++r) {
    if (c_in[r] > worst) {
      worst = c_in[r];
      kind = 1;
      r_abs = r;
    }
  }
  *block = "";
  *row = -1;
  if (r_abs < 0) return;
  for (size_t i = 0; i < prob_.blocks.size(); ++i) {
    const ResidualBlock& b = prob_.blocks[i];
    if ((b.is_inequality ? 1 : 0) != kind) continue;
    const int base = eval_.block_row_offset()[i];
    if (r_abs >= base && r_abs < base + b.dim) {
      *block = b.id;
      *row = r_abs - base;
      return;
    }
  }
}

SolveResult InteriorPointSolver::run() {
  build_variable_maps();

  // Scaled start, pushed strictly inside the bounds.
  VecXd xt(nf_);
  const double k1 = opt_.bound_push;
  for (int j = 0; j < nf_; ++j) {
    const int g = free_idx_[size_t(j)];
    double v = prob_.x0[g] / scale_[g];
    if (has_lb_[size_t(j)] && has_ub_[size_t(j)]) {
      const double range = ub_t_[j] - lb_t_[j];
      const double pl = std::min(k1 * std::max(1.0, std::abs(lb_t_[j])), k1 * range);
      const double pu = std::min(k1 * std::max(1.0, std::abs(ub_t_[j])), k1 * range);
      v = std::clamp(v, lb_t_[j] + pl, ub_t_[j] - pu);
    } else if (has_lb_[size_t(j)]) {
      v = std::max(v, lb_t_[j] + k1 * std::max(1.0, std::abs(lb_t_[j])));
    } else if (has_ub_[size_t(j)]) {
      v = std::min(v, ub_t_[j] - k1 * std::max(1.0, std::abs(ub_t_[j])));
    }
    xt[j] = v;
  }

  Point cur;
  evaluate(xt, &cur, true);

  double mu = opt_.mu_init;
  const double mu_min =
      std::max(1e-15, std::min(opt_.tol_compl, opt_.tol_stat) / 100.0);

  VecXd s(m_in_);
  for (int i = 0; i < m_in_; ++i) {
    s[i] = std::max({-cur.c_in[i], 0.1 * mu, 1e-8});
  }
  VecXd yE = VecXd::Zero(m_eq_);
  VecXd yI(m_in_);
  for (int i = 0; i < m_in_; ++i) yI[i] = mu / s[i];
  VecXd zl = VecXd::Zero(nf_), zu = VecXd::Zero(nf_);
  for (int j = 0; j < nf_; ++j) {
    if (has_lb_[size_t(j)]) zl[j] = std::min(mu / (xt[j] - lb_t_[j]), 1e8);
    if (has_ub_[size_t(j)]) zu[j] = std::min(mu / (ub_t_[j] - xt[j]), 1e8);
  }

  const int dim = nf_ + 2 * m_in_ + m_eq_;
  const int off_s = nf_;
  const int off_e = nf_ + m_in_;
  const int off_i = nf_ + m_in_ + m_eq_;
  const double dc = 1e-8;

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
  bool analyzed = false;

  SolveReport rep;
  double rho = 1.0;
  double delta_last = 0.0;
  bool regularized_recently = false;
  int stall = 0;
  double last_alpha = 0.0, last_dx = 0.0, last_dy = 0.0;
  int last_bt = 0;
  bool last_soc = false;
  // Levenberg-Marquardt-style damping, adapted to the line-search outcome.
  // The quasi-Newton model carries no constraint curvature, so on strongly
  // curved constraint manifolds it proposes steps whose quadratic violation
  // growth the merit function rejects; persistent backtracking is the
  // signature. Damping the primal diagonal shortens the proposal until the
  // merit accepts near-full steps, and relaxes again once it does.
  double lm = 0.0;
  const double lm_floor = 0.1 * opt_.sigma;

  // Pending quasi-Newton pair: step taken last iteration plus the old-point
  // Lagrangian gradient at the new multipliers.
  bool have_pending = false;
  VecXd pending_step, pending_part_old;

  int iter = 0;
  for (;; ++iter) {
    if (have_pending) {
      const VecXd part_new =
          cur.grad_t + cur.J_eq.transpose() * yE + cur.J_in.transpose() * yI;
      push_pair(pending_step, part_new - pending_part_old);
      have_pending = false;
    }

    // --- optimality measures -------------------------------------------
    const VecXd r_x = cur.grad_t + cur.J_eq.transpose() * yE +
                      cur.J_in.transpose() * yI - zl + zu;
    const double stat_raw = r_x.size() > 0 ? r_x.cwiseAbs().maxCoeff() : 0.0;
    double feas_phys = 0.0;
    for (int r = 0; r < m_eq_; ++r) {
      feas_phys = std::max(feas_phys, std::abs(cur.c_eq[r]));
    }
    for (int r = 0; r < m_in_; ++r) {
      feas_phys = std::max(feas_phys, cur.c_in[r]);
    }
    double compl0 = 0.0, compl_mu = 0.0, dual_l1 = 0.0;
    int n_compl = 0;
    for (int i = 0; i < m_in_; ++i) {
      compl0 = std::max(compl0, s[i] * yI[i]);
      compl_mu = std::max(compl_mu, std::abs(s[i] * yI[i] - mu));
      dual_l1 += std::abs(yI[i]);
      ++n_compl;
    }
    for (int j = 0; j < nf_; ++j) {
      if (has_lb_[size_t(j)]) {
        compl0 = std::max(compl0, (xt[j] - lb_t_[j]) * zl[j]);
        compl_mu = std::max(compl_mu, std::abs((xt[j] - lb_t_[j]) * zl[j] - mu));
        dual_l1 += zl[j];
        ++n_compl;
      }
      if (has_ub_[size_t(j)]) {
        compl0 = std::max(compl0, (ub_t_[j] - xt[j]) * zu[j]);
        compl_mu = std::max(compl_mu, std::abs((ub_t_[j] - xt[j]) * zu[j] - mu));
        dual_l1 += zu[j];
        ++n_compl;
      }
    }
    for (int r = 0; r < m_eq_; ++r) dual_l1 += std::abs(yE[r]);
    const double s_max = 100.0;
    const int denom = std::max(1, m_eq_ + m_in_ + n_compl);
    const double s_d = std::max(s_max, dual_l1 / denom) / s_max;

    rep.iterations = iter;
    rep.kkt_stationarity = stat_raw;
    rep.feasibility_inf_norm = feas_phys;
    rep.complementarity = compl0;
    rep.objective = cur.f;
    rep.mu_final = mu;

    if (opt_.log || !opt_.quiet) {
      std::ostringstream os;
      os << "it " << iter << " f " << cur.f << " feas " << feas_phys
         << " stat " << stat_raw << " compl " << compl0 << " mu " << mu;
      if (iter > 0) {
        os << " a " << last_alpha << " bt " << last_bt << " |dx| " << last_dx
           << " |dy| " << last_dy << " del " << delta_last << " lm " << lm
           << (last_soc ? " soc" : "");
      }
      if (opt_.log) opt_.log(os.str());
    }

    if (feas_phys <= opt_.tol_feas && stat_raw / s_d <= opt_.tol_stat &&
        compl0 / s_d <= opt_.tol_compl) {
      rep.status =
          regularized_recently ? SolveStatus::regularized : SolveStatus::optimal;
      break;
    }
    if (iter >= opt_.max_iter) {
      rep.status = SolveStatus::max_iter;
      rep.message = "iteration limit reached";
      break;
    }

    // --- monotone barrier decrease --------------------------------------
    double alg_feas = 0.0;
    for (int r = 0; r < m_eq_; ++r) {
      alg_feas = std::max(alg_feas, std::abs(cur.c_eq[r]));
    }
    for (int i = 0; i < m_in_; ++i) {
      alg_feas = std::max(alg_feas, std::abs(cur.c_in[i] + s[i]));
    }
    while (mu > mu_min &&
           std::max({stat_raw / s_d, alg_feas, compl_mu / s_d}) <= 10.0 * mu) {
      mu = std::max(mu_min, mu * opt_.barrier_factor);
      compl_mu = 0.0;
      for (int i = 0; i < m_in_; ++i) {
        compl_mu = std::max(compl_mu, std::abs(s[i] * yI[i] - mu));
      }
      for (int j = 0; j < nf_; ++j) {
        if (has_lb_[size_t(j)]) {
          compl_mu =
              std::max(compl_mu, std::abs((xt[j] - lb_t_[j]) * zl[j] - mu));
        }
        if (has_ub_[size_t(j)]) {
          compl_mu =
              std::max(compl_mu, std::abs((ub_t_[j] - xt[j]) * zu[j] - mu));
        }
      }
    }

    // --- KKT assembly ----------------------------------------------------
    VecXd sigma_x = VecXd::Zero(nf_);
    for (int j = 0; j < nf_; ++j) {
      if (has_lb_[size_t(j)]) sigma_x[j] += zl[j] / (xt[j] - lb_t_[j]);
      if (has_ub_[size_t(j)]) sigma_x[j] += zu[j] / (ub_t_[j] - xt[j]);
    }

    // The step right-hand side uses the primal barrier gradient (mu/gap),
    // not the bound duals: with the positive-definite (1,1) block this makes
    // the x-direction a guaranteed descent direction for the barrier merit.
    // The duals z enter only through Sigma_x and the termination test.
    VecXd res(dim);
    res.segment(0, nf_) =
        cur.grad_t + cur.J_eq.transpose() * yE + cur.J_in.transpose() * yI;
    for (int j = 0; j < nf_; ++j) {
      if (has_lb_[size_t(j)]) res[j] -= mu / (xt[j] - lb_t_[j]);
      if (has_ub_[size_t(j)]) res[j] += mu / (ub_t_[j] - xt[j]);
    }
    for (int i = 0; i < m_in_; ++i) res[off_s + i] = yI[i] - mu / s[i];
    res.segment(off_e, m_eq_) = cur.c_eq;
    for (int i = 0; i < m_in_; ++i) res[off_i + i] = cur.c_in[i] + s[i];

    double delta = 0.0;
    VecXd step;
    bool solved = false;
    MatXd wb_U, wb_Z;
    Eigen::PartialPivLU<MatXd> wb_lu;
    int wb_m = 0;
    for (int attempt = 0; attempt < 24 && !solved; ++attempt) {
      wb_m = 0;
      std::vector<Eigen::Triplet<double>> trips;
      trips.reserve(B_const_.size() + size_t(dim) +
                    size_t(cur.J_eq.nonZeros() + cur.J_in.nonZeros()) +
                    size_t(2 * m_in_ + m_eq_));
      for (const auto& t : B_const_) trips.push_back(t);
      for (int j = 0; j < nf_; ++j) {
        trips.emplace_back(j, j, opt_.sigma + delta + lm + sigma_x[j]);
      }
      for (int i = 0; i < m_in_; ++i) {
        trips.emplace_back(off_s + i, off_s + i, yI[i] / s[i]);
      }
      for (int k = 0; k < cur.J_eq.outerSize(); ++k) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(cur.J_eq, k); it;
             ++it) {
          trips.emplace_back(off_e + int(it.row()), int(it.col()), it.value());
        }
      }
      for (int k = 0; k < cur.J_in.outerSize(); ++k) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(cur.J_in, k); it;
             ++it) {
          trips.emplace_back(off_i + int(it.row()), int(it.col()), it.value());
        }
      }
      for (int i = 0; i < m_in_; ++i) {
        trips.emplace_back(off_i + i, off_s + i, 1.0);
      }
      for (int r = 0; r < m_eq_; ++r) {
        trips.emplace_back(off_e + r, off_e + r, -dc);
      }
      for (int i = 0; i < m_in_; ++i) {
        trips.emplace_back(off_i + i, off_i + i, -dc);
      }
      Eigen::SparseMatrix<double> K(dim, dim);
      K.setFromTriplets(trips.begin(), trips.end());
      if (!analyzed) {
        ldlt.analyzePattern(K);
        analyzed = true;
      }
      ldlt.factorize(K);
      if (ldlt.info() != Eigen::Success) {
        delta = (delta == 0.0) ? 1e-8 : delta * 10.0;
        continue;
      }

      VecXd base = ldlt.solve(-res);
      const int mqn = int(lb_s_.size());
      if (mqn > 0) {
        MatXd U = MatXd::Zero(dim, 2 * mqn);
        for (int p = 0; p < mqn; ++p) {
          U.block(0, p, nf_, 1) = lb_b0s_[size_t(p)];
          U.block(0, mqn + p, nf_, 1) = lb_y_[size_t(p)];
        }
        MatXd M(2 * mqn, 2 * mqn);
        for (int a = 0; a < mqn; ++a) {
          for (int b = 0; b < mqn; ++b) {
            M(a, b) = lb_s_[size_t(a)].dot(lb_b0s_[size_t(b)]);
            M(a, mqn + b) = (a > b) ? lb_s_[size_t(a)].dot(lb_y_[size_t(b)]) : 0.0;
            M(mqn + b, a) = M(a, mqn + b);
            M(mqn + a, mqn + b) =
                (a == b) ? -lb_s_[size_t(a)].dot(lb_y_[size_t(a)]) : 0.0;
          }
        }
        const MatXd Z = ldlt.solve(U);
        const MatXd T = M - U.transpose() * Z;
        Eigen::PartialPivLU<MatXd> lu(T);
        const VecXd w = lu.solve(U.transpose() * base);
        base += Z * w;
        wb_U = U;
        wb_Z = Z;
        wb_lu = lu;
        wb_m = mqn;
      }
      if (!base.allFinite()) {
        delta = (delta == 0.0) ? 1e-8 : delta * 10.0;
        continue;
      }
      step = base;
      solved = true;
    }
    if (!solved) {
      rep.status = SolveStatus::infeasible;
      rep.message = "KKT factorization failed under maximum regularization";
      locate_row(cur.c_eq, cur.c_in, &rep.worst_block, &rep.worst_row);
      break;
    }
    delta_last = delta;
    regularized_recently = delta > 0.0;

    // Solves the factorized KKT system for an extra right-hand side,
    // including the low-rank quasi-Newton correction.
    const auto kkt_apply = [&](const VecXd& rhs) -> VecXd {
      VecXd sol = ldlt.solve(rhs);
      if (wb_m > 0) {
        sol += wb_Z * wb_lu.solve(wb_U.transpose() * sol);
      }
      return sol;
    };

    const VecXd dx = step.segment(0, nf_);
    const VecXd ds = step.segment(off_s, m_in_);
    const VecXd dyE = step.segment(off_e, m_eq_);
    const VecXd dyI = step.segment(off_i, m_in_);
    VecXd dzl = VecXd::Zero(nf_), dzu = VecXd::Zero(nf_);
    for (int j = 0; j < nf_; ++j) {
      if (has_lb_[size_t(j)]) {
        const double gap = xt[j] - lb_t_[j];
        dzl[j] = mu / gap - zl[j] - zl[j] / gap * dx[j];
      }
      if (has_ub_[size_t(j)]) {
        const double gap = ub_t_[j] - xt[j];
        dzu[j] = mu / gap - zu[j] + zu[j] / gap * dx[j];
      }
    }

    // --- fraction-to-boundary --------------------------------------------
    const double tau = opt_.ftb_tau;
    double a_pri = 1.0, a_dual = 1.0;
    for (int i = 0; i < m_in_; ++i) {
      if (ds[i] < 0.0) a_pri = std::min(a_pri, -tau * s[i] / ds[i]);
      if (dyI[i] < 0.0) a_dual = std::min(a_dual, -tau * yI[i] / dyI[i]);
    }
    for (int j = 0; j < nf_; ++j) {
      if (has_lb_[size_t(j)]) {
        if (dx[j] < 0.0) {
          a_pri = std::min(a_pri, -tau * (xt[j] - lb_t_[j]) / dx[j]);
        }
        if (dzl[j] < 0.0 && zl[j] > 0.0) {
          a_dual = std::min(a_dual, -tau * zl[j] / dzl[j]);
        }
      }
      if (has_ub_[size_t(j)]) {
        if (dx[j] > 0.0) {
          a_pri = std::min(a_pri, tau * (ub_t_[j] - xt[j]) / dx[j]);
        }
        if (dzu[j] < 0.0 && zu[j] > 0.0) {
          a_dual = std::min(a_dual, -tau * zu[j] / dzu[j]);
        }
      }
    }

    // --- l1 merit line search ---------------------------------------------
    double viol0 = 0.0;
    for (int r = 0; r < m_eq_; ++r) viol0 += std::abs(cur.c_eq[r]);
    for (int i = 0; i < m_in_; ++i) viol0 += std::abs(cur.c_in[i] + s[i]);

    double bar_dot = cur.grad_t.dot(dx);
    for (int j = 0; j < nf_; ++j) {
      if (has_lb_[size_t(j)]) bar_dot -= mu * dx[j] / (xt[j] - lb_t_[j]);
      if (has_ub_[size_t(j)]) bar_dot += mu * dx[j] / (ub_t_[j] - xt[j]);
    }
    for (int i = 0; i < m_in_; ++i) bar_dot -= mu * ds[i] / s[i];

    double y_need = 0.0;
    if (m_eq_ > 0) y_need = (yE + dyE).cwiseAbs().maxCoeff();
    if (m_in_ > 0) y_need = std::max(y_need, (yI + dyI).cwiseAbs().maxCoeff());
    rho = std::max(rho, 1.1 * y_need);
    if (viol0 > 1e-14 && bar_dot > 0.0) {
      rho = std::max(rho, bar_dot / (0.5 * viol0));
    }
    const double dphi = std::min(bar_dot - rho * viol0, -1e-16);
    const double phi0 = cur.f + barrier_terms(xt, s, mu) + rho * viol0;

    double alpha = a_pri;
    bool accepted = false;
    bool soc_taken = false;
    double f_trial = 0.0;
    VecXd ce_trial, ci_trial, xt_trial, s_trial;
    int bt_used = 0;
    for (int bt = 0; bt <= opt_.max_backtracks; ++bt) {
      bt_used = bt;
      xt_trial = xt + alpha * dx;
      s_trial = s + alpha * ds;
      if (evaluate_cheap(xt_trial, &f_trial, &ce_trial, &ci_trial)) {
        double viol = 0.0;
        for (int r = 0; r < m_eq_; ++r) viol += std::abs(ce_trial[r]);
        for (int i = 0; i < m_in_; ++i) viol += std::abs(ci_trial[i] + s_trial[i]);
        const double phi =
            f_trial + barrier_terms(xt_trial, s_trial, mu) + rho * viol;
        if (phi <= phi0 + opt_.armijo_c1 * alpha * dphi) {
          accepted = true;
          break;
        }
        // Second-order correction: the l1 merit charges the full quadratic
        // bend of the constraint manifold against the step, which shrinks
        // alpha to useless sizes on strongly curved equalities (the Maratos
        // effect). Re-solve the same KKT system for the constraint values at
        // the trial point and retry the corrected step once. Only worth
        // trying when the rejection came from constraint curvature, i.e. the
        // violation grew along the step.
        if (bt == 0 && m_eq_ + m_in_ > 0 && viol > 2.0 * viol0 &&
            viol > opt_.tol_feas) {
          VecXd res_soc = VecXd::Zero(dim);
          res_soc.segment(off_e, m_eq_) = ce_trial;
          for (int i = 0; i < m_in_; ++i) {
            res_soc[off_i + i] = ci_trial[i] + s_trial[i];
          }
          const VecXd corr = kkt_apply(-res_soc);
          if (corr.allFinite()) {
            const VecXd dx2 = alpha * dx + corr.segment(0, nf_);
            const VecXd ds2 = alpha * ds + corr.segment(off_s, m_in_);
            double a2 = 1.0;
            for (int i = 0; i < m_in_; ++i) {
              if (ds2[i] < 0.0) a2 = std::min(a2, -tau * s[i] / ds2[i]);
            }
            for (int j = 0; j < nf_; ++j) {
              if (has_lb_[size_t(j)] && dx2[j] < 0.0) {
                a2 = std::min(a2, -tau * (xt[j] - lb_t_[j]) / dx2[j]);
              }
              if (has_ub_[size_t(j)] && dx2[j] > 0.0) {
                a2 = std::min(a2, tau * (ub_t_[j] - xt[j]) / dx2[j]);
              }
            }
            const VecXd xt2 = xt + a2 * dx2;
            const VecXd s2 = s + a2 * ds2;
            double f2 = 0.0;
            VecXd ce2, ci2;
            if (evaluate_cheap(xt2, &f2, &ce2, &ci2)) {
              double viol2 = 0.0;
              for (int r = 0; r < m_eq_; ++r) viol2 += std::abs(ce2[r]);
              for (int i = 0; i < m_in_; ++i) {
                viol2 += std::abs(ci2[i] + s2[i]);
              }
              const double phi2 =
                  f2 + barrier_terms(xt2, s2, mu) + rho * viol2;
              if (viol2 <= 0.99 * viol &&
                  phi2 <= phi0 + opt_.armijo_c1 * alpha * dphi) {
                xt_trial = xt2;
                s_trial = s2;
                f_trial = f2;
                ce_trial = ce2;
                ci_trial = ci2;
                accepted = true;
                soc_taken = true;
                break;
              }
            }
          }
        }
      }
      alpha *= 0.5;
    }
    last_alpha = accepted ? alpha : 0.0;
    last_bt = bt_used;
    last_soc = soc_taken;
    last_dx = dx.size() > 0 ? dx.cwiseAbs().maxCoeff() : 0.0;
    last_dy = dyE.size() > 0 ? dyE.cwiseAbs().maxCoeff() : 0.0;
    if (bt_used >= 3) {
      lm = std::min(std::max(lm * 4.0, lm_floor), 1e6 * opt_.sigma);
    } else if (accepted && bt_used <= 1) {
      lm = (lm <= lm_floor) ? 0.0 : 0.25 * lm;
    }
    if (!accepted) {
      ++stall;
      if (stall >= 5) {
        rep.status = feas_phys > 100.0 * opt_.tol_feas ? SolveStatus::infeasible
                                                       : SolveStatus::max_iter;
        rep.message = "line search stalled";
        locate_row(cur.c_eq, cur.c_in, &rep.worst_block, &rep.worst_row);
        break;
      }
      // Recenter the bound and slack duals before retrying: stale duals
      // distort the curvature terms after a step that ran far along the
      // fraction-to-boundary limit.
      for (int j = 0; j < nf_; ++j) {
        if (has_lb_[size_t(j)]) zl[j] = mu / (xt[j] - lb_t_[j]);
        if (has_ub_[size_t(j)]) zu[j] = mu / (ub_t_[j] - xt[j]);
      }
      for (int i = 0; i < m_in_; ++i) yI[i] = mu / s[i];
      continue;  // re-assemble with fresh curvature next round
    }
    stall = 0;

    // --- accept ------------------------------------------------------------
    // Constraint multipliers advance with the primal step length so the dual
    // iterates cannot run away from a backtracked primal point; only the
    // bound duals use the dual fraction-to-boundary step. The slack
    // multipliers additionally stay within their own fraction-to-boundary
    // limit to remain positive.
    const VecXd yE_new = yE + alpha * dyE;
    const VecXd yI_new = yI + std::min(alpha, a_dual) * dyI;
    if (opt_.lbfgs_memory > 0) {
      pending_part_old = cur.grad_t + cur.J_eq.transpose() * yE_new +
                         cur.J_in.transpose() * yI_new;
      pending_step = xt_trial - xt;
      have_pending = true;
    }
    xt = xt_trial;
    s = s_trial;
    yE = yE_new;
    yI = yI_new;
    zl += a_dual * dzl;
    zu += a_dual * dzu;
    for (int j = 0; j < nf_; ++j) {  // dual safeguard corridor
      if (has_lb_[size_t(j)]) {
        const double gap = xt[j] - lb_t_[j];
        zl[j] = std::clamp(zl[j], mu / (opt_.kappa_sigma * gap),
                           opt_.kappa_sigma * mu / gap);
      }
      if (has_ub_[size_t(j)]) {
        const double gap = ub_t_[j] - xt[j];
        zu[j] = std::clamp(zu[j], mu / (opt_.kappa_sigma * gap),
                           opt_.kappa_sigma * mu / gap);
      }
    }
    evaluate(xt, &cur, true);
  }

  if (rep.status == SolveStatus::infeasible || rep.status == SolveStatus::max_iter) {
    if (rep.worst_block.empty()) {
      locate_row(cur.c_eq, cur.c_in, &rep.worst_block, &rep.worst_row);
    }
  }
  (void)delta_last;

  SolveResult out;
  out.x = cur.x_full;
  out.y_eq = yE;
  out.y_ineq = yI;
  out.slacks = s;
  out.zl = VecXd::Zero(prob_.n);
  out.zu = VecXd::Zero(prob_.n);
  for (int j = 0; j < nf_; ++j) {
    out.zl[free_idx_[size_t(j)]] = zl[j];
    out.zu[free_idx_[size_t(j)]] = zu[j];
  }
  out.block_row_offset = eval_.block_row_offset();
  out.report = rep;
  return out;
}

}  // namespace

SolveResult solve(const NlpProblem& problem, const SolveOptions& options) {
  InteriorPointSolver s(problem, options);
  return s.run();
}

}  // namespace laptime
