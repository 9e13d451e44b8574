#pragma once

// Internal assembly machinery shared by the three planners: the flat
// decision-variable layout, the common context (grid geometry, scales, node
// data), the nominal problem builder, and solution extraction.

#include <type_traits>
#include <vector>

#include "laptime/constraints.hpp"
#include "laptime/planner.hpp"

namespace laptime::detail {

// Bare scalar type of a residual-lambda argument element.
template <typename T>
using strip_t = std::remove_cv_t<std::remove_reference_t<T>>;

// Flat variable layout.  Nominal part:
//   [mu_0 (6), z_0 (5)] then per interval k = 1..N:
//   [u_k (3), nu_k (1), xi_{k,1..d} (6d), mu_k (6), z_k (5)].
// The open-loop planner appends H covariance lineages per interval, the
// closed-loop planner appends gain entries plus one covariance chain.
struct GridLayout {
  int N = 0, d = 0;
  int H = 0;                 // open-loop lineages appended when > 0
  bool closed_loop = false;  // gain + covariance chain appended when true

  int stride() const { return 15 + 6 * d; }
  int u(int k) const { return 11 + (k - 1) * stride(); }   // k >= 1
  int nu(int k) const { return u(k) + 3; }                 // k >= 1
  int xi(int k, int i) const { return u(k) + 4 + 6 * i; }  // k >= 1, 0 <= i < d
  int mu(int k) const { return k == 0 ? 0 : u(k) + 4 + 6 * d; }
  int z(int k) const { return k == 0 ? 6 : mu(k) + 6; }
  int n_nominal() const { return 11 + N * stride(); }

  int cov_set() const { return 21 * (d + 1); }  // d stages + end node

  // Open-loop lineage j at interval k (k = 1..N, j = 1..H).
  int ol_base(int k, int j) const {
    return n_nominal() + ((k - 1) * H + (j - 1)) * cov_set();
  }
  int ol_sigma(int k, int j, int i) const { return ol_base(k, j) + 21 * i; }
  int ol_P(int k, int j) const { return ol_base(k, j) + 21 * d; }

  // Closed-loop chain at interval k (k = 1..N).
  int cl_base(int k) const { return n_nominal() + (k - 1) * (12 + cov_set()); }
  int cl_K(int k) const { return cl_base(k); }  // 2x6 row-major
  int cl_sigma(int k, int i) const { return cl_base(k) + 12 + 21 * i; }
  int cl_P(int k) const { return cl_base(k) + 12 + 21 * d; }

  int n_total() const {
    if (H > 0) return n_nominal() + N * H * cov_set();
    if (closed_loop) return n_nominal() + N * (12 + cov_set());
    return n_nominal();
  }
};

struct AssemblyContext {
  const TrackModel* track = nullptr;
  VehicleParams params;
  PlanOptions opt;
  BoundarySpec boundary;
  GridLayout layout;
  CollocationScheme scheme;
  std::vector<TrackNode> nodes;  // N+1
  double ds = 0.0;               // m per interval

  // Variable scales (physical magnitude of one scaled unit).
  Vec6d mu_scale = Vec6d::Zero();
  Vec3d u_scale = Vec3d::Zero();
  double nu_scale = 0.1;
  double force_scale = 1.0;  // divides force residual rows and scales handles
};

AssemblyContext make_context(const TrackModel& track,
                             const VehicleParams& params,
                             const PlanOptions& opt,
                             const BoundarySpec& boundary, int H,
                             bool closed_loop);

// Constant per-node limit tightenings (indexed 0..N, node 0 unused).  The
// robust planners solve one statically tightened nominal pass before the
// joint solve so the joint iteration starts with strictly positive margins
// on every backed-off limit.
struct Tightenings {
  VecXd tlc;        // shrinks both lateral-offset bounds
  VecXd flc_front;  // lowers the unit saturation limit
  VecXd flc_rear;
};

// Exact back-off magnitudes gamma * sqrt(g' P g) evaluated at the trajectory
// stored in the nominal slice of x, with the node-k covariance triangle at
// variable p_base(k); honors the robust_tlc / robust_flc toggles.
Tightenings exact_backoffs(const AssemblyContext& ctx, const VecXd& x,
                           const std::function<int(int)>& p_base,
                           double gamma);

// Sizes the problem per the layout and fills the nominal variables, bounds,
// quasi-static warm start, residual blocks, and objective.  The robust
// planners pass emit_flc = false when they replace the friction-limit
// inequalities with their backed-off forms, and pass tightenings for the
// static seed pass.
void build_nominal(const AssemblyContext& ctx, NlpProblem* p,
                   bool emit_flc = true, const Tightenings* tight = nullptr);

// Overwrites the nominal slice of p->x0 with a previously solved trajectory
// (robust planners warm-start from the nominal plan).
void warm_start_from(const AssemblyContext& ctx, const PlannedTrajectory& traj,
                     NlpProblem* p);

PlannedTrajectory extract_trajectory(const AssemblyContext& ctx,
                                     const SolveResult& result);

// Throws SolverError unless the result converged (optimal or regularized).
void require_converged(const char* stage, const SolveReport& report);

// --- covariance / back-off assembly shared by the robust planners ---------

// Typical magnitude of each covariance triangle entry over the given time
// horizon; used both as variable scale and as residual row scale.
CovLTd cov_entry_scales(const CovLTd& P0, const CovLTd& Q, double horizon_s);

// Dynamics Jacobians at the warm-start stage states of interval k (B may be
// null when only A is needed).
void warm_stage_jacobians(const AssemblyContext& ctx, const VecXd& x0, int k,
                          std::vector<Mat6d>* A, std::vector<Mat63d>* B);

// Jacobian sparsity of one covariance collocation block.  Local variable
// order: [P_prev 21 (if has_prev)] [sigma 21d] [P_end 21] [xi 6d] [u 3]
// [nu 1] [K 12 (if has_K)].
std::vector<std::pair<int, int>> cov_block_sparsity(int d, bool has_prev,
                                                    bool has_K);

// Inequality blocks tightening the track and friction limits at nodes
// k = 1..N by the back-off of the covariance triangle starting at variable
// p_base(k), honoring the robust_tlc / robust_flc toggles.  Each tightened
// limit is stated in squared (polynomial) form.
void append_robust_blocks(const AssemblyContext& ctx, double gamma,
                          const std::function<int(int)>& p_base,
                          NlpProblem* p);

// Appends the open-loop covariance lineages (scales, warm start by exact
// propagation along the mean already present in p->x0, collocation blocks)
// plus the robust inequality blocks.  Requires a context built with H >= 1
// and the nominal slice of p filled by build_nominal / warm_start_from.
void build_open_loop_extension(const AssemblyContext& ctx, const CovLTd& P0,
                               const CovLTd& Q, double gamma, NlpProblem* p);

// Appends [base, base + count) to vars.
inline void append_range(std::vector<int>* vars, int base, int count) {
  for (int i = 0; i < count; ++i) vars->push_back(base + i);
}

}  // namespace laptime::detail
