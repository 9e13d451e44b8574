#pragma once

#include <vector>

#include "laptime/collocation.hpp"
#include "laptime/lqr.hpp"
#include "laptime/nlp.hpp"
#include "laptime/stochastics.hpp"
#include "laptime/track.hpp"
#include "laptime/vehicle.hpp"

namespace laptime {

// Entry state: on the centerline at the sector start, aligned with its
// heading, at the given speed.  The exit state is free.
struct BoundarySpec {
  double entry_speed = 40.0;  // m/s
};

// Solver settings sized for planner-scale problems: the iteration budget is
// raised over the library-wide default, which is tuned for small models.
inline SolveOptions planner_solver_defaults() {
  SolveOptions s;
  s.max_iter = 3000;
  return s;
}

// Grid, discretization, and solver settings shared by all planners.  The
// tlc/flc toggles select which inequality families receive back-off in the
// robust planners (the constraints themselves always hold nominally).
struct PlanOptions {
  int N = 140;  // intervals; nodes 0..N
  int d = 3;    // collocation stages per interval
  bool robust_tlc = true;
  bool robust_flc = true;
  CostRegularization reg;
  SolveOptions solver = planner_solver_defaults();
};

// Per-node view of a planned trajectory.  `control` is the piecewise
// constant input of the interval ending at this node (node 0 shows the
// first interval's input).  S1/S2 are the axle saturation ratios recomputed
// from the algebraic handles.
struct NodeRecord {
  double alpha = 0.0;  // normalized arc position k/N
  double s = 0.0;      // m
  double t = 0.0;      // s, cumulative
  Vec6d state = Vec6d::Zero();
  Vec3d control = Vec3d::Zero();
  double e = 0.0;  // m, lateral offset
  double Z1 = 0.0, Z2 = 0.0;  // N, vertical loads
  double Y1 = 0.0, Y2 = 0.0;  // N, lateral forces
  double S1 = 0.0, S2 = 0.0;  // saturation ratios
};

struct PlannedTrajectory {
  std::vector<NodeRecord> nodes;  // N+1
  std::vector<double> nu;         // s, per interval
  std::vector<Vec6d> stages;      // N*d stage states, interval-major
  double total_time = 0.0;        // s
  SolveReport report;
};

// Deterministic minimum-time plan.  Constraints are the nominal ones
// (zero back-off), so no confidence specification enters at all.
PlannedTrajectory plan_nominal(const TrackModel& track,
                               const VehicleParams& params,
                               const PlanOptions& opt,
                               const BoundarySpec& boundary = {});

// ---------------------------------------------------------------------------
// Open-loop robust planner: H covariance lineages per node.
// ---------------------------------------------------------------------------

// Lineage instances P_k^j: the covariance at node k of the lineage
// initialized j intervals earlier (P_k^0 is the constant reset value and is
// not stored).  For k < j the lineage starts at node 0 instead, so those
// instances duplicate the oldest available one; keeping them makes the grid
// rectangular and the variable count formula exact.
struct CovInstanceGrid {
  int N = 0, H = 0;
  std::vector<CovLTd> P;  // (k-1)*H + (j-1), k = 1..N, j = 1..H

  const CovLTd& at(int k, int j) const {
    return P[size_t(k - 1) * size_t(H) + size_t(j - 1)];
  }
};

// Index of the lineage whose instance tightens the constraints at node k:
// the fully propagated age H, or the oldest available during startup.
// Zero means the constant reset covariance itself (H = 0).
inline int instance_for_constraint(int k, int H) { return k < H ? k : H; }

struct OpenLoopPlan {
  PlannedTrajectory trajectory;
  CovInstanceGrid cov;
  // Per node k = 0..N, recomputed at the solution: back-off values applied
  // to each constraint family (zero where not robustified or at node 0).
  std::vector<double> beta_tlc;
  std::vector<double> beta_flc_front;
  std::vector<double> beta_flc_rear;
};

OpenLoopPlan plan_open_loop(const TrackModel& track, const VehicleParams& params,
                            const CovLTd& P0, const CovLTd& Q,
                            const ConfidenceSpec& conf, int H,
                            const PlanOptions& opt,
                            const BoundarySpec& boundary = {});

// ---------------------------------------------------------------------------
// Closed-loop robust planner: gain entries as bounded decision variables.
// ---------------------------------------------------------------------------

struct ClosedLoopPlan {
  PlannedTrajectory trajectory;
  PlannedTrajectory nominal;   // stage (i) result
  GainSchedule lqr;            // stage (ii): gains around the nominal plan
  std::vector<Mat26d> K_tilde; // stage (iii): solved minimal gains, per interval
  std::vector<Mat36d> K_ext;   // smoothed extension at the solved controls
  std::vector<CovLTd> P;       // closed-loop node covariances, k = 0..N
  std::vector<double> beta_tlc;
  std::vector<double> beta_flc_front;
  std::vector<double> beta_flc_rear;
};

// delta_k_fraction bounds each solved gain entry within that fraction of
// |K_hat| elementwise; entries where K_hat is zero stay pinned.
ClosedLoopPlan plan_closed_loop(const TrackModel& track,
                                const VehicleParams& params, const CovLTd& P0,
                                const CovLTd& Q, const ConfidenceSpec& conf,
                                const PlanOptions& opt,
                                const BoundarySpec& boundary = {},
                                double delta_k_fraction = 0.1,
                                const LqrWeights& weights = LqrWeights::defaults());

// ---------------------------------------------------------------------------
// Decision-variable inventory (the `size` subcommand prints these).
// ---------------------------------------------------------------------------

// Nominal: entry node (state + algebraic) plus per interval the controls,
// duration, stages, end state, and algebraic vector.
inline int n_vars_nominal(int N, int d) { return 11 + N * (15 + 6 * d); }

// Open-loop adds H lineages of (d stages + node) covariance triangles.
inline int n_vars_open_loop(int N, int d, int H) {
  return n_vars_nominal(N, d) + N * H * 21 * (1 + d);
}

// Closed-loop adds one covariance chain plus 12 gain entries per interval.
inline int n_vars_closed_loop(int N, int d) {
  return n_vars_nominal(N, d) + N * (12 + 21 * (1 + d));
}

}  // namespace laptime
