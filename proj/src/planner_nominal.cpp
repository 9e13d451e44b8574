#include "laptime/planner.hpp"

#include "planner_common.hpp"

namespace laptime {

PlannedTrajectory plan_nominal(const TrackModel& track,
                               const VehicleParams& params,
                               const PlanOptions& opt,
                               const BoundarySpec& boundary) {
  detail::AssemblyContext ctx =
      detail::make_context(track, params, opt, boundary, /*H=*/0,
                           /*closed_loop=*/false);
  NlpProblem problem;
  detail::build_nominal(ctx, &problem);
  const SolveResult result = solve(problem, opt.solver);
  detail::require_converged("plan_nominal", result.report);
  return detail::extract_trajectory(ctx, result);
}

}  // namespace laptime
