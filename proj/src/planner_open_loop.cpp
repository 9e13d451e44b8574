#include <string>
#include <utility>
#include <vector>

#include "laptime/errors.hpp"
#include "laptime/planner.hpp"
#include "planner_common.hpp"

namespace laptime {

namespace detail {

void build_open_loop_extension(const AssemblyContext& ctx, const CovLTd& P0,
                               const CovLTd& Q, double gamma, NlpProblem* p) {
  const GridLayout& L = ctx.layout;
  const int N = L.N, d = L.d, H = L.H;

  // Covariance entries carry no bounds: the equality chain pins every
  // triangle given the reset covariance.  Scales follow the expected entry
  // magnitude over an aged lineage.
  const CovLTd csc = cov_entry_scales(P0, Q, double(H) * ctx.ds / 15.0);
  for (int k = 1; k <= N; ++k) {
    for (int j = 1; j <= H; ++j) {
      for (int i = 0; i <= d; ++i) {
        const int base = L.ol_base(k, j) + kNcov * i;
        for (int m = 0; m < kNcov; ++m) p->x_scale[base + m] = csc[m];
      }
    }
  }

  // Warm start: exact lineage propagation along the mean in p->x0.
  {
    std::vector<CovLTd> row_prev(size_t(H) + 1), row(size_t(H) + 1);
    std::vector<Mat6d> A;
    std::vector<CovLTd> sig;
    CovLTd P_end;
    for (int k = 1; k <= N; ++k) {
      warm_stage_jacobians(ctx, p->x0, k, &A, nullptr);
      const double nu = p->x0[L.nu(k)];
      for (int j = 1; j <= H; ++j) {
        const CovLTd& from =
            (j == 1 || k == 1) ? P0 : row_prev[size_t(j) - 1];
        solve_cov_interval(ctx.scheme, from, A, Q, nu, &sig, &P_end);
        for (int i = 0; i < d; ++i) {
          p->x0.segment<kNcov>(L.ol_sigma(k, j, i)) = sig[size_t(i)];
        }
        p->x0.segment<kNcov>(L.ol_P(k, j)) = P_end;
        row[size_t(j)] = P_end;
      }
      std::swap(row_prev, row);
    }
  }

  // Covariance collocation blocks, one per (interval, lineage).  Lineage 1
  // restarts from the reset covariance every interval; older lineages chain
  // to the previous node (clamping to the reset value at the first node,
  // where no older instance exists).
  const CollocationScheme scheme = ctx.scheme;
  const VehicleParams vp = ctx.params;
  const auto sparsity_chain = cov_block_sparsity(d, true, false);
  const auto sparsity_reset = cov_block_sparsity(d, false, false);
  for (int k = 1; k <= N; ++k) {
    for (int j = 1; j <= H; ++j) {
      const bool has_prev = (j > 1 && k > 1);
      std::vector<int> vars;
      vars.reserve(size_t((has_prev ? 21 : 0) + 21 * (d + 1) + 6 * d + 4));
      if (has_prev) append_range(&vars, L.ol_P(k - 1, j - 1), kNcov);
      append_range(&vars, L.ol_sigma(k, j, 0), kNcov * d);
      append_range(&vars, L.ol_P(k, j), kNcov);
      append_range(&vars, L.xi(k, 0), 6 * d);
      append_range(&vars, L.u(k), 3);
      vars.push_back(L.nu(k));
      ResidualBlock b = make_block(
          "cov[" + std::to_string(k) + "][" + std::to_string(j) + "]", false,
          kNcov * (d + 1), std::move(vars),
          [scheme, vp, d, Q, P0, has_prev, csc](const auto* x, auto* out) {
            using S = strip_t<decltype(*x)>;
            const int sig0 = has_prev ? kNcov : 0;
            const int pend0 = sig0 + kNcov * d;
            const int xi0 = pend0 + kNcov;
            const int u0 = xi0 + 6 * d;
            CovLT<S> P_prev, P_end, Qs;
            for (int m = 0; m < kNcov; ++m) {
              P_prev[m] = has_prev ? x[m] : S(P0[m]);
              P_end[m] = x[pend0 + m];
              Qs[m] = S(Q[m]);
            }
            Vec3<S> u;
            for (int c = 0; c < kNu; ++c) u[c] = x[u0 + c];
            const S nu = x[u0 + 3];
            std::vector<Mat6<S>> A;
            A.resize(size_t(d));
            for (int i = 0; i < d; ++i) {
              Vec6<S> st;
              for (int c = 0; c < kNx; ++c) st[c] = x[xi0 + 6 * i + c];
              jacobians(st, u, vp, &A[size_t(i)],
                        static_cast<Mat63<S>*>(nullptr));
            }
            cov_collocation_residual(scheme, P_prev, x + sig0, P_end, A, Qs,
                                     nu, out);
            for (int r = 0; r < kNcov * (d + 1); ++r) {
              out[r] = out[r] / csc[r % kNcov];
            }
          });
      b.sparsity = has_prev ? sparsity_chain : sparsity_reset;
      p->blocks.push_back(std::move(b));
    }
  }

  append_robust_blocks(
      ctx, gamma,
      [&L, H](int k) { return L.ol_P(k, instance_for_constraint(k, H)); }, p);
}

}  // namespace detail

OpenLoopPlan plan_open_loop(const TrackModel& track,
                            const VehicleParams& params, const CovLTd& P0,
                            const CovLTd& Q, const ConfidenceSpec& conf, int H,
                            const PlanOptions& opt,
                            const BoundarySpec& boundary) {
  if (H < 1) throw ConfigError("open-loop planner: H must be >= 1");
  if (!(conf.gamma >= 0.0)) {
    throw ConfigError("open-loop planner: confidence gain must be >= 0");
  }

  const PlannedTrajectory nominal = plan_nominal(track, params, opt, boundary);

  detail::AssemblyContext ctx =
      detail::make_context(track, params, opt, boundary, H,
                           /*closed_loop=*/false);
  const detail::GridLayout& L = ctx.layout;
  const int N = L.N;

  NlpProblem p;
  detail::build_nominal(ctx, &p, /*emit_flc=*/!opt.robust_flc);
  detail::warm_start_from(ctx, nominal, &p);
  detail::build_open_loop_extension(ctx, P0, Q, conf.gamma, &p);

  // The covariance stage starts from an already-converged nominal trajectory
  // with exactly propagated covariances, so the solve is a continuation, not a
  // cold start: resume the barrier near where the nominal stage left off and
  // keep the bound push small enough not to displace the warm point.
  SolveOptions warm = opt.solver;
  warm.mu_init = 1e-4;
  warm.bound_push = 1e-6;

  const SolveResult result = solve(p, warm);
  detail::require_converged("plan_open_loop", result.report);

  OpenLoopPlan plan;
  plan.trajectory = detail::extract_trajectory(ctx, result);
  plan.cov.N = N;
  plan.cov.H = H;
  plan.cov.P.resize(size_t(N) * size_t(H));
  for (int k = 1; k <= N; ++k) {
    for (int j = 1; j <= H; ++j) {
      plan.cov.P[size_t(k - 1) * size_t(H) + size_t(j - 1)] =
          result.x.segment<kNcov>(L.ol_P(k, j));
    }
  }
  plan.beta_tlc.assign(size_t(N) + 1, 0.0);
  plan.beta_flc_front.assign(size_t(N) + 1, 0.0);
  plan.beta_flc_rear.assign(size_t(N) + 1, 0.0);
  for (int k = 1; k <= N; ++k) {
    const CovLTd& P = plan.cov.at(k, instance_for_constraint(k, H));
    const NodeRecord& rec = plan.trajectory.nodes[size_t(k)];
    if (opt.robust_tlc) {
      plan.beta_tlc[size_t(k)] =
          backoff(tlc_gradient(ctx.nodes[size_t(k)]), P, conf.gamma);
      const auto pair = tlc_residuals(rec.e, ctx.nodes[size_t(k)], P, conf);
      if (pair.first.flag) {
        throw SolverError("open-loop plan: track closed by back-off at node " +
                          std::to_string(k));
      }
    }
    if (opt.robust_flc) {
      plan.beta_flc_front[size_t(k)] = backoff(
          grad_saturation_states(rec.state, rec.control, ctx.params, kFront),
          P, conf.gamma);
      plan.beta_flc_rear[size_t(k)] = backoff(
          grad_saturation_states(rec.state, rec.control, ctx.params, kRear),
          P, conf.gamma);
    }
  }
  return plan;
}

}  // namespace laptime
