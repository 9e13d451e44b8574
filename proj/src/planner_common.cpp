#include "planner_common.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <type_traits>

#include "laptime/errors.hpp"

namespace laptime::detail {
namespace {

constexpr double kSpeedCap = 95.0;      // m/s, state box on u
constexpr double kSideSlipBound = 8.0;  // m/s, state box on v
constexpr double kYawRateBound = 2.5;   // rad/s, state box on r
constexpr double kPosMargin = 25.0;     // m beyond the centerline bounding box
constexpr double kHeadingMargin = 1.5;  // rad beyond the sampled heading range

double speed_floor(const VehicleParams& p) { return p.u_min + 2.0; }

// Axle handle values implied by a state/control pair (used for warm starts
// and for recomputing saturation ratios at a solution).
struct HandleValues {
  double Z1, Z2, Y1, Y2;
};

HandleValues handles_from(const Vec6d& x, const Vec3d& ctrl,
                          const VehicleParams& p) {
  const AxleLoads loads = axle_vertical_loads(ctrl, p);
  double a1, a2;
  slip_angles(x, ctrl, p, a1, a2);
  return {loads.Z1, loads.Z2,
          axle_lateral_force(a1, loads.Z1, kFront, p),
          axle_lateral_force(a2, loads.Z2, kRear, p)};
}

// Quasi-static speed profile: lateral-acceleration caps at the nodes joined
// by forward/backward longitudinal-acceleration passes.
std::vector<double> speed_profile(const AssemblyContext& ctx) {
  const VehicleParams& p = ctx.params;
  const int N = ctx.layout.N;
  const double u_lo = speed_floor(p);
  const double a_lat = 0.85 * std::min(p.mu_y[kFront], p.mu_y[kRear]) * kGravity;
  const double a_lon =
      0.7 * std::min(p.max_drive_force / p.mass,
                     std::min(p.mu_x[kFront], p.mu_x[kRear]) * kGravity);
  auto cap = [&](double kappa) {
    const double c = std::sqrt(a_lat / std::max(std::abs(kappa), 1e-6));
    return std::clamp(c, u_lo + 1.0, 0.95 * kSpeedCap);
  };
  std::vector<double> u(size_t(N) + 1);
  u[0] = ctx.boundary.entry_speed;
  for (int k = 1; k <= N; ++k) {
    const double reach =
        std::sqrt(u[size_t(k) - 1] * u[size_t(k) - 1] + 2.0 * a_lon * ctx.ds);
    u[size_t(k)] = std::min(cap(ctx.nodes[size_t(k)].curvature), reach);
  }
  for (int k = N - 1; k >= 1; --k) {
    const double reach =
        std::sqrt(u[size_t(k) + 1] * u[size_t(k) + 1] + 2.0 * a_lon * ctx.ds);
    u[size_t(k)] = std::min(u[size_t(k)], reach);
  }
  return u;
}

void quasi_static_start(const AssemblyContext& ctx, VecXd* x0) {
  const GridLayout& L = ctx.layout;
  const VehicleParams& p = ctx.params;
  const int N = L.N, d = L.d;
  const std::vector<double> uprof = speed_profile(ctx);

  for (int k = 0; k <= N; ++k) {
    const TrackNode& node = ctx.nodes[size_t(k)];
    const int m = L.mu(k);
    (*x0)[m + kU] = uprof[size_t(k)];
    (*x0)[m + kV] = 0.0;
    (*x0)[m + kR] = uprof[size_t(k)] * node.curvature;
    (*x0)[m + kXG] = node.c.x();
    (*x0)[m + kYG] = node.c.y();
    (*x0)[m + kPsi] = node.heading;
  }
  for (int k = 1; k <= N; ++k) {
    const double u_prev = uprof[size_t(k) - 1];
    const double u_next = uprof[size_t(k)];
    const double a = (u_next * u_next - u_prev * u_prev) / (2.0 * ctx.ds);
    const double fx = p.mass * a;
    const double s_mid = (double(k) - 0.5) * ctx.ds;
    const int u = L.u(k);
    (*x0)[u + kFxA] = std::clamp(fx, 0.0, 0.9 * p.max_drive_force);
    (*x0)[u + kFxB] = std::clamp(fx, -0.9 * p.max_brake_force, 0.0);
    (*x0)[u + kDelta] = std::clamp(p.wheelbase() * ctx.track->curvature_at(s_mid),
                                   -0.8 * p.max_steer, 0.8 * p.max_steer);
    (*x0)[L.nu(k)] = ctx.ds / (0.5 * (u_prev + u_next));
    for (int i = 0; i < d; ++i) {
      const double tau = ctx.scheme.tau[i];
      const double s_pos = (double(k) - 1.0 + tau) * ctx.ds;
      const TrackSamplePoint sp = ctx.track->at(s_pos);
      const double u_st = u_prev + tau * (u_next - u_prev);
      const int xi = L.xi(k, i);
      (*x0)[xi + kU] = u_st;
      (*x0)[xi + kV] = 0.0;
      (*x0)[xi + kR] = u_st * ctx.track->curvature_at(s_pos);
      (*x0)[xi + kXG] = sp.x;
      (*x0)[xi + kYG] = sp.y;
      (*x0)[xi + kPsi] = sp.heading;
    }
  }
  for (int k = 0; k <= N; ++k) {
    const int m = L.mu(k);
    const Vec6d state = x0->segment<6>(m);
    const Vec3d ctrl = x0->segment<3>(L.u(std::max(k, 1)));
    const HandleValues h = handles_from(state, ctrl, p);
    const int z = L.z(k);
    (*x0)[z + 0] = 0.0;  // e: warm start rides the centerline
    (*x0)[z + 1] = h.Z1;
    (*x0)[z + 2] = h.Z2;
    (*x0)[z + 3] = h.Y1;
    (*x0)[z + 4] = h.Y2;
  }
}

}  // namespace

AssemblyContext make_context(const TrackModel& track,
                             const VehicleParams& params,
                             const PlanOptions& opt,
                             const BoundarySpec& boundary, int H,
                             bool closed_loop) {
  params.validate();
  if (opt.N < 2) throw ConfigError("planner: N must be >= 2");
  if (boundary.entry_speed <= speed_floor(params) + 0.5 ||
      boundary.entry_speed >= kSpeedCap - 1.0) {
    throw ConfigError("planner: entry speed outside the speed box");
  }
  AssemblyContext ctx;
  ctx.track = &track;
  ctx.params = params;
  ctx.opt = opt;
  ctx.boundary = boundary;
  ctx.layout = GridLayout{opt.N, opt.d, H, closed_loop};
  ctx.scheme = gl_scheme(opt.d);  // rejects unsupported stage counts
  ctx.nodes.reserve(size_t(opt.N) + 1);
  for (int k = 0; k <= opt.N; ++k) {
    ctx.nodes.push_back(node_at(track, k, opt.N, params));
  }
  ctx.ds = track.total_length() / opt.N;
  ctx.mu_scale << 10.0, 1.0, 0.5, 10.0, 10.0, 0.5;
  ctx.u_scale << 5000.0, 5000.0, 0.1;
  ctx.nu_scale = std::clamp(ctx.ds / 30.0, 5e-3, 1.0);
  ctx.force_scale = 0.5 * params.mass * kGravity;
  return ctx;
}

void build_nominal(const AssemblyContext& ctx, NlpProblem* p, bool emit_flc,
                   const Tightenings* tight) {
  const GridLayout& L = ctx.layout;
  const VehicleParams& vp = ctx.params;
  const int N = L.N, d = L.d;
  const double inf = std::numeric_limits<double>::infinity();

  p->n = L.n_total();
  p->lb = VecXd::Constant(p->n, -inf);
  p->ub = VecXd::Constant(p->n, inf);
  p->x0 = VecXd::Zero(p->n);
  p->x_scale = VecXd::Ones(p->n);

  // --- bounds and scales --------------------------------------------------
  double x_lo = inf, x_hi = -inf, y_lo = inf, y_hi = -inf;
  double h_lo = inf, h_hi = -inf;
  for (const TrackNode& node : ctx.nodes) {
    x_lo = std::min(x_lo, node.c.x());
    x_hi = std::max(x_hi, node.c.x());
    y_lo = std::min(y_lo, node.c.y());
    y_hi = std::max(y_hi, node.c.y());
    h_lo = std::min(h_lo, node.heading);
    h_hi = std::max(h_hi, node.heading);
  }
  const double u_lo = speed_floor(vp);
  const double z_hi = vp.mass * kGravity;
  const double y_abs = std::max(vp.mu_y[kFront], vp.mu_y[kRear]) * z_hi;

  auto state_box = [&](int base) {
    p->lb[base + kU] = u_lo;
    p->ub[base + kU] = kSpeedCap;
    p->lb[base + kV] = -kSideSlipBound;
    p->ub[base + kV] = kSideSlipBound;
    p->lb[base + kR] = -kYawRateBound;
    p->ub[base + kR] = kYawRateBound;
    p->lb[base + kXG] = x_lo - kPosMargin;
    p->ub[base + kXG] = x_hi + kPosMargin;
    p->lb[base + kYG] = y_lo - kPosMargin;
    p->ub[base + kYG] = y_hi + kPosMargin;
    p->lb[base + kPsi] = h_lo - kHeadingMargin;
    p->ub[base + kPsi] = h_hi + kHeadingMargin;
    p->x_scale.segment<6>(base) = ctx.mu_scale;
  };
  auto z_box = [&](int base, const TrackNode& node) {
    p->lb[base + 0] = node.e_min;
    p->ub[base + 0] = node.e_max;
    for (int j : {1, 2}) {
      p->lb[base + j] = vp.z_floor;
      p->ub[base + j] = z_hi;
    }
    for (int j : {3, 4}) {
      p->lb[base + j] = -y_abs;
      p->ub[base + j] = y_abs;
    }
    p->x_scale[base + 0] = 1.0;
    p->x_scale.segment<4>(base + 1).setConstant(ctx.force_scale);
  };

  for (int k = 0; k <= N; ++k) {
    state_box(L.mu(k));
    z_box(L.z(k), ctx.nodes[size_t(k)]);
  }
  if (tight != nullptr) {
    for (int k = 1; k <= N; ++k) {
      p->lb[L.z(k)] += tight->tlc[k];
      p->ub[L.z(k)] -= tight->tlc[k];
      if (p->lb[L.z(k)] >= p->ub[L.z(k)]) {
        throw SolverError("track closed by back-off at node " +
                          std::to_string(k));
      }
    }
  }
  for (int k = 1; k <= N; ++k) {
    const int u = L.u(k);
    p->lb[u + kFxA] = 0.0;
    p->ub[u + kFxA] = vp.max_drive_force;
    p->lb[u + kFxB] = -vp.max_brake_force;
    p->ub[u + kFxB] = 0.0;
    p->lb[u + kDelta] = -vp.max_steer;
    p->ub[u + kDelta] = vp.max_steer;
    p->x_scale.segment<3>(u) = ctx.u_scale;
    p->lb[L.nu(k)] = std::max(1e-4, ctx.ds / (2.0 * kSpeedCap));
    p->ub[L.nu(k)] = ctx.ds / 2.0;
    p->x_scale[L.nu(k)] = ctx.nu_scale;
    for (int i = 0; i < d; ++i) state_box(L.xi(k, i));
  }

  // Entry state pinned: centerline start, aligned, at the entry speed.  The
  // entry offset is pinned to zero (its on-plane equality would otherwise be
  // rank-deficient against the pinned position).
  {
    const TrackNode& n0 = ctx.nodes[0];
    Vec6d entry;
    entry << ctx.boundary.entry_speed, 0.0, 0.0, n0.c.x(), n0.c.y(), n0.heading;
    p->lb.segment<6>(L.mu(0)) = entry;
    p->ub.segment<6>(L.mu(0)) = entry;
    p->lb[L.z(0)] = 0.0;
    p->ub[L.z(0)] = 0.0;
  }

  quasi_static_start(ctx, &p->x0);

  // --- residual blocks ----------------------------------------------------
  const CollocationScheme scheme = ctx.scheme;
  const Vec6d row_scale = ctx.mu_scale;
  const double fs = ctx.force_scale;

  for (int k = 1; k <= N; ++k) {
    std::vector<int> vars;
    vars.reserve(size_t(16 + 6 * d));
    append_range(&vars, L.mu(k - 1), 6);
    append_range(&vars, L.xi(k, 0), 6 * d);
    append_range(&vars, L.mu(k), 6);
    append_range(&vars, L.u(k), 3);
    vars.push_back(L.nu(k));
    p->blocks.push_back(make_block(
        "dyn[" + std::to_string(k) + "]", false, 6 * d + 6, std::move(vars),
        [scheme, vp, d, row_scale](const auto* x, auto* out) {
          using S = strip_t<decltype(*x)>;
          Vec6<S> mu_prev, mu_k;
          Vec3<S> u;
          for (int m = 0; m < kNx; ++m) {
            mu_prev[m] = x[m];
            mu_k[m] = x[6 + 6 * d + m];
          }
          for (int m = 0; m < kNu; ++m) u[m] = x[12 + 6 * d + m];
          const S nu = x[15 + 6 * d];
          mean_collocation_residual(scheme, mu_prev, x + 6, mu_k, u, nu, vp,
                                    out);
          for (int r = 0; r < 6 * d + 6; ++r) out[r] = out[r] / row_scale[r % 6];
        }));
  }

  for (int k = 1; k <= N; ++k) {
    const TrackNode node = ctx.nodes[size_t(k)];
    p->blocks.push_back(make_block(
        "plane[" + std::to_string(k) + "]", false, 2,
        {L.mu(k) + kXG, L.mu(k) + kYG, L.z(k)},
        [node](const auto* x, auto* out) {
          out[0] = x[0] - node.c.x() - x[2] * node.n.x();
          out[1] = x[1] - node.c.y() - x[2] * node.n.y();
        }));
  }

  for (int k = 0; k <= N; ++k) {
    const int z = L.z(k), m = L.mu(k), u = L.u(std::max(k, 1));
    p->blocks.push_back(make_block(
        "forces[" + std::to_string(k) + "]", false, 4,
        {z + 1, z + 2, z + 3, z + 4, m + kU, m + kV, m + kR, u + kFxA,
         u + kFxB, u + kDelta},
        [vp, fs](const auto* x, auto* out) {
          using S = strip_t<decltype(*x)>;
          Vec3<S> ctrl;
          for (int j = 0; j < kNu; ++j) ctrl[j] = x[7 + j];
          Vec6<S> st = Vec6<S>::Zero();
          st[kU] = x[4];
          st[kV] = x[5];
          st[kR] = x[6];
          const AxleLoadsT<S> loads = axle_vertical_loads(ctrl, vp);
          S a1, a2;
          slip_angles(st, ctrl, vp, a1, a2);
          out[0] = (x[0] - loads.Z1) / fs;
          out[1] = (x[1] - loads.Z2) / fs;
          out[2] = (x[2] - axle_lateral_force(a1, x[0], kFront, vp)) / fs;
          out[3] = (x[3] - axle_lateral_force(a2, x[1], kRear, vp)) / fs;
        }));
  }

  // Friction-limit inequalities written on the algebraic handles; the
  // robust planners append their back-off terms to the same expressions.
  for (int k = 1; emit_flc && k <= N; ++k) {
    const int z = L.z(k), u = L.u(k);
    const double lim_f = 1.0 - (tight != nullptr ? tight->flc_front[k] : 0.0);
    const double lim_r = 1.0 - (tight != nullptr ? tight->flc_rear[k] : 0.0);
    p->blocks.push_back(make_block(
        "flc_front[" + std::to_string(k) + "]", true, 1,
        {u + kFxB, z + 1, z + 3}, [vp, lim_f](const auto* x, auto* out) {
          const auto X1 = vp.brake_split_front * x[0];
          out[0] = saturation_ratio(X1, x[2], x[1], vp.mu_x[kFront],
                                    vp.mu_y[kFront]) -
                   lim_f;
        }));
    p->blocks.push_back(make_block(
        "flc_rear[" + std::to_string(k) + "]", true, 1,
        {u + kFxA, u + kFxB, z + 2, z + 4},
        [vp, lim_r](const auto* x, auto* out) {
          const auto X2 = x[0] + (1.0 - vp.brake_split_front) * x[1];
          out[0] = saturation_ratio(X2, x[3], x[2], vp.mu_x[kRear],
                                    vp.mu_y[kRear]) -
                   lim_r;
        }));
  }

  // --- objective ----------------------------------------------------------
  for (int k = 1; k <= N; ++k) {
    p->objective.push_back(make_objective_term(
        {L.nu(k)}, [](const auto* x) { return x[0]; }));
  }
  const CostRegularization reg = ctx.opt.reg;
  for (int k = 1; k < N; ++k) {
    p->objective.push_back(make_objective_term(
        {L.u(k), L.u(k) + 1, L.u(k) + 2, L.u(k + 1), L.u(k + 1) + 1,
         L.u(k + 1) + 2},
        [reg](const auto* x) {
          using S = strip_t<decltype(*x)>;
          S J(0.0);
          for (int m = 0; m < kNu; ++m) {
            const S du = x[3 + m] - x[m];
            J += reg.eps_u * reg.weights[m] * du * du;
          }
          return J;
        }));
  }
  for (int k = 1; k < N; ++k) {
    for (int m = 0; m < kNu; ++m) {
      const double w = 2.0 * reg.eps_u * reg.weights[m];
      const int a = L.u(k) + m, b = L.u(k + 1) + m;
      p->objective_hessian.emplace_back(a, a, w);
      p->objective_hessian.emplace_back(b, b, w);
      p->objective_hessian.emplace_back(b, a, -w);  // lower triangle
    }
  }
}

void warm_start_from(const AssemblyContext& ctx, const PlannedTrajectory& traj,
                     NlpProblem* p) {
  const GridLayout& L = ctx.layout;
  const int N = L.N, d = L.d;
  if (int(traj.nodes.size()) != N + 1 || int(traj.stages.size()) != N * d) {
    throw ConfigError("planner: warm-start trajectory has a different grid");
  }
  for (int k = 0; k <= N; ++k) {
    const NodeRecord& rec = traj.nodes[size_t(k)];
    p->x0.segment<6>(L.mu(k)) = rec.state;
    const int z = L.z(k);
    p->x0[z + 0] = rec.e;
    p->x0[z + 1] = rec.Z1;
    p->x0[z + 2] = rec.Z2;
    p->x0[z + 3] = rec.Y1;
    p->x0[z + 4] = rec.Y2;
    if (k >= 1) {
      p->x0.segment<3>(L.u(k)) = rec.control;
      p->x0[L.nu(k)] = traj.nu[size_t(k) - 1];
      for (int i = 0; i < d; ++i) {
        p->x0.segment<6>(L.xi(k, i)) = traj.stages[size_t(k - 1) * size_t(d) + size_t(i)];
      }
    }
  }
}

PlannedTrajectory extract_trajectory(const AssemblyContext& ctx,
                                     const SolveResult& result) {
  const GridLayout& L = ctx.layout;
  const VehicleParams& vp = ctx.params;
  const int N = L.N, d = L.d;
  const VecXd& x = result.x;

  PlannedTrajectory traj;
  traj.report = result.report;
  traj.nodes.resize(size_t(N) + 1);
  traj.nu.resize(size_t(N));
  traj.stages.resize(size_t(N) * size_t(d));
  double t = 0.0;
  for (int k = 0; k <= N; ++k) {
    NodeRecord& rec = traj.nodes[size_t(k)];
    rec.alpha = double(k) / N;
    rec.s = ctx.nodes[size_t(k)].s;
    rec.state = x.segment<6>(L.mu(k));
    rec.control = x.segment<3>(L.u(std::max(k, 1)));
    const int z = L.z(k);
    rec.e = x[z + 0];
    rec.Z1 = x[z + 1];
    rec.Z2 = x[z + 2];
    rec.Y1 = x[z + 3];
    rec.Y2 = x[z + 4];
    double X1, X2;
    Vec3d ctrl = rec.control;
    axle_longitudinal_forces(ctrl, vp, X1, X2);
    rec.S1 = saturation_ratio(X1, rec.Y1, rec.Z1, vp.mu_x[kFront],
                              vp.mu_y[kFront]);
    rec.S2 =
        saturation_ratio(X2, rec.Y2, rec.Z2, vp.mu_x[kRear], vp.mu_y[kRear]);
    if (k >= 1) {
      traj.nu[size_t(k) - 1] = x[L.nu(k)];
      t += x[L.nu(k)];
      for (int i = 0; i < d; ++i) {
        traj.stages[size_t(k - 1) * size_t(d) + size_t(i)] =
            x.segment<6>(L.xi(k, i));
      }
    }
    rec.t = t;
  }
  traj.total_time = t;
  return traj;
}

CovLTd cov_entry_scales(const CovLTd& P0, const CovLTd& Q, double horizon_s) {
  Vec6d sig;
  for (int i = 0; i < kNx; ++i) {
    const double var =
        P0[lt_index(i, i)] + Q[lt_index(i, i)] * std::max(horizon_s, 0.0);
    sig[i] = std::sqrt(std::max(var, 1e-10));
  }
  CovLTd scales;
  for (int i = 0; i < kNx; ++i) {
    for (int j = 0; j <= i; ++j) scales[lt_index(i, j)] = sig[i] * sig[j];
  }
  return scales;
}

void warm_stage_jacobians(const AssemblyContext& ctx, const VecXd& x0, int k,
                          std::vector<Mat6d>* A, std::vector<Mat63d>* B) {
  const GridLayout& L = ctx.layout;
  const Vec3d u = x0.segment<3>(L.u(k));
  A->resize(size_t(L.d));
  if (B != nullptr) B->resize(size_t(L.d));
  for (int i = 0; i < L.d; ++i) {
    const Vec6d st = x0.segment<6>(L.xi(k, i));
    jacobians(st, u, ctx.params, &(*A)[size_t(i)],
              B != nullptr ? &(*B)[size_t(i)] : nullptr);
  }
}

std::vector<std::pair<int, int>> cov_block_sparsity(int d, bool has_prev,
                                                    bool has_K) {
  int li[kNcov], lj[kNcov];
  for (int i = 0, m = 0; i < kNx; ++i) {
    for (int j = 0; j <= i; ++j, ++m) {
      li[m] = i;
      lj[m] = j;
    }
  }
  auto canon = [](int a, int b) {
    return a >= b ? lt_index(a, b) : lt_index(b, a);
  };
  const int sig0 = has_prev ? kNcov : 0;
  const int pend0 = sig0 + kNcov * d;
  const int xi0 = pend0 + kNcov;
  const int u0 = xi0 + 6 * d, nu0 = u0 + 3, k0 = nu0 + 1;

  std::vector<std::pair<int, int>> sp;
  sp.reserve(size_t(kNcov) * size_t(d) * 40);
  for (int i = 0; i < d; ++i) {
    for (int m = 0; m < kNcov; ++m) {
      const int row = i * kNcov + m;
      auto add = [&](int c) { sp.emplace_back(row, c); };
      if (has_prev) add(m);
      // Collocation derivative couples entry m across all stages.
      for (int j = 0; j < d; ++j) add(sig0 + kNcov * j + m);
      // The Lyapunov term couples entry (i_m, j_m) to every triangle entry
      // sharing one of its indices, within this stage only.
      bool seen[kNcov] = {};
      seen[m] = true;
      for (int l = 0; l < kNx; ++l) {
        for (int idx : {canon(l, lj[m]), canon(li[m], l)}) {
          if (!seen[idx]) {
            seen[idx] = true;
            add(sig0 + kNcov * i + idx);
          }
        }
      }
      for (int c = 0; c < kNx; ++c) add(xi0 + 6 * i + c);
      for (int c = 0; c < kNu; ++c) add(u0 + c);
      add(nu0);
      if (has_K) {
        for (int c = 0; c < 12; ++c) add(k0 + c);
      }
    }
  }
  for (int m = 0; m < kNcov; ++m) {
    const int row = d * kNcov + m;
    if (has_prev) sp.emplace_back(row, m);
    for (int j = 0; j < d; ++j) sp.emplace_back(row, sig0 + kNcov * j + m);
    sp.emplace_back(row, pend0 + m);
  }
  return sp;
}

Tightenings exact_backoffs(const AssemblyContext& ctx, const VecXd& x,
                           const std::function<int(int)>& p_base,
                           double gamma) {
  const GridLayout& L = ctx.layout;
  Tightenings t;
  t.tlc = VecXd::Zero(L.N + 1);
  t.flc_front = VecXd::Zero(L.N + 1);
  t.flc_rear = VecXd::Zero(L.N + 1);
  for (int k = 1; k <= L.N; ++k) {
    CovLTd P;
    for (int i = 0; i < kNcov; ++i) P[i] = x[p_base(k) + i];
    const Mat6d Pd = cov_to_dense(P);
    if (ctx.opt.robust_tlc) {
      const TrackNode& node = ctx.nodes[size_t(k)];
      const double nx = node.n.x(), ny = node.n.y();
      const double q = nx * nx * Pd(kXG, kXG) + 2.0 * nx * ny * Pd(kYG, kXG) +
                       ny * ny * Pd(kYG, kYG);
      t.tlc[k] = gamma * std::sqrt(std::max(q, 0.0));
    }
    if (ctx.opt.robust_flc) {
      Vec6d mu;
      Vec3d ctrl;
      for (int i = 0; i < kNx; ++i) mu[i] = x[L.mu(k) + i];
      for (int i = 0; i < kNu; ++i) ctrl[i] = x[L.u(k) + i];
      for (int axle : {kFront, kRear}) {
        const Vec6d g = grad_saturation_states(mu, ctrl, ctx.params, axle);
        const double q = g.dot(Pd * g);
        (axle == kFront ? t.flc_front : t.flc_rear)[k] =
            gamma * std::sqrt(std::max(q, 0.0));
      }
    }
  }
  return t;
}

void append_robust_blocks(const AssemblyContext& ctx, double gamma,
                          const std::function<int(int)>& p_base,
                          NlpProblem* p) {
  const GridLayout& L = ctx.layout;
  const VehicleParams vp = ctx.params;
  // Back-off rows are stated in squared form: margin >= gamma * sqrt(q)
  // becomes margin >= 0 together with gamma^2 * q <= margin^2.  Both rows
  // are polynomial, so their derivatives stay bounded even when the
  // covariance iterates are indefinite mid-solve and the quadratic form q
  // dips below zero, where a literal square root would put a kink with an
  // unbounded second derivative right on the constraint boundary.
  const double g2 = gamma * gamma;
  for (int k = 1; k <= L.N; ++k) {
    const int pb = p_base(k);
    const int z = L.z(k), u = L.u(k), m = L.mu(k);
    if (ctx.opt.robust_flc) {
      for (int axle : {kFront, kRear}) {
        std::vector<int> vars;
        vars.reserve(32);
        append_range(&vars, m, 6);
        append_range(&vars, u, 3);
        if (axle == kFront) {
          vars.push_back(z + 1);  // Z1
          vars.push_back(z + 3);  // Y1
        } else {
          vars.push_back(z + 2);  // Z2
          vars.push_back(z + 4);  // Y2
        }
        append_range(&vars, pb, kNcov);
        const char* base_id =
            axle == kFront ? "flc_front_r[" : "flc_rear_r[";
        p->blocks.push_back(make_block(
            base_id + std::to_string(k) + "]", true, 2, std::move(vars),
            [vp, g2, axle](const auto* x, auto* out) {
              using S = strip_t<decltype(*x)>;
              Vec6<S> mu;
              Vec3<S> ctrl;
              for (int i = 0; i < kNx; ++i) mu[i] = x[i];
              for (int i = 0; i < kNu; ++i) ctrl[i] = x[6 + i];
              const S Z = x[9];
              const S Y = x[10];
              CovLT<S> P;
              for (int i = 0; i < kNcov; ++i) P[i] = x[11 + i];
              S X;
              if (axle == kFront) {
                X = vp.brake_split_front * ctrl[kFxB];
              } else {
                X = ctrl[kFxA] + (1.0 - vp.brake_split_front) * ctrl[kFxB];
              }
              const Vec6<S> g = grad_saturation_states(mu, ctrl, vp, axle);
              const S q = g.dot(cov_to_dense(P) * g);
              const S margin = 1.0 - saturation_ratio(X, Y, Z, vp.mu_x[axle],
                                                      vp.mu_y[axle]);
              out[0] = -margin;
              out[1] = g2 * q - margin * margin;
            }));
      }
    }
    if (ctx.opt.robust_tlc) {
      const TrackNode node = ctx.nodes[size_t(k)];
      p->blocks.push_back(make_block(
          "tlc_r[" + std::to_string(k) + "]", true, 2,
          {z, pb + lt_index(kXG, kXG), pb + lt_index(kYG, kXG),
           pb + lt_index(kYG, kYG)},
          [node, g2](const auto* x, auto* out) {
            using S = strip_t<decltype(*x)>;
            const double nx = node.n.x(), ny = node.n.y();
            const S q = nx * nx * x[1] + 2.0 * nx * ny * x[2] + ny * ny * x[3];
            // The lateral offset itself is box-bounded inside
            // [e_min, e_max], so only the squared back-off rows are needed.
            const S up = node.e_max - x[0];
            const S lo = x[0] - node.e_min;
            out[0] = g2 * q - up * up;
            out[1] = g2 * q - lo * lo;
          }));
    }
  }
}

void require_converged(const char* stage, const SolveReport& report) {
  if (report.status == SolveStatus::optimal ||
      report.status == SolveStatus::regularized) {
    return;
  }
  std::string msg = std::string(stage) + ": solve failed (" +
                    to_string(report.status);
  if (!report.message.empty()) msg += ", " + report.message;
  if (!report.worst_block.empty()) {
    msg += "; worst block " + report.worst_block;
  }
  msg += ")";
  throw SolverError(msg);
}

}  // namespace laptime::detail
