#pragma once

#include <vector>

#include "laptime/stochastics.hpp"
#include "laptime/types.hpp"
#include "laptime/vehicle.hpp"

namespace laptime {

// Gauss-Legendre collocation data on the unit interval.  The state
// polynomial of degree d interpolates the previous node value at tau = 0 and
// the d stage values at the shifted-Legendre roots tau_i.
struct CollocationScheme {
  int d = 0;
  VecXd tau;            // d roots in (0, 1)
  MatXd lagrange_diff;  // (d+1) x d; (j, i): dL_j/dtau at tau_i
  VecXd end_weights;    // d+1; L_j(1), continuity weights
  VecXd quad_weights;   // d; integral of the stage-only Lagrange basis
};

// Throws std::invalid_argument for unsupported d (supported: 2, 3, 4).
CollocationScheme gl_scheme(int d);

// Generic Lagrange-collocation residual over one interval for a state of
// dimension M and right-hand side `rhs` (already scaled by the interval
// duration by the caller's lambda or inside `rhs`):
//   stage rows:      sum_j C(j,i) X_j - rhs(i)          for i = 1..d
//   continuity rows: sum_j D_j X_j - X_end
// X_0 is the previous node value; X_1..X_d are the stages.
template <typename Scalar, typename Rhs>
void collocation_residual(const CollocationScheme& scheme, int M,
                          const Scalar* x_prev, const Scalar* stages,
                          const Scalar* x_end, Rhs&& rhs, Scalar* out) {
  const int d = scheme.d;
  for (int i = 0; i < d; ++i) {
    Scalar* row = out + i * M;
    for (int m = 0; m < M; ++m) {
      row[m] = scheme.lagrange_diff(0, i) * x_prev[m];
    }
    for (int j = 1; j <= d; ++j) {
      const double c = scheme.lagrange_diff(j, i);
      const Scalar* xj = stages + (j - 1) * M;
      for (int m = 0; m < M; ++m) row[m] += c * xj[m];
    }
    rhs(i, row);  // subtracts the scaled RHS at stage i from row[0..M)
  }
  Scalar* cont = out + d * M;
  for (int m = 0; m < M; ++m) {
    cont[m] = scheme.end_weights[0] * x_prev[m] - x_end[m];
  }
  for (int j = 1; j <= d; ++j) {
    const double c = scheme.end_weights[j];
    const Scalar* xj = stages + (j - 1) * M;
    for (int m = 0; m < M; ++m) cont[m] += c * xj[m];
  }
}

// Mean-dynamics residual: 6d collocation rows + 6 continuity rows.
template <typename Scalar>
void mean_collocation_residual(const CollocationScheme& scheme,
                               const Vec6<Scalar>& mu_prev,
                               const Scalar* stages /* 6d */,
                               const Vec6<Scalar>& mu_k,
                               const Vec3<Scalar>& u_k, const Scalar& nu_k,
                               const VehicleParams& params, Scalar* out) {
  collocation_residual(
      scheme, kNx, mu_prev.data(), stages, mu_k.data(),
      [&](int i, Scalar* row) {
        Eigen::Map<const Vec6<Scalar>> xi(stages + i * kNx);
        const Vec6<Scalar> f = dynamics(Vec6<Scalar>(xi), u_k, params);
        for (int m = 0; m < kNx; ++m) row[m] -= nu_k * f[m];
      },
      out);
}

// Open-loop covariance residual: 21d collocation rows + 21 continuity rows.
// A_stages holds A(xi_{k,i}, u_k) for i = 1..d.
template <typename Scalar>
void cov_collocation_residual(const CollocationScheme& scheme,
                              const CovLT<Scalar>& P_prev,
                              const Scalar* sigma_stages /* 21d */,
                              const CovLT<Scalar>& P_k,
                              const std::vector<Mat6<Scalar>>& A_stages,
                              const CovLT<Scalar>& Q, const Scalar& nu_k,
                              Scalar* out) {
  collocation_residual(
      scheme, kNcov, P_prev.data(), sigma_stages, P_k.data(),
      [&](int i, Scalar* row) {
        Eigen::Map<const CovLT<Scalar>> sig(sigma_stages + i * kNcov);
        const CovLT<Scalar> rhs =
            lyapunov_rhs(A_stages[i], CovLT<Scalar>(sig), Q);
        for (int m = 0; m < kNcov; ++m) row[m] -= nu_k * rhs[m];
      },
      out);
}

// Closed-loop covariance residual with Atilde = A - B K substituted; K is
// the extended 3x6 gain, constant over the interval.
template <typename Scalar>
void cov_cl_collocation_residual(const CollocationScheme& scheme,
                                 const CovLT<Scalar>& P_prev,
                                 const Scalar* sigma_stages /* 21d */,
                                 const CovLT<Scalar>& P_k,
                                 const std::vector<Mat6<Scalar>>& A_stages,
                                 const std::vector<Mat63<Scalar>>& B_stages,
                                 const Mat36<Scalar>& K_k,
                                 const CovLT<Scalar>& Q, const Scalar& nu_k,
                                 Scalar* out) {
  collocation_residual(
      scheme, kNcov, P_prev.data(), sigma_stages, P_k.data(),
      [&](int i, Scalar* row) {
        Eigen::Map<const CovLT<Scalar>> sig(sigma_stages + i * kNcov);
        const CovLT<Scalar> rhs = closed_loop_rhs(
            A_stages[i], B_stages[i], K_k, CovLT<Scalar>(sig), Q);
        for (int m = 0; m < kNcov; ++m) row[m] -= nu_k * rhs[m];
      },
      out);
}

// Exact solve of the (linear) covariance collocation equations over one
// interval: returns the d stage values and the end-node value implied by
// P_prev, A at the stages, Q, and nu.  Used for warm starts and as the
// propagation path outside the NLP.
void solve_cov_interval(const CollocationScheme& scheme, const CovLTd& P_prev,
                        const std::vector<Mat6d>& A_stages, const CovLTd& Q,
                        double nu, std::vector<CovLTd>* sigma_stages,
                        CovLTd* P_end, const std::vector<Mat63d>* B_stages = nullptr,
                        const Mat36d* K = nullptr);

// Control-regularization weights on [Fx_a, Fx_b, delta] differences.
struct CostRegularization {
  double eps_u = 1e-4;
  Vec3d weights = Vec3d(1.0 / (5000.0 * 5000.0), 1.0 / (5000.0 * 5000.0),
                        1.0 / (0.1 * 0.1));
};

// J = sum_k nu_k + eps_u * sum_k ||u_{k+1} - u_k||^2_W.
template <typename Scalar>
Scalar assemble_cost(const std::vector<Scalar>& nu,
                     const std::vector<Vec3<Scalar>>& u,
                     const CostRegularization& reg) {
  Scalar J(0.0);
  for (const Scalar& v : nu) J += v;
  for (size_t k = 0; k + 1 < u.size(); ++k) {
    const Vec3<Scalar> du = u[k + 1] - u[k];
    for (int m = 0; m < kNu; ++m) {
      J += reg.eps_u * reg.weights[m] * du[m] * du[m];
    }
  }
  return J;
}

}  // namespace laptime
