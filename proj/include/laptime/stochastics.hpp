#pragma once

#include <functional>
#include <stdexcept>
#include <vector>

#include "laptime/dual.hpp"
#include "laptime/types.hpp"

namespace laptime {

// A 6x6 symmetric covariance is carried as the row-major lower triangle:
// (0,0), (1,0), (1,1), (2,0), ... 21 values.  Symmetry is structural.
inline constexpr int kNcov = 21;

template <typename Scalar> using CovLT = Eigen::Matrix<Scalar, kNcov, 1>;
using CovLTd = CovLT<double>;

constexpr int lt_index(int i, int j) {
  // requires j <= i
  return i * (i + 1) / 2 + j;
}

template <typename Scalar>
Mat6<Scalar> cov_to_dense(const CovLT<Scalar>& lt) {
  Mat6<Scalar> P;
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j <= i; ++j) {
      P(i, j) = lt[lt_index(i, j)];
      P(j, i) = lt[lt_index(i, j)];
    }
  }
  return P;
}

template <typename Scalar>
CovLT<Scalar> cov_from_dense(const Mat6<Scalar>& P) {
  CovLT<Scalar> lt;
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j <= i; ++j) lt[lt_index(i, j)] = P(i, j);
  }
  return lt;
}

// Process-noise intensity: E[w(t) w(s)'] = Q delta(t - s).
struct NoiseSpec {
  CovLTd Q = CovLTd::Zero();

  static NoiseSpec diagonal(const Vec6d& sigma_per_sqrt_s) {
    NoiseSpec spec;
    for (int i = 0; i < 6; ++i) {
      spec.Q[lt_index(i, i)] = sigma_per_sqrt_s[i] * sigma_per_sqrt_s[i];
    }
    return spec;
  }

  // Documented default intensities (m/s, m/s, rad/s, m, m, rad per sqrt s).
  static NoiseSpec default_spec() {
    return diagonal((Vec6d() << 0.5, 0.2, 0.1, 0.05, 0.05, 0.01).finished());
  }
};

// Standard-normal inverse CDF by bisection on a numerically integrated
// Gaussian density; |cdf(result) - p| <= 1e-10.  Self-contained on purpose.
double quantile(double p);

double normal_cdf(double z);

// Confidence level with its cached quantile gain.
struct ConfidenceSpec {
  double p = 0.0;      // 0 when the gain was given directly
  double gamma = 0.0;  // gamma = quantile(p) when p is set

  static ConfidenceSpec from_p(double p_in) {
    if (!(p_in > 0.5 && p_in < 1.0)) {
      throw std::domain_error("confidence: p must lie in (0.5, 1)");
    }
    return {p_in, quantile(p_in)};
  }
  static ConfidenceSpec from_gamma(double g) { return {0.0, g}; }
};

// d/dt of the lower triangle of P under Pdot = A P + P A' + Q.
template <typename Scalar>
CovLT<Scalar> lyapunov_rhs(const Mat6<Scalar>& A, const CovLT<Scalar>& P_lt,
                           const CovLT<Scalar>& Q_lt) {
  const Mat6<Scalar> P = cov_to_dense(P_lt);
  const Mat6<Scalar> AP = A * P;
  Mat6<Scalar> rhs = AP + AP.transpose() + cov_to_dense(Q_lt);
  return cov_from_dense(rhs);
}

// Lyapunov RHS with the closed-loop matrix Atilde = A - B K, K the 3x6
// extended gain.
template <typename Scalar>
CovLT<Scalar> closed_loop_rhs(const Mat6<Scalar>& A, const Mat63<Scalar>& B,
                              const Mat36<Scalar>& K, const CovLT<Scalar>& P_lt,
                              const CovLT<Scalar>& Q_lt) {
  const Mat6<Scalar> Atilde = A - B * K;
  return lyapunov_rhs(Atilde, P_lt, Q_lt);
}

// beta = gamma * sqrt(max(0, grad' P grad)).  Exact sqrt; reporting form.
template <typename Scalar>
Scalar backoff(const Vec6<Scalar>& grad_h, const CovLT<Scalar>& P_lt,
               double gamma) {
  Scalar q = grad_h.dot(cov_to_dense(P_lt) * grad_h);
  if (value_of(q) < 0.0) q = Scalar(0.0);
  return gamma * sqrt(q);
}

// Smoothed form used inside planner residuals: gamma*(sqrt(q + eps^2) - eps)
// is differentiable at q = 0 and within gamma*eps of the exact back-off.
inline constexpr double kBackoffEps = 1e-6;

template <typename Scalar>
Scalar backoff_smoothed(const Vec6<Scalar>& grad_h, const CovLT<Scalar>& P_lt,
                        double gamma, double eps = kBackoffEps) {
  const Scalar q = grad_h.dot(cov_to_dense(P_lt) * grad_h);
  return gamma * (sqrt(q + eps * eps) - eps);
}

// Test oracle: P(t_end) from P(t_grid[0]) = P0 under Pdot = A P + P A' + Q,
// via the state-transition matrix.  Each grid step integrates
// Phidot = A(t) Phi with one RK4 step and accumulates the noise convolution
// with trapezoidal quadrature:
//   P_{j+1} = Phi_j P_j Phi_j' + h/2 (Phi_j Q Phi_j' + Q).
CovLTd propagate_via_stm(const std::function<Mat6d(double)>& A_at,
                         const CovLTd& P0, const CovLTd& Q,
                         const std::vector<double>& t_grid);

}  // namespace laptime
