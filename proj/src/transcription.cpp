#include "laptime/collocation.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace laptime {

namespace {

// Dense polynomial helpers (ascending coefficients); degrees here are <= 4.
using Poly = std::vector<double>;

Poly poly_mul(const Poly& a, const Poly& b) {
  Poly out(a.size() + b.size() - 1, 0.0);
  for (size_t i = 0; i < a.size(); ++i) {
    for (size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  }
  return out;
}

double poly_eval(const Poly& p, double x) {
  double acc = 0.0;
  for (size_t i = p.size(); i-- > 0;) acc = acc * x + p[i];
  return acc;
}

Poly poly_diff(const Poly& p) {
  if (p.size() <= 1) return {0.0};
  Poly out(p.size() - 1);
  for (size_t i = 1; i < p.size(); ++i) out[i - 1] = p[i] * double(i);
  return out;
}

double poly_integral01(const Poly& p) {
  double acc = 0.0;
  for (size_t i = 0; i < p.size(); ++i) acc += p[i] / double(i + 1);
  return acc;
}

// Lagrange basis polynomial through `nodes`, equal to 1 at nodes[j].
Poly lagrange_poly(const std::vector<double>& nodes, size_t j) {
  Poly p{1.0};
  for (size_t m = 0; m < nodes.size(); ++m) {
    if (m == j) continue;
    const double denom = nodes[j] - nodes[m];
    p = poly_mul(p, Poly{-nodes[m] / denom, 1.0 / denom});
  }
  return p;
}

// Legendre polynomial value and derivative on [-1, 1] by recurrence.
void legendre(int n, double x, double* value, double* deriv) {
  double p0 = 1.0, p1 = x;
  if (n == 0) {
    *value = 1.0;
    *deriv = 0.0;
    return;
  }
  for (int k = 2; k <= n; ++k) {
    const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / double(k);
    p0 = p1;
    p1 = p2;
  }
  *value = p1;
  *deriv = double(n) * (x * p1 - p0) / (x * x - 1.0);
}

std::vector<double> legendre_roots(int n) {
  std::vector<double> roots(n);
  for (int i = 0; i < n; ++i) {
    // Standard asymptotic initial guess, then Newton.
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    for (int it = 0; it < 100; ++it) {
      double v, dv;
      legendre(n, x, &v, &dv);
      const double step = v / dv;
      x -= step;
      if (std::abs(step) < 1e-15) break;
    }
    roots[i] = x;
  }
  std::sort(roots.begin(), roots.end());
  return roots;
}

// Linear map P_lt -> lyapunov_rhs(A, P_lt, 0) (optionally closed loop) as a
// dense 21x21 matrix on the lower-triangle coordinates.
Eigen::Matrix<double, kNcov, kNcov> lyap_operator(const Mat6d& A,
                                                  const Mat63d* B,
                                                  const Mat36d* K) {
  Eigen::Matrix<double, kNcov, kNcov> L;
  const CovLTd zero_q = CovLTd::Zero();
  for (int m = 0; m < kNcov; ++m) {
    CovLTd basis = CovLTd::Zero();
    basis[m] = 1.0;
    const CovLTd col = (B != nullptr && K != nullptr)
                           ? closed_loop_rhs(A, *B, *K, basis, zero_q)
                           : lyapunov_rhs(A, basis, zero_q);
    L.col(m) = col;
  }
  return L;
}

}  // namespace

CollocationScheme gl_scheme(int d) {
  if (d < 2 || d > 4) {
    throw std::invalid_argument("gl_scheme: collocation degree must be 2, 3, or 4");
  }
  CollocationScheme s;
  s.d = d;
  const std::vector<double> r = legendre_roots(d);
  s.tau.resize(d);
  std::vector<double> nodes(d + 1);
  nodes[0] = 0.0;
  for (int i = 0; i < d; ++i) {
    s.tau[i] = 0.5 * (1.0 + r[i]);  // shift [-1,1] -> [0,1]
    nodes[i + 1] = s.tau[i];
  }

  s.lagrange_diff.resize(d + 1, d);
  s.end_weights.resize(d + 1);
  for (int j = 0; j <= d; ++j) {
    const Poly Lj = lagrange_poly(nodes, size_t(j));
    const Poly dLj = poly_diff(Lj);
    for (int i = 0; i < d; ++i) s.lagrange_diff(j, i) = poly_eval(dLj, s.tau[i]);
    s.end_weights[j] = poly_eval(Lj, 1.0);
  }

  std::vector<double> stage_nodes(r.size());
  for (int i = 0; i < d; ++i) stage_nodes[i] = s.tau[i];
  s.quad_weights.resize(d);
  for (int i = 0; i < d; ++i) {
    s.quad_weights[i] = poly_integral01(lagrange_poly(stage_nodes, size_t(i)));
  }
  return s;
}

void solve_cov_interval(const CollocationScheme& scheme, const CovLTd& P_prev,
                        const std::vector<Mat6d>& A_stages, const CovLTd& Q,
                        double nu, std::vector<CovLTd>* sigma_stages,
                        CovLTd* P_end, const std::vector<Mat63d>* B_stages,
                        const Mat36d* K) {
  const int d = scheme.d;
  if (int(A_stages.size()) != d) {
    throw std::invalid_argument("solve_cov_interval: wrong number of stage matrices");
  }
  const int n = kNcov * d;
  MatXd M = MatXd::Zero(n, n);
  VecXd rhs(n);
  for (int i = 0; i < d; ++i) {
    const Mat63d* Bi = (B_stages != nullptr) ? &(*B_stages)[i] : nullptr;
    const Eigen::Matrix<double, kNcov, kNcov> Li = lyap_operator(A_stages[i], Bi, K);
    for (int j = 1; j <= d; ++j) {
      M.block(i * kNcov, (j - 1) * kNcov, kNcov, kNcov) +=
          scheme.lagrange_diff(j, i) *
          Eigen::Matrix<double, kNcov, kNcov>::Identity();
    }
    M.block(i * kNcov, i * kNcov, kNcov, kNcov) -= nu * Li;
    rhs.segment(i * kNcov, kNcov) =
        -scheme.lagrange_diff(0, i) * P_prev + nu * Q;
  }
  const VecXd y = M.partialPivLu().solve(rhs);

  sigma_stages->assign(size_t(d), CovLTd::Zero());
  for (int i = 0; i < d; ++i) {
    (*sigma_stages)[i] = y.segment(i * kNcov, kNcov);
  }
  *P_end = scheme.end_weights[0] * P_prev;
  for (int j = 1; j <= d; ++j) {
    *P_end += scheme.end_weights[j] * y.segment((j - 1) * kNcov, kNcov);
  }
}

}  // namespace laptime
