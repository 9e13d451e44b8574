#include "laptime/stochastics.hpp"

#include <cmath>
#include <stdexcept>

namespace laptime {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014327;  // 1/sqrt(2 pi)

double gauss_density(double z) {
  return kInvSqrt2Pi * std::exp(-0.5 * z * z);
}

// Adaptive Simpson quadrature of the Gaussian density over [a, b].
double simpson(double a, double b, double fa, double fm, double fb) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

double adaptive_simpson(double a, double b, double fa, double fm, double fb,
                        double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = gauss_density(lm), frm = gauss_density(rm);
  const double left = simpson(a, m, fa, flm, fm);
  const double right = simpson(m, b, fm, frm, fb);
  if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * tol) {
    return left + right + (left + right - whole) / 15.0;
  }
  return adaptive_simpson(a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive_simpson(m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

double integrate_density(double a, double b) {
  const double fa = gauss_density(a), fb = gauss_density(b);
  const double m = 0.5 * (a + b);
  const double fm = gauss_density(m);
  return adaptive_simpson(a, b, fa, fm, fb, simpson(a, b, fa, fm, fb), 1e-14,
                          48);
}

}  // namespace

double normal_cdf(double z) {
  // Integrate from 0 with symmetry; density below |z| = 12 underflows the
  // 1e-14 tolerance anyway.
  const double za = std::min(std::abs(z), 12.0);
  const double half = integrate_density(0.0, za);
  return z >= 0.0 ? 0.5 + half : 0.5 - half;
}

double quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::domain_error("quantile: p must lie in (0, 1)");
  }
  double lo = -13.0, hi = 13.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double c = normal_cdf(mid);
    if (std::abs(c - p) <= 1e-11) return mid;
    (c < p ? lo : hi) = mid;
    if (hi - lo < 1e-13) break;
  }
  return 0.5 * (lo + hi);
}

CovLTd propagate_via_stm(const std::function<Mat6d(double)>& A_at,
                         const CovLTd& P0, const CovLTd& Q_lt,
                         const std::vector<double>& t_grid) {
  const Mat6d Q = cov_to_dense(Q_lt);
  Mat6d P = cov_to_dense(P0);
  const Mat6d I = Mat6d::Identity();
  for (size_t j = 0; j + 1 < t_grid.size(); ++j) {
    const double t = t_grid[j];
    const double h = t_grid[j + 1] - t;
    const Mat6d A1 = A_at(t);
    const Mat6d Am = A_at(t + 0.5 * h);
    const Mat6d A2 = A_at(t + h);
    const Mat6d k1 = A1;
    const Mat6d k2 = Am * (I + 0.5 * h * k1);
    const Mat6d k3 = Am * (I + 0.5 * h * k2);
    const Mat6d k4 = A2 * (I + h * k3);
    const Mat6d Phi = I + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    P = Phi * P * Phi.transpose() +
        0.5 * h * (Phi * Q * Phi.transpose() + Q);
    P = 0.5 * (P + P.transpose()).eval();
  }
  return cov_from_dense(P);
}

}  // namespace laptime
