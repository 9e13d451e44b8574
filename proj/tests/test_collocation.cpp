#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <vector>

#include "laptime/collocation.hpp"
#include "laptime/dual.hpp"
#include "laptime/stochastics.hpp"
#include "laptime/vehicle.hpp"

using namespace laptime;

namespace {

// End value of one Gauss-Legendre collocation interval for y' = lambda * y,
// y(0) = y0, interval length nu: solve the d x d linear stage system.
double scalar_ode_end(const CollocationScheme& s, double lambda, double y0,
                      double nu) {
  const int d = s.d;
  MatXd M = MatXd::Zero(d, d);
  VecXd rhs(d);
  for (int i = 0; i < d; ++i) {
    for (int j = 1; j <= d; ++j) M(i, j - 1) = s.lagrange_diff(j, i);
    M(i, i) -= nu * lambda;
    rhs[i] = -s.lagrange_diff(0, i) * y0;
  }
  const VecXd y = M.partialPivLu().solve(rhs);
  double end = s.end_weights[0] * y0;
  for (int j = 1; j <= d; ++j) end += s.end_weights[j] * y[j - 1];
  return end;
}

Mat6d random_stable_matrix(std::mt19937& gen, double scale) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Mat6d A;
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) A(i, j) = scale * dist(gen);
  return A;
}

}  // namespace

TEST_CASE("shifted Gauss-Legendre roots match closed forms") {
  const CollocationScheme s2 = gl_scheme(2);
  const double r3 = std::sqrt(3.0);
  CHECK(std::abs((s2.tau[0]) - ((3.0 - r3) / 6.0)) < 1e-14);
  CHECK(std::abs((s2.tau[1]) - ((3.0 + r3) / 6.0)) < 1e-14);

  const CollocationScheme s3 = gl_scheme(3);
  const double r06 = std::sqrt(0.6);
  CHECK(std::abs((s3.tau[0]) - (0.5 * (1.0 - r06))) < 1e-14);
  CHECK(std::abs((s3.tau[1]) - (0.5)) < 1e-14);
  CHECK(std::abs((s3.tau[2]) - (0.5 * (1.0 + r06))) < 1e-14);

  const CollocationScheme s4 = gl_scheme(4);
  // Degree-4 Legendre roots on [-1, 1], shifted to [0, 1].
  const double a = 0.3399810435848563;
  const double b = 0.8611363115940526;
  CHECK(std::abs((s4.tau[0]) - (0.5 * (1.0 - b))) < 1e-13);
  CHECK(std::abs((s4.tau[1]) - (0.5 * (1.0 - a))) < 1e-13);
  CHECK(std::abs((s4.tau[2]) - (0.5 * (1.0 + a))) < 1e-13);
  CHECK(std::abs((s4.tau[3]) - (0.5 * (1.0 + b))) < 1e-13);

  CHECK_THROWS_AS(gl_scheme(1), std::invalid_argument);
  CHECK_THROWS_AS(gl_scheme(5), std::invalid_argument);
}

TEST_CASE("differentiation and continuity weights are polynomially exact") {
  for (int d = 2; d <= 4; ++d) {
    const CollocationScheme s = gl_scheme(d);
    std::vector<double> nodes(size_t(d) + 1, 0.0);
    for (int i = 0; i < d; ++i) nodes[size_t(i) + 1] = s.tau[i];
    // Interpolating tau^q (q <= d) must reproduce derivative and end value.
    for (int q = 0; q <= d; ++q) {
      for (int i = 0; i < d; ++i) {
        double deriv = 0.0;
        for (int j = 0; j <= d; ++j) {
          deriv += s.lagrange_diff(j, i) * std::pow(nodes[size_t(j)], q);
        }
        const double expected = (q == 0) ? 0.0 : q * std::pow(s.tau[i], q - 1);
        CHECK(std::abs((deriv) - (expected)) < 1e-12);
      }
      double end = 0.0;
      for (int j = 0; j <= d; ++j) {
        end += s.end_weights[j] * std::pow(nodes[size_t(j)], q);
      }
      CHECK(std::abs((end) - (1.0)) < 1e-12);
    }
  }
}

TEST_CASE("quadrature weights integrate polynomials up to degree 2d-1") {
  for (int d = 2; d <= 4; ++d) {
    const CollocationScheme s = gl_scheme(d);
    for (int q = 0; q <= 2 * d - 1; ++q) {
      double acc = 0.0;
      for (int i = 0; i < d; ++i) acc += s.quad_weights[i] * std::pow(s.tau[i], q);
      CHECK(std::abs((acc) - (1.0 / (q + 1.0))) < 1e-13);
    }
  }
  // Spot value: integral of tau^2 is 1/3 with the d = 3 rule.
  const CollocationScheme s3 = gl_scheme(3);
  double acc = 0.0;
  for (int i = 0; i < 3; ++i) acc += s3.quad_weights[i] * s3.tau[i] * s3.tau[i];
  CHECK(std::abs((acc) - (1.0 / 3.0)) < 1e-14);
}

TEST_CASE("generic residual vanishes on exact constant and linear solutions") {
  const CollocationScheme s = gl_scheme(3);
  const int M = 2;

  SUBCASE("zero dynamics, constant state") {
    std::vector<double> x_prev{1.5, -2.0};
    std::vector<double> stages(size_t(M) * 3);
    for (int i = 0; i < 3; ++i) {
      stages[size_t(i) * M + 0] = x_prev[0];
      stages[size_t(i) * M + 1] = x_prev[1];
    }
    std::vector<double> out(size_t(M) * 4, 1.0);
    collocation_residual(
        s, M, x_prev.data(), stages.data(), x_prev.data(),
        [](int, double*) {}, out.data());
    for (double v : out) CHECK(std::abs((v) - (0.0)) < 1e-13);
  }

  SUBCASE("constant dynamics, linear state") {
    const double nu = 0.37;
    const Eigen::Vector2d c(0.8, -1.2);
    const Eigen::Vector2d x0(1.0, 2.0);
    std::vector<double> stages(size_t(M) * 3);
    for (int i = 0; i < 3; ++i) {
      Eigen::Map<Eigen::Vector2d>(stages.data() + size_t(i) * M) =
          x0 + nu * s.tau[i] * c;
    }
    const Eigen::Vector2d x_end = x0 + nu * c;
    std::vector<double> out(size_t(M) * 4, 1.0);
    collocation_residual(
        s, M, x0.data(), stages.data(), x_end.data(),
        [&](int, double* row) {
          row[0] -= nu * c[0];
          row[1] -= nu * c[1];
        },
        out.data());
    for (double v : out) CHECK(std::abs((v) - (0.0)) < 1e-13);
  }
}

TEST_CASE("scalar ODE end value converges at order 2d") {
  // y' = -y over one interval: the collocation end value is a rational
  // approximation of exp(-nu) with error O(nu^{2d+1}); the observed order on
  // an interval-halving sweep must be at least 2d (allowing slack for
  // roundoff on the smallest errors).
  for (int d = 2; d <= 4; ++d) {
    const CollocationScheme s = gl_scheme(d);
    const double lambda = -1.0;
    double nu = (d == 4) ? 1.6 : 0.9;
    std::vector<double> errs;
    for (int sweep = 0; sweep < 5; ++sweep) {
      const double got = scalar_ode_end(s, lambda, 1.0, nu);
      errs.push_back(std::abs(got - std::exp(lambda * nu)));
      nu *= 0.5;
    }
    int pairs = 0;
    for (size_t i = 0; i + 1 < errs.size(); ++i) {
      if (errs[i + 1] < 1e-14) break;  // next point is roundoff-limited
      const double slope = std::log2(errs[i] / errs[i + 1]);
      CHECK(slope >= 2.0 * d - 0.5);
      ++pairs;
    }
    CHECK(pairs >= 2);
  }
}

TEST_CASE("covariance residual is exact for A = 0 with constant diffusion") {
  const CollocationScheme s = gl_scheme(3);
  const CovLTd Q = NoiseSpec::default_spec().Q;
  CovLTd P_prev = CovLTd::Zero();
  for (int i = 0; i < 6; ++i) P_prev[lt_index(i, i)] = 0.5 + 0.1 * i;
  const double nu = 0.21;

  std::vector<Mat6d> A_stages(3, Mat6d::Zero());
  std::vector<double> stages(size_t(kNcov) * 3);
  for (int i = 0; i < 3; ++i) {
    Eigen::Map<CovLTd>(stages.data() + size_t(i) * kNcov) =
        P_prev + nu * s.tau[i] * Q;
  }
  const CovLTd P_end = P_prev + nu * Q;

  std::vector<double> out(size_t(kNcov) * 4, 1.0);
  cov_collocation_residual<double>(s, P_prev, stages.data(), P_end, A_stages, Q,
                                   nu, out.data());
  for (double v : out) CHECK(std::abs((v) - (0.0)) < 1e-12);

  // The interval solver reproduces the same stage and end values.
  std::vector<CovLTd> sigma;
  CovLTd P_solved;
  solve_cov_interval(s, P_prev, A_stages, Q, nu, &sigma, &P_solved);
  CHECK((P_solved - P_end).cwiseAbs().maxCoeff() < 1e-12);
  for (int i = 0; i < 3; ++i) {
    const CovLTd expect = P_prev + nu * s.tau[i] * Q;
    CHECK((sigma[size_t(i)] - expect).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("LTV covariance chain matches the transition-matrix oracle") {
  std::mt19937 gen(17);
  const Mat6d A0 = random_stable_matrix(gen, 0.4);
  const Mat6d A1 = random_stable_matrix(gen, 0.2);
  const auto A_of_t = [&](double t) { return Mat6d(A0 + std::sin(3.0 * t) * A1); };

  const CovLTd Q = NoiseSpec::default_spec().Q;
  CovLTd P0 = CovLTd::Zero();
  for (int i = 0; i < 6; ++i) P0[lt_index(i, i)] = 0.2 + 0.05 * i;

  const double T = 1.0;
  const int N = 8;
  const CollocationScheme s = gl_scheme(3);
  const double nu = T / N;

  CovLTd P = P0;
  for (int k = 0; k < N; ++k) {
    std::vector<Mat6d> A_stages;
    for (int i = 0; i < s.d; ++i) {
      A_stages.push_back(A_of_t(k * nu + s.tau[i] * nu));
    }
    std::vector<CovLTd> sigma;
    CovLTd P_next;
    solve_cov_interval(s, P, A_stages, Q, nu, &sigma, &P_next);
    P = P_next;
  }

  std::vector<double> grid;
  const int fine = 2000;
  for (int i = 0; i <= fine; ++i) grid.push_back(T * i / fine);
  const CovLTd P_oracle = propagate_via_stm(A_of_t, P0, Q, grid);

  const Mat6d D = cov_to_dense(P) - cov_to_dense(P_oracle);
  const double rel = D.norm() / cov_to_dense(P_oracle).norm();
  CHECK(rel < 1e-6);
}

TEST_CASE("closed-loop covariance residual") {
  const CollocationScheme s = gl_scheme(2);
  std::mt19937 gen(23);
  const Mat6d A = random_stable_matrix(gen, 0.5);
  Mat63d B = Mat63d::Zero();
  B(0, 0) = 1.0 / 800.0;
  B(1, 2) = 4.0;
  B(2, 2) = 9.0;
  Mat36d K = Mat36d::Zero();
  K(0, 0) = 2000.0;
  K(2, 1) = 0.05;
  K(2, 2) = 0.12;
  const CovLTd Q = NoiseSpec::default_spec().Q;
  CovLTd P_prev = CovLTd::Zero();
  for (int i = 0; i < 6; ++i) P_prev[lt_index(i, i)] = 0.3;
  const double nu = 0.15;
  const std::vector<Mat6d> A_stages(2, A);
  const std::vector<Mat63d> B_stages(2, B);

  SUBCASE("K = 0 reduces to the open-loop residual") {
    std::vector<double> stages(size_t(kNcov) * 2);
    std::mt19937 g2(5);
    std::uniform_real_distribution<double> dist(-0.2, 0.2);
    for (double& v : stages) v = dist(g2);
    CovLTd P_k = P_prev;
    std::vector<double> out_ol(size_t(kNcov) * 3), out_cl(size_t(kNcov) * 3);
    cov_collocation_residual<double>(s, P_prev, stages.data(), P_k, A_stages, Q,
                                     nu, out_ol.data());
    cov_cl_collocation_residual<double>(s, P_prev, stages.data(), P_k, A_stages,
                                        B_stages, Mat36d::Zero(), Q, nu,
                                        out_cl.data());
    for (size_t i = 0; i < out_ol.size(); ++i) CHECK(out_ol[i] == out_cl[i]);
  }

  SUBCASE("closed loop with (A, B, K) equals open loop with A - B K") {
    std::vector<CovLTd> sig_cl, sig_sub;
    CovLTd P_cl, P_sub;
    solve_cov_interval(s, P_prev, A_stages, Q, nu, &sig_cl, &P_cl, &B_stages, &K);
    const std::vector<Mat6d> Atil(2, Mat6d(A - B * K));
    solve_cov_interval(s, P_prev, Atil, Q, nu, &sig_sub, &P_sub);
    CHECK((P_cl - P_sub).cwiseAbs().maxCoeff() < 1e-12);
    for (int i = 0; i < 2; ++i) {
      CHECK((sig_cl[size_t(i)] - sig_sub[size_t(i)]).cwiseAbs().maxCoeff() < 1e-12);
    }
  }

  SUBCASE("stabilizing feedback contracts the covariance when Q = 0") {
    // A = 0, B K = 0.8 * I via a diagonal surrogate: use Atilde directly.
    const std::vector<Mat6d> Astab(2, Mat6d(-0.8 * Mat6d::Identity()));
    std::vector<CovLTd> sigma;
    CovLTd P_next;
    solve_cov_interval(s, P_prev, Astab, CovLTd::Zero(), 0.5, &sigma, &P_next);
    CHECK(cov_to_dense(P_next).trace() < cov_to_dense(P_prev).trace());
    CHECK(cov_to_dense(P_next).trace() > 0.0);
  }
}

TEST_CASE("mean residual vanishes for straight coasting at constant speed") {
  // With zero drive, brake, and steering on a straight heading, the only
  // nonzero derivative is xG' = u, so the exact trajectory is linear in tau
  // and collocation must reproduce it to machine precision.
  const VehicleParams p;
  const CollocationScheme s = gl_scheme(3);
  const double u0 = 30.0;
  const double nu = 0.4;
  Vec6d mu_prev = Vec6d::Zero();
  mu_prev[kU] = u0;
  const Vec3d ctrl = Vec3d::Zero();

  std::vector<double> stages(size_t(kNx) * 3);
  for (int i = 0; i < 3; ++i) {
    Eigen::Map<Vec6d> xi(stages.data() + size_t(i) * kNx);
    xi = mu_prev;
    xi[kXG] = u0 * nu * s.tau[i];
  }
  Vec6d mu_k = mu_prev;
  mu_k[kXG] = u0 * nu;

  std::vector<double> out(size_t(kNx) * 4, 1.0);
  mean_collocation_residual<double>(s, mu_prev, stages.data(), mu_k, ctrl, nu,
                                    p, out.data());
  for (double v : out) CHECK(std::abs((v) - (0.0)) < 1e-10);

  // Dual evaluation agrees with the double evaluation on values.
  Vec6<Dual> mu_prev_d = mu_prev.cast<Dual>();
  Vec6<Dual> mu_k_d = mu_k.cast<Dual>();
  Vec3<Dual> ctrl_d = ctrl.cast<Dual>();
  std::vector<Dual> stages_d(stages.begin(), stages.end());
  stages_d[0].d = 1.0;  // seed du at the first stage
  std::vector<Dual> out_d(size_t(kNx) * 4, Dual(1.0));
  mean_collocation_residual<Dual>(s, mu_prev_d, stages_d.data(), mu_k_d, ctrl_d,
                                  Dual(nu), p, out_d.data());
  for (size_t i = 0; i < out_d.size(); ++i) {
    CHECK(std::abs((out_d[i].v) - (out[i])) < 1e-12);
    CHECK(std::isfinite(out_d[i].d));
  }
}

TEST_CASE("cost assembly sums interval durations and control differences") {
  CostRegularization reg;
  std::vector<double> nu{0.1, 0.2};
  std::vector<Vec3d> u{Vec3d(0, 0, 0), Vec3d(5000, 0, 0), Vec3d(5000, 0, 0.1)};
  const double J = assemble_cost(nu, u, reg);
  // Each control step contributes 1e-4 * 1.0 in scaled units.
  CHECK(std::abs((J) - (0.3 + 1e-4 + 1e-4)) < 1e-15);

  // Tangent propagation through the cost.
  std::vector<Dual> nu_d{Dual(0.1), Dual(0.2)};
  nu_d[0].d = 1.0;
  std::vector<Vec3<Dual>> u_d;
  for (const auto& v : u) u_d.push_back(v.cast<Dual>());
  const Dual J_d = assemble_cost(nu_d, u_d, reg);
  CHECK(std::abs((J_d.v) - (J)) < 1e-15);
  CHECK(std::abs((J_d.d) - (1.0)) < 1e-15);
}
