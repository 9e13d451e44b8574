#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <unsupported/Eigen/MatrixFunctions>

#include "laptime/stochastics.hpp"

using namespace laptime;

namespace {

Mat6d random_sym_psd(std::mt19937& rng, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  Mat6d M;
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) M(i, j) = n(rng);
  return (M * M.transpose()).eval();
}

Mat6d random_mat(std::mt19937& rng, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  Mat6d M;
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) M(i, j) = n(rng);
  return M;
}

// Independent CDF oracle for the quantile tests.
double cdf_erfc(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace

TEST_CASE("lower-triangle indexing round trip") {
  CHECK(lt_index(0, 0) == 0);
  CHECK(lt_index(1, 0) == 1);
  CHECK(lt_index(1, 1) == 2);
  CHECK(lt_index(5, 5) == 20);
  std::mt19937 rng(3);
  Mat6d P = random_sym_psd(rng, 1.0);
  Mat6d back = cov_to_dense(cov_from_dense(P));
  CHECK((P - back).norm() == 0.0);
  CHECK((back - back.transpose()).norm() == 0.0);
}

TEST_CASE("quantile: symmetry point, tabulated values, accuracy") {
  CHECK(std::abs(quantile(0.5)) < 1e-10);
  CHECK(quantile(0.9) == doctest::Approx(1.2816).epsilon(1e-4));
  CHECK(quantile(0.97725) == doctest::Approx(2.0).epsilon(1e-4));
  // One-sided 1/2/3-sigma probabilities invert to the integer gains.
  CHECK(quantile(0.8413447460685429) == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(quantile(0.9772498680518208) == doctest::Approx(2.0).epsilon(1e-7));
  CHECK(quantile(0.9986501019683699) == doctest::Approx(3.0).epsilon(1e-7));
  for (double p : {0.55, 0.75, 0.9, 0.99, 0.999}) {
    CHECK(std::abs(cdf_erfc(quantile(p)) - p) <= 1e-10);
  }
  CHECK_THROWS_AS(quantile(0.0), std::domain_error);
  CHECK_THROWS_AS(quantile(1.0), std::domain_error);
  CHECK_THROWS_AS(quantile(-2.0), std::domain_error);
}

TEST_CASE("lyapunov_rhs") {
  std::mt19937 rng(11);
  SUBCASE("A = 0 gives Q") {
    CovLTd Q = cov_from_dense(random_sym_psd(rng, 2.0));
    CovLTd P = cov_from_dense(random_sym_psd(rng, 1.0));
    CHECK((lyapunov_rhs(Mat6d::Zero().eval(), P, Q) - Q).norm() == 0.0);
  }
  SUBCASE("scalar equilibrium: a=-1, p=1, q=2") {
    Mat6d A = Mat6d::Zero();
    A(0, 0) = -1.0;
    CovLTd P = CovLTd::Zero();
    P[lt_index(0, 0)] = 1.0;
    CovLTd Q = CovLTd::Zero();
    Q[lt_index(0, 0)] = 2.0;
    CHECK(lyapunov_rhs(A, P, Q).norm() == 0.0);
  }
  SUBCASE("random instances match dense algebra") {
    for (int i = 0; i < 50; ++i) {
      Mat6d A = random_mat(rng, 3.0);
      Mat6d P = random_sym_psd(rng, 1.5);
      Mat6d Q = random_sym_psd(rng, 0.5);
      Mat6d dense = A * P + P * A.transpose() + Q;
      CovLTd got = lyapunov_rhs(A, cov_from_dense(P), cov_from_dense(Q));
      CHECK((cov_to_dense(got) - dense).norm() <=
            1e-14 * std::max(1.0, dense.norm()));
    }
  }
}

TEST_CASE("closed_loop_rhs") {
  std::mt19937 rng(13);
  SUBCASE("K = 0 reduces to the open-loop RHS") {
    Mat6d A = random_mat(rng, 2.0);
    Mat63d B = Mat63d::Random();
    CovLTd P = cov_from_dense(random_sym_psd(rng, 1.0));
    CovLTd Q = cov_from_dense(random_sym_psd(rng, 0.3));
    CHECK((closed_loop_rhs(A, B, Mat36d::Zero().eval(), P, Q) -
           lyapunov_rhs(A, P, Q))
              .norm() == 0.0);
  }
  SUBCASE("scalar closed loop: a=1, b=1, k=2, q=0, p=1") {
    Mat6d A = Mat6d::Zero();
    A(0, 0) = 1.0;
    Mat63d B = Mat63d::Zero();
    B(0, 0) = 1.0;
    Mat36d K = Mat36d::Zero();
    K(0, 0) = 2.0;
    CovLTd P = CovLTd::Zero();
    P[lt_index(0, 0)] = 1.0;
    CovLTd rhs = closed_loop_rhs(A, B, K, P, CovLTd::Zero().eval());
    CHECK(rhs[lt_index(0, 0)] == doctest::Approx(-2.0));
  }
  SUBCASE("random instances match dense algebra with explicit Atilde") {
    for (int i = 0; i < 50; ++i) {
      Mat6d A = random_mat(rng, 3.0);
      Mat63d B = Mat63d::Random() * 2.0;
      Mat36d K = Mat36d::Random();
      Mat6d P = random_sym_psd(rng, 1.0);
      Mat6d Q = random_sym_psd(rng, 0.4);
      Mat6d At = A - B * K;
      Mat6d dense = At * P + P * At.transpose() + Q;
      CovLTd got = closed_loop_rhs(A, B, K, cov_from_dense(P), cov_from_dense(Q));
      CHECK((cov_to_dense(got) - dense).norm() <=
            1e-14 * std::max(1.0, dense.norm()));
    }
  }
}

TEST_CASE("propagate_via_stm") {
  std::mt19937 rng(17);
  SUBCASE("noiseless constant A: matrix-exponential sandwich") {
    Mat6d A = random_mat(rng, 0.8);
    Mat6d P0 = random_sym_psd(rng, 1.0);
    const double T = 0.7;
    std::vector<double> grid;
    for (int i = 0; i <= 200; ++i) grid.push_back(T * i / 200.0);
    CovLTd got = propagate_via_stm([&](double) { return A; },
                                   cov_from_dense(P0),
                                   CovLTd::Zero().eval(), grid);
    Mat6d eAt = (A * T).exp();
    Mat6d want = eAt * P0 * eAt.transpose();
    CHECK((cov_to_dense(got) - want).norm() <= 1e-8 * want.norm());
  }
  SUBCASE("pure diffusion: P = P0 + Q t") {
    Mat6d P0 = random_sym_psd(rng, 1.0);
    Mat6d Q = random_sym_psd(rng, 0.5);
    std::vector<double> grid;
    for (int i = 0; i <= 50; ++i) grid.push_back(2.0 * i / 50.0);
    CovLTd got = propagate_via_stm([&](double) { return Mat6d::Zero(); },
                                   cov_from_dense(P0), cov_from_dense(Q), grid);
    Mat6d want = P0 + 2.0 * Q;
    CHECK((cov_to_dense(got) - want).norm() <= 1e-12 * want.norm());
  }
}

TEST_CASE("backoff") {
  std::mt19937 rng(23);
  Vec6d g = Vec6d::Random();
  CHECK(backoff(g, CovLTd::Zero().eval(), 1.7) == 0.0);

  Vec6d e1 = Vec6d::Zero();
  e1[0] = 1.0;
  CHECK(backoff(e1, cov_from_dense(Mat6d::Identity().eval()), 2.0) ==
        doctest::Approx(2.0));

  for (int i = 0; i < 50; ++i) {
    Vec6d grad = Vec6d::Random() * 3.0;
    Mat6d P = random_sym_psd(rng, 1.0);
    const double gamma = 1.28;
    const double want = gamma * std::sqrt(grad.dot(P * grad));
    CHECK(backoff(grad, cov_from_dense(P), gamma) ==
          doctest::Approx(want).epsilon(1e-12));
    // Homogeneity: degree 1 in gamma, degree 1/2 in P scale.
    CHECK(backoff(grad, cov_from_dense((4.0 * P).eval()), gamma) ==
          doctest::Approx(2.0 * want).epsilon(1e-12));
    CHECK(backoff(grad, cov_from_dense(P), 2.0 * gamma) ==
          doctest::Approx(2.0 * want).epsilon(1e-12));
  }

  // Smoothed variant: within gamma*eps of exact, differentiable at q = 0.
  Vec6d grad = Vec6d::Random();
  Mat6d P = random_sym_psd(rng, 0.8);
  const double exact = backoff(grad, cov_from_dense(P), 1.28);
  const double smooth = backoff_smoothed(grad, cov_from_dense(P), 1.28);
  CHECK(std::abs(smooth - exact) <= 1.28 * kBackoffEps);
  CHECK(backoff_smoothed(grad, CovLTd::Zero().eval(), 1.28) == 0.0);
}

TEST_CASE("PSD preservation along a bounded time-varying A") {
  std::mt19937 rng(29);
  Mat6d A0 = random_mat(rng, 1.0);
  Mat6d A1 = random_mat(rng, 1.0);
  auto A_at = [&](double t) {
    return (A0 * std::cos(3.0 * t) + A1 * std::sin(2.0 * t)).eval();
  };
  CovLTd Q = cov_from_dense(random_sym_psd(rng, 0.3));
  CovLTd P = cov_from_dense(random_sym_psd(rng, 1.0));
  // RK4 integration of the Lyapunov ODE on the lower triangle.
  const double h = 1e-3;
  for (int step = 0; step < 2000; ++step) {
    const double t = step * h;
    CovLTd k1 = lyapunov_rhs(A_at(t), P, Q);
    CovLTd k2 = lyapunov_rhs(A_at(t + 0.5 * h), (P + 0.5 * h * k1).eval(), Q);
    CovLTd k3 = lyapunov_rhs(A_at(t + 0.5 * h), (P + 0.5 * h * k2).eval(), Q);
    CovLTd k4 = lyapunov_rhs(A_at(t + h), (P + h * k3).eval(), Q);
    P += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  Eigen::SelfAdjointEigenSolver<Mat6d> eig(cov_to_dense(P));
  CHECK(eig.eigenvalues().minCoeff() >=
        -1e-8 * cov_to_dense(P).trace());
}

TEST_CASE("trace grows under pure diffusion") {
  std::mt19937 rng(31);
  CovLTd Q = cov_from_dense(random_sym_psd(rng, 0.5));
  CovLTd P = cov_from_dense(random_sym_psd(rng, 1.0));
  double prev = cov_to_dense(P).trace();
  for (int step = 0; step < 100; ++step) {
    P += 0.01 * lyapunov_rhs(Mat6d::Zero().eval(), P, Q);
    const double tr = cov_to_dense(P).trace();
    CHECK(tr > prev);
    prev = tr;
  }
}
