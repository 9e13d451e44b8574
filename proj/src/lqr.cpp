#include "laptime/lqr.hpp"

#include <stdexcept>
#include <string>

#include <Eigen/Cholesky>
#include <unsupported/Eigen/MatrixFunctions>

#include "laptime/errors.hpp"

namespace laptime {

LqrWeights LqrWeights::defaults() {
  const Vec6d sigma = (Vec6d() << 0.1, 0.01, 0.01, 1.0, 1.0, 0.0175).finished();
  LqrWeights w;
  w.W = sigma.cwiseAbs2().cwiseInverse().asDiagonal();
  w.W_N = 10.0 * w.W;
  w.R = Vec2d(1.0 / (5000.0 * 5000.0), 1.0 / (0.1 * 0.1)).asDiagonal();
  return w;
}

void discretize_linearization(const Mat6d& A, const Mat62d& B_tilde, double nu,
                              Mat6d* A_hat, Mat62d* B_hat) {
  if (!(nu > 0.0)) {
    throw std::domain_error("discretize_linearization: nu must be positive");
  }
  Eigen::Matrix<double, 8, 8> M = Eigen::Matrix<double, 8, 8>::Zero();
  M.topLeftCorner<6, 6>() = A * nu;
  M.topRightCorner<6, 2>() = B_tilde * nu;
  const Eigen::Matrix<double, 8, 8> E = M.exp();
  if (A_hat != nullptr) *A_hat = E.topLeftCorner<6, 6>();
  if (B_hat != nullptr) *B_hat = E.topRightCorner<6, 2>();
}

GainSchedule riccati_recursion(const std::vector<Mat6d>& A_hat,
                               const std::vector<Mat62d>& B_hat,
                               const LqrWeights& weights) {
  if (A_hat.size() != B_hat.size()) {
    throw std::invalid_argument(
        "riccati_recursion: A and B sequences differ in length");
  }
  const int n = static_cast<int>(A_hat.size());
  GainSchedule sched;
  sched.S.resize(size_t(n) + 1);
  sched.K_tilde.resize(size_t(n));

  Mat6d S = 0.5 * (weights.W_N + weights.W_N.transpose());
  if (Eigen::LLT<Mat6d>(S).info() != Eigen::Success) {
    throw SolverError("riccati_recursion: terminal weight is not positive definite");
  }
  sched.S[size_t(n)] = S;

  for (int k = n - 1; k >= 0; --k) {
    const Mat6d& A = A_hat[size_t(k)];
    const Mat62d& B = B_hat[size_t(k)];
    Mat2d G = weights.R + B.transpose() * S * B;
    G = 0.5 * (G + G.transpose());
    Eigen::LLT<Mat2d> lltG(G);
    if (lltG.info() != Eigen::Success) {
      throw SolverError(
          "riccati_recursion: control Hessian not positive definite at interval " +
          std::to_string(k));
    }
    const Mat26d K = lltG.solve(B.transpose() * S * A);
    Mat6d Sk = weights.W + A.transpose() * S * A - A.transpose() * S * B * K;
    Sk = 0.5 * (Sk + Sk.transpose());
    if (Eigen::LLT<Mat6d>(Sk).info() != Eigen::Success) {
      throw SolverError(
          "riccati_recursion: cost-to-go lost positive definiteness at interval " +
          std::to_string(k));
    }
    sched.K_tilde[size_t(k)] = K;
    sched.S[size_t(k)] = Sk;
    S = Sk;
  }
  return sched;
}

GainSchedule synthesize_schedule(const std::vector<Mat6d>& A,
                                 const std::vector<Mat63d>& B,
                                 const std::vector<Vec3d>& u_nominal,
                                 const std::vector<double>& nu,
                                 const LqrWeights& weights) {
  const size_t n = A.size();
  if (B.size() != n || u_nominal.size() != n || nu.size() != n) {
    throw std::invalid_argument(
        "synthesize_schedule: sequence lengths disagree");
  }
  std::vector<Mat6d> A_hat(n);
  std::vector<Mat62d> B_hat(n);
  std::vector<ModeSplit<double>> split(n);
  for (size_t k = 0; k < n; ++k) {
    split[k] = hard_indicators(u_nominal[k][kFxA] + u_nominal[k][kFxB]);
    discretize_linearization(A[k], reduce_input_matrix(B[k], split[k]), nu[k],
                             &A_hat[k], &B_hat[k]);
  }
  GainSchedule sched = riccati_recursion(A_hat, B_hat, weights);
  sched.K_ext.resize(n);
  sched.mode.resize(n);
  for (size_t k = 0; k < n; ++k) {
    sched.K_ext[k] = extend_gain(sched.K_tilde[k], split[k]);
    sched.mode[k] = split[k].drive >= 0.5 ? 1 : -1;
  }
  return sched;
}

}  // namespace laptime
