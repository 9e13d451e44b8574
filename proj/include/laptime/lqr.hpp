#pragma once

#include <vector>

#include "laptime/dual.hpp"
#include "laptime/types.hpp"

namespace laptime {

// Quadratic tracking weights for the time-varying regulator that stands in
// for the driver: running state weight W (PSD), terminal weight W_N (PD),
// and R (PD) on the minimal control [net Fx, delta].
struct LqrWeights {
  Mat6d W = Mat6d::Identity();
  Mat6d W_N = Mat6d::Identity();
  Mat2d R = Mat2d::Identity();

  // Deviations normalized by typical magnitudes so the gains stay
  // scale-balanced: 0.1 m/s, 0.01 m/s, 0.01 rad/s, 1 m, 1 m, 0.0175 rad for
  // the states; 5000 N and 0.1 rad for the controls; terminal weight 10x.
  static LqrWeights defaults();
};

// Backward-recursion output.  K_tilde acts on the minimal control, one gain
// per interval; S holds the cost-to-go at every node (one more entry).
// K_ext and mode are filled by synthesize_schedule, which knows the nominal
// drive/brake split; riccati_recursion alone leaves them empty.
struct GainSchedule {
  std::vector<Mat26d> K_tilde;
  std::vector<Mat36d> K_ext;
  std::vector<Mat6d> S;
  std::vector<int> mode;  // +1 drive, -1 brake
};

// Weight pair splitting the net longitudinal force between the drive and
// brake channels; the two entries always sum to one.
template <typename Scalar>
struct ModeSplit {
  Scalar drive;
  Scalar brake;
};

// Hard switch on the sign of the net force; zero counts as drive.
inline ModeSplit<double> hard_indicators(double fx_net) {
  return fx_net >= 0.0 ? ModeSplit<double>{1.0, 0.0}
                       : ModeSplit<double>{0.0, 1.0};
}

// Smooth surrogate (1 +- tanh(chi x))/2.  chi is in 1/N: the default gives a
// transition width of a couple hundred newtons around coasting.
inline constexpr double kDefaultModeSharpness = 0.01;

template <typename Scalar>
ModeSplit<Scalar> smoothed_indicators(const Scalar& fx_net,
                                      double chi = kDefaultModeSharpness) {
  const Scalar t = tanh(Scalar(chi) * fx_net);
  return {Scalar(0.5) * (Scalar(1.0) + t), Scalar(0.5) * (Scalar(1.0) - t)};
}

// B_tilde = B H: the drive and brake columns blend into one net-force
// column per the mode split; the steering column carries over.
template <typename Scalar>
Mat62<Scalar> reduce_input_matrix(const Mat63<Scalar>& B,
                                  const ModeSplit<Scalar>& m) {
  Mat62<Scalar> Bt;
  Bt.col(0) = m.drive * B.col(0) + m.brake * B.col(1);
  Bt.col(1) = B.col(2);
  return Bt;
}

// K = H K_tilde: the net-force gain row lands on the drive and/or brake rows
// per the mode split; the steering row carries over.  With the complementary
// split this preserves the loop map: B (H K_tilde) = (B H) K_tilde.
template <typename Scalar>
Mat36<Scalar> extend_gain(const Mat26<Scalar>& K_tilde,
                          const ModeSplit<Scalar>& m) {
  Mat36<Scalar> K;
  K.row(0) = m.drive * K_tilde.row(0);
  K.row(1) = m.brake * K_tilde.row(0);
  K.row(2) = K_tilde.row(1);
  return K;
}

// Exact discretization of xdot = A x + B_tilde u_tilde held over a duration
// nu: A_hat = exp(A nu), B_hat = (integral of exp(A tau) d tau) B_tilde,
// both read off one augmented-matrix exponential (scaling-and-squaring Pade).
void discretize_linearization(const Mat6d& A, const Mat62d& B_tilde, double nu,
                              Mat6d* A_hat, Mat62d* B_hat);

// Backward recursion from S_N = W_N:
//   K_k = (R + B' S_{k+1} B)^{-1} B' S_{k+1} A
//   S_k = W + A' S_{k+1} A - A' S_{k+1} B K_k   (symmetrized each step)
// Throws SolverError naming the interval if a cost-to-go or control Hessian
// loses positive definiteness.
GainSchedule riccati_recursion(const std::vector<Mat6d>& A_hat,
                               const std::vector<Mat62d>& B_hat,
                               const LqrWeights& weights);

// One-call synthesis along a planned trajectory: hard drive/brake split at
// the nominal controls, input reduction, exact discretization over each
// interval duration, backward recursion, and gain extension.  All sequences
// hold one entry per interval.
GainSchedule synthesize_schedule(const std::vector<Mat6d>& A,
                                 const std::vector<Mat63d>& B,
                                 const std::vector<Vec3d>& u_nominal,
                                 const std::vector<double>& nu,
                                 const LqrWeights& weights);

}  // namespace laptime
