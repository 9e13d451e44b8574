#pragma once

#include <Eigen/Core>

namespace laptime {

// Dense types templated on scalar so every model function can be evaluated
// with plain doubles or with forward-mode dual numbers (see dual.hpp).
template <typename Scalar> using Vec2 = Eigen::Matrix<Scalar, 2, 1>;
template <typename Scalar> using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar> using Vec6 = Eigen::Matrix<Scalar, 6, 1>;
template <typename Scalar> using Mat2 = Eigen::Matrix<Scalar, 2, 2>;
template <typename Scalar> using Mat6 = Eigen::Matrix<Scalar, 6, 6>;
template <typename Scalar> using Mat63 = Eigen::Matrix<Scalar, 6, 3>;
template <typename Scalar> using Mat62 = Eigen::Matrix<Scalar, 6, 2>;
template <typename Scalar> using Mat26 = Eigen::Matrix<Scalar, 2, 6>;
template <typename Scalar> using Mat36 = Eigen::Matrix<Scalar, 3, 6>;
template <typename Scalar> using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar> using MatX =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Vec2d = Vec2<double>;
using Vec3d = Vec3<double>;
using Vec6d = Vec6<double>;
using Mat2d = Mat2<double>;
using Mat6d = Mat6<double>;
using Mat63d = Mat63<double>;
using Mat62d = Mat62<double>;
using Mat26d = Mat26<double>;
using Mat36d = Mat36<double>;
using VecXd = VecX<double>;
using MatXd = MatX<double>;

// State vector layout: [u, v, r, xG, yG, psi].
enum StateIndex : int { kU = 0, kV = 1, kR = 2, kXG = 3, kYG = 4, kPsi = 5 };

// Control vector layout: [Fx_a (drive, >= 0), Fx_b (brake, <= 0), delta].
enum ControlIndex : int { kFxA = 0, kFxB = 1, kDelta = 2 };

inline constexpr int kNx = 6;  // state dimension
inline constexpr int kNu = 3;  // control dimension
inline constexpr int kNz = 5;  // algebraic dimension [e, Z1, Z2, Y1, Y2]

}  // namespace laptime
