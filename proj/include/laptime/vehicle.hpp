#pragma once

#include <array>
#include <stdexcept>

#include "laptime/dual.hpp"
#include "laptime/types.hpp"

namespace laptime {

inline constexpr double kGravity = 9.81;  // m/s^2
inline constexpr int kFront = 0;
inline constexpr int kRear = 1;

struct VehicleParams {
  double mass = 800.0;          // kg
  double yaw_inertia = 1100.0;  // kg m^2
  double dist_front = 1.5;      // m, CoM -> front axle
  double dist_rear = 1.5;       // m, CoM -> rear axle
  double com_height = 0.3;      // m
  std::array<double, 2> mu_x = {1.6, 1.6};      // [front, rear]
  std::array<double, 2> mu_y = {1.6, 1.6};      // [front, rear]
  std::array<double, 2> pacejka_B = {10.0, 12.0};  // 1/rad
  std::array<double, 2> pacejka_C = {1.5, 1.5};
  double brake_split_front = 0.6;   // kappa_b in [0, 1]
  double track_width = 1.6;         // t_w, m
  double max_drive_force = 15000.0;   // N
  double max_brake_force = 15000.0;   // N, bound is [-max_brake_force, 0]
  double max_steer = 0.35;            // rad
  double u_min = 1.0;                 // m/s, slip-angle domain guard
  double z_floor = 200.0;             // N, load floor used by constraints
  // When true, front-axle forces enter the force balance unrotated (the
  // steer angle then acts only through the slip angle).
  bool small_angle_front_forces = false;

  double wheelbase() const { return dist_front + dist_rear; }

  void validate() const {
    if (mass <= 0 || yaw_inertia <= 0 || dist_front <= 0 || dist_rear <= 0 ||
        com_height <= 0) {
      throw std::invalid_argument("vehicle: masses/lengths/inertia must be > 0");
    }
    if (brake_split_front < 0 || brake_split_front > 1) {
      throw std::invalid_argument("vehicle: brake_split_front must be in [0,1]");
    }
    for (int j : {kFront, kRear}) {
      if (mu_x[j] <= 0 || mu_y[j] <= 0) {
        throw std::invalid_argument("vehicle: friction coefficients must be > 0");
      }
    }
  }
};

// Per-axle longitudinal ground forces.  Drive is rear-only; braking is split
// by kappa_b:  X1 = kappa_b*Fx_b,  X2 = Fx_a + (1-kappa_b)*Fx_b.
template <typename Scalar>
void axle_longitudinal_forces(const Vec3<Scalar>& ctrl,
                              const VehicleParams& p, Scalar& X1, Scalar& X2) {
  X1 = p.brake_split_front * ctrl[kFxB];
  X2 = ctrl[kFxA] + (1.0 - p.brake_split_front) * ctrl[kFxB];
}

template <typename Scalar>
struct AxleLoadsT {
  Scalar Z1;  // front vertical load, N
  Scalar Z2;  // rear vertical load, N
  bool wheel_lift() const { return value_of(Z1) <= 0.0 || value_of(Z2) <= 0.0; }
};
using AxleLoads = AxleLoadsT<double>;

// Quasi-static longitudinal load transfer about the wheelbase, driven by the
// net longitudinal force Fx = X1 + X2 (unrotated, so loads stay an explicit
// function of the controls).
template <typename Scalar>
AxleLoadsT<Scalar> axle_vertical_loads(const Vec3<Scalar>& ctrl,
                                       const VehicleParams& p) {
  Scalar X1, X2;
  axle_longitudinal_forces(ctrl, p, X1, X2);
  const Scalar Fx = X1 + X2;
  const double l = p.wheelbase();
  AxleLoadsT<Scalar> loads;
  loads.Z1 = p.mass * kGravity * p.dist_rear / l - (p.com_height / l) * Fx;
  loads.Z2 = p.mass * kGravity * p.dist_front / l + (p.com_height / l) * Fx;
  return loads;
}

// alpha1 = delta - atan((v + a r)/u),  alpha2 = -atan((v - b r)/u).
// Positive slip produces positive lateral force.
template <typename Scalar>
void slip_angles(const Vec6<Scalar>& x, const Vec3<Scalar>& ctrl,
                 const VehicleParams& p, Scalar& alpha1, Scalar& alpha2) {
  if (value_of(x[kU]) <= p.u_min) {
    throw std::domain_error("slip_angles: u <= u_min");
  }
  alpha1 = ctrl[kDelta] - atan((x[kV] + p.dist_front * x[kR]) / x[kU]);
  alpha2 = -atan((x[kV] - p.dist_rear * x[kR]) / x[kU]);
}

// Magic-formula lateral force: Y = mu_y[j] * Z * sin(C[j] * atan(B[j]*alpha)).
template <typename Scalar>
Scalar axle_lateral_force(const Scalar& alpha, const Scalar& Z, int axle_index,
                          const VehicleParams& p) {
  return p.mu_y[axle_index] * Z *
         sin(p.pacejka_C[axle_index] * atan(p.pacejka_B[axle_index] * alpha));
}

template <typename Scalar>
struct PlanarForcesT {
  Scalar X1, Y1, X2, Y2;  // per-axle in-plane ground forces, N
};
using PlanarForces = PlanarForcesT<double>;

// All four in-plane ground forces from state and controls.
template <typename Scalar>
PlanarForcesT<Scalar> planar_forces(const Vec6<Scalar>& x,
                                    const Vec3<Scalar>& ctrl,
                                    const VehicleParams& p) {
  PlanarForcesT<Scalar> f;
  axle_longitudinal_forces(ctrl, p, f.X1, f.X2);
  const AxleLoadsT<Scalar> loads = axle_vertical_loads(ctrl, p);
  Scalar alpha1, alpha2;
  slip_angles(x, ctrl, p, alpha1, alpha2);
  f.Y1 = axle_lateral_force(alpha1, loads.Z1, kFront, p);
  f.Y2 = axle_lateral_force(alpha2, loads.Z2, kRear, p);
  return f;
}

// Single-track force balance, body frame:
//   m (udot - v r) = X1 cos d - Y1 sin d + X2
//   m (vdot + u r) = X1 sin d + Y1 cos d + Y2
//   Iz rdot        = a (X1 sin d + Y1 cos d) - b Y2
// plus planar kinematics of the CoM.
template <typename Scalar>
Vec6<Scalar> dynamics(const Vec6<Scalar>& x, const Vec3<Scalar>& ctrl,
                      const VehicleParams& p) {
  const PlanarForcesT<Scalar> f = planar_forces(x, ctrl, p);
  Scalar front_long, front_lat;  // front-axle force in the body frame
  if (p.small_angle_front_forces) {
    front_long = f.X1;
    front_lat = f.Y1;
  } else {
    const Scalar cd = cos(ctrl[kDelta]);
    const Scalar sd = sin(ctrl[kDelta]);
    front_long = f.X1 * cd - f.Y1 * sd;
    front_lat = f.X1 * sd + f.Y1 * cd;
  }
  const Scalar cpsi = cos(x[kPsi]);
  const Scalar spsi = sin(x[kPsi]);

  Vec6<Scalar> xdot;
  xdot[kU] = (front_long + f.X2) / p.mass + x[kV] * x[kR];
  xdot[kV] = (front_lat + f.Y2) / p.mass - x[kU] * x[kR];
  xdot[kR] = (p.dist_front * front_lat - p.dist_rear * f.Y2) / p.yaw_inertia;
  xdot[kXG] = x[kU] * cpsi - x[kV] * spsi;
  xdot[kYG] = x[kU] * spsi + x[kV] * cpsi;
  xdot[kPsi] = x[kR];
  return xdot;
}

// Exact Jacobians A = df/dx, B = df/du by forward-mode AD of `dynamics`.
template <typename Scalar = double>
void jacobians(const Vec6<Scalar>& x, const Vec3<Scalar>& ctrl,
               const VehicleParams& p, Mat6<Scalar>* A, Mat63<Scalar>* B) {
  using D = DualT<Scalar>;
  Vec6<D> xd;
  Vec3<D> ud;
  for (int i = 0; i < kNx; ++i) xd[i] = D(x[i], Scalar(0.0));
  for (int i = 0; i < kNu; ++i) ud[i] = D(ctrl[i], Scalar(0.0));
  if (A != nullptr) {
    for (int j = 0; j < kNx; ++j) {
      xd[j].d = Scalar(1.0);
      const Vec6<D> fd = dynamics(xd, ud, p);
      for (int i = 0; i < kNx; ++i) (*A)(i, j) = fd[i].d;
      xd[j].d = Scalar(0.0);
    }
  }
  if (B != nullptr) {
    for (int j = 0; j < kNu; ++j) {
      ud[j].d = Scalar(1.0);
      const Vec6<D> fd = dynamics(xd, ud, p);
      for (int i = 0; i < kNx; ++i) (*B)(i, j) = fd[i].d;
      ud[j].d = Scalar(0.0);
    }
  }
}

}  // namespace laptime
