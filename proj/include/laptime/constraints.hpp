#pragma once

#include <optional>
#include <string>
#include <utility>

#include "laptime/stochastics.hpp"
#include "laptime/track.hpp"
#include "laptime/vehicle.hpp"

namespace laptime {

enum class ConstraintTag { FLC_front, FLC_rear, TLC_upper, TLC_lower };

inline std::string to_string(ConstraintTag tag) {
  switch (tag) {
    case ConstraintTag::FLC_front: return "FLC_front";
    case ConstraintTag::FLC_rear: return "FLC_rear";
    case ConstraintTag::TLC_upper: return "TLC_upper";
    case ConstraintTag::TLC_lower: return "TLC_lower";
  }
  return "?";
}

// Feasible iff value <= 0.
struct ConstraintResidual {
  double value = 0.0;
  Vec6d grad_x = Vec6d::Zero();
  ConstraintTag tag = ConstraintTag::FLC_front;
  bool flag = false;  // load floor violated / track closed by back-off
};

// Axle saturation ratio S = ((X/mu_x)^2 + (Y/mu_y)^2) / Z^2.
template <typename Scalar>
Scalar saturation_ratio(const Scalar& X, const Scalar& Y, const Scalar& Z,
                        double mu_x, double mu_y) {
  const Scalar xs = X / mu_x;
  const Scalar ys = Y / mu_y;
  return (xs * xs + ys * ys) / (Z * Z);
}

// S_j recomputed from state and controls through loads and tire forces.
template <typename Scalar>
Scalar saturation_ratio_from_state(const Vec6<Scalar>& x,
                                   const Vec3<Scalar>& ctrl,
                                   const VehicleParams& p, int axle) {
  Scalar X1, X2;
  axle_longitudinal_forces(ctrl, p, X1, X2);
  const AxleLoadsT<Scalar> loads = axle_vertical_loads(ctrl, p);
  Scalar a1, a2;
  slip_angles(x, ctrl, p, a1, a2);
  const Scalar alpha = (axle == kFront) ? a1 : a2;
  const Scalar Z = (axle == kFront) ? loads.Z1 : loads.Z2;
  const Scalar X = (axle == kFront) ? X1 : X2;
  const Scalar Y = axle_lateral_force(alpha, Z, axle, p);
  return saturation_ratio(X, Y, Z, p.mu_x[axle], p.mu_y[axle]);
}

// State gradient of S_j (controls held fixed), by forward-mode AD through
// forces and loads.  Generic over Scalar so an outer AD pass can
// differentiate through this gradient in robust planner residuals.
template <typename Scalar>
Vec6<Scalar> grad_saturation_states(const Vec6<Scalar>& x,
                                    const Vec3<Scalar>& ctrl,
                                    const VehicleParams& p, int axle) {
  using D = DualT<Scalar>;
  Vec6<D> xd;
  Vec3<D> ud;
  for (int i = 0; i < kNx; ++i) xd[i] = D(x[i], Scalar(0.0));
  for (int i = 0; i < kNu; ++i) ud[i] = D(ctrl[i], Scalar(0.0));
  Vec6<Scalar> grad;
  for (int j = 0; j < kNx; ++j) {
    xd[j].d = Scalar(1.0);
    grad[j] = saturation_ratio_from_state(xd, ud, p, axle).d;
    xd[j].d = Scalar(0.0);
  }
  return grad;
}

// Friction-limit residual for one axle: S_j - 1 (+ back-off when P given).
ConstraintResidual flc_residual(const Vec6d& x, const Vec3d& ctrl,
                                const VehicleParams& params, int axle,
                                const std::optional<CovLTd>& P,
                                const ConfidenceSpec& conf);

// TLC gradient depends only on the node normal: [0,0,0,n_x,n_y,0].
inline Vec6d tlc_gradient(const TrackNode& node) {
  Vec6d g = Vec6d::Zero();
  g[kXG] = node.n.x();
  g[kYG] = node.n.y();
  return g;
}

// Track-limit residual pair: (e - e_max + beta, e_min - e + beta).
// Sets .flag on both when beta >= (e_max - e_min)/2 (track closed).
std::pair<ConstraintResidual, ConstraintResidual> tlc_residuals(
    double e, const TrackNode& node, const std::optional<CovLTd>& P,
    const ConfidenceSpec& conf);

// On-plane equality: [xG; yG] - c - e n = 0.
template <typename Scalar>
Vec2<Scalar> onplane_residual(const Vec6<Scalar>& x, const Scalar& e,
                              const TrackNode& node) {
  Vec2<Scalar> res;
  res[0] = x[kXG] - node.c.x() - e * node.n.x();
  res[1] = x[kYG] - node.c.y() - e * node.n.y();
  return res;
}

}  // namespace laptime
