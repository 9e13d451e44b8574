#include "laptime/constraints.hpp"

namespace laptime {

ConstraintResidual flc_residual(const Vec6d& x, const Vec3d& ctrl,
                                const VehicleParams& params, int axle,
                                const std::optional<CovLTd>& P,
                                const ConfidenceSpec& conf) {
  ConstraintResidual res;
  res.tag = (axle == kFront) ? ConstraintTag::FLC_front
                             : ConstraintTag::FLC_rear;
  const AxleLoads loads = axle_vertical_loads(ctrl, params);
  const double Z = (axle == kFront) ? loads.Z1 : loads.Z2;
  res.flag = Z <= params.z_floor;
  res.grad_x = grad_saturation_states(x, ctrl, params, axle);
  res.value = saturation_ratio_from_state(x, ctrl, params, axle) - 1.0;
  if (P.has_value()) {
    res.value += backoff(res.grad_x, *P, conf.gamma);
  }
  return res;
}

std::pair<ConstraintResidual, ConstraintResidual> tlc_residuals(
    double e, const TrackNode& node, const std::optional<CovLTd>& P,
    const ConfidenceSpec& conf) {
  const Vec6d grad = tlc_gradient(node);
  double beta = 0.0;
  if (P.has_value()) beta = backoff(grad, *P, conf.gamma);

  ConstraintResidual upper;
  upper.tag = ConstraintTag::TLC_upper;
  upper.value = e - node.e_max + beta;
  upper.grad_x = grad;

  ConstraintResidual lower;
  lower.tag = ConstraintTag::TLC_lower;
  lower.value = node.e_min - e + beta;
  lower.grad_x = -grad;

  const bool closed = beta >= 0.5 * (node.e_max - node.e_min);
  upper.flag = closed;
  lower.flag = closed;
  return {upper, lower};
}

}  // namespace laptime
