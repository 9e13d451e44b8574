#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "laptime/vehicle.hpp"

using namespace laptime;

namespace {

Vec6d make_state(double u, double v, double r, double x = 0.0, double y = 0.0,
                 double psi = 0.0) {
  Vec6d s;
  s << u, v, r, x, y, psi;
  return s;
}

Vec3d make_ctrl(double fa, double fb, double d) {
  Vec3d c;
  c << fa, fb, d;
  return c;
}

}  // namespace

TEST_CASE("longitudinal force split") {
  VehicleParams p;
  double X1, X2;
  axle_longitudinal_forces(make_ctrl(1000.0, 0.0, 0.0), p, X1, X2);
  CHECK(X1 == 0.0);
  CHECK(X2 == 1000.0);
  axle_longitudinal_forces(make_ctrl(0.0, -2000.0, 0.0), p, X1, X2);
  CHECK(X1 == doctest::Approx(-1200.0));
  CHECK(X2 == doctest::Approx(-800.0));
  axle_longitudinal_forces(make_ctrl(0.0, 0.0, 0.0), p, X1, X2);
  CHECK(X1 == 0.0);
  CHECK(X2 == 0.0);
}

TEST_CASE("vertical loads: static split, transfer, equilibrium") {
  VehicleParams p;
  auto loads0 = axle_vertical_loads(make_ctrl(0.0, 0.0, 0.0), p);
  CHECK(loads0.Z1 == doctest::Approx(p.mass * kGravity * 0.5).epsilon(1e-14));
  CHECK(loads0.Z2 == doctest::Approx(p.mass * kGravity * 0.5).epsilon(1e-14));

  // Braking at Fx = -8000 N moves 800 N onto the front axle.
  auto brake = axle_vertical_loads(make_ctrl(0.0, -8000.0, 0.0), p);
  CHECK(brake.Z1 == doctest::Approx(4724.0).epsilon(1e-12));
  CHECK(brake.Z2 == doctest::Approx(800.0 * 9.81 - 4724.0).epsilon(1e-12));

  std::mt19937 rng(7);
  std::uniform_real_distribution<double> fa(0.0, 15000.0), fb(-15000.0, 0.0);
  for (int i = 0; i < 200; ++i) {
    auto l = axle_vertical_loads(make_ctrl(fa(rng), fb(rng), 0.0), p);
    CHECK(l.Z1 + l.Z2 ==
          doctest::Approx(p.mass * kGravity).epsilon(1e-12));
  }

  // Extreme braking lifts the rear wheel; flagged, not fatal.
  VehicleParams tall = p;
  tall.com_height = 3.0;
  CHECK(axle_vertical_loads(make_ctrl(0.0, -15000.0, 0.0), tall).wheel_lift());
}

TEST_CASE("slip angles") {
  VehicleParams p;
  double a1, a2;
  slip_angles(make_state(30.0, 0.0, 0.0), make_ctrl(0, 0, 0.0), p, a1, a2);
  CHECK(a1 == 0.0);
  CHECK(a2 == 0.0);
  slip_angles(make_state(30.0, 0.0, 0.0), make_ctrl(0, 0, 0.05), p, a1, a2);
  CHECK(a1 == doctest::Approx(0.05));
  CHECK(a2 == 0.0);
  slip_angles(make_state(50.0, 0.5, 0.1), make_ctrl(0, 0, 0.0), p, a1, a2);
  CHECK(a1 == doctest::Approx(-0.012999267740916304).epsilon(1e-14));
  CHECK(a2 == doctest::Approx(-0.006999885670027948).epsilon(1e-14));
  CHECK_THROWS_AS(
      slip_angles(make_state(0.5, 0.0, 0.0), make_ctrl(0, 0, 0), p, a1, a2),
      std::domain_error);
}

TEST_CASE("magic-formula lateral force") {
  VehicleParams p;
  CHECK(axle_lateral_force(0.0, 4000.0, kFront, p) == 0.0);
  for (double a : {0.01, 0.05, 0.2}) {
    CHECK(axle_lateral_force(-a, 4000.0, kRear, p) ==
          doctest::Approx(-axle_lateral_force(a, 4000.0, kRear, p))
              .epsilon(1e-15));
  }
  // B=10, C=1.5, mu_y=1.6, Z=4000, alpha=0.08 -> 6400 sin(1.5 atan(0.8)).
  CHECK(axle_lateral_force(0.08, 4000.0, kFront, p) ==
        doctest::Approx(5426.8987775215155).epsilon(1e-13));
  // Saturation: |Y| <= mu_y Z over a wide sweep.
  for (double a = -1.5; a <= 1.5; a += 0.01) {
    CHECK(std::abs(axle_lateral_force(a, 4000.0, kRear, p)) <=
          1.6 * 4000.0 + 1e-9);
  }
}

TEST_CASE("dynamics: trivial motions") {
  VehicleParams p;
  Vec6d xdot = dynamics(make_state(25.0, 0.0, 0.0), make_ctrl(0, 0, 0), p);
  Vec6d expected;
  expected << 0, 0, 0, 25.0, 0, 0;
  CHECK((xdot - expected).norm() == doctest::Approx(0.0));

  xdot = dynamics(make_state(25.0, 0.0, 0.0), make_ctrl(2000.0, 0.0, 0.0), p);
  CHECK(xdot[kU] == doctest::Approx(2000.0 / p.mass));
  CHECK(xdot[kV] == doctest::Approx(0.0));
}

TEST_CASE("dynamics matches a component-by-component re-derivation") {
  VehicleParams p;
  std::mt19937 rng(21);
  std::uniform_real_distribution<double> uu(5.0, 60.0), uv(-3.0, 3.0),
      ur(-1.5, 1.5), upos(-200.0, 200.0), upsi(-3.1, 3.1), ufa(0.0, 15000.0),
      ufb(-15000.0, 0.0), ud(-0.35, 0.35);
  for (int i = 0; i < 200; ++i) {
    Vec6d x = make_state(uu(rng), uv(rng), ur(rng), upos(rng), upos(rng),
                         upsi(rng));
    Vec3d c = make_ctrl(ufa(rng), ufb(rng), ud(rng));
    Vec6d got = dynamics(x, c, p);

    // Independent re-derivation of the force balance.
    const double kb = p.brake_split_front;
    const double X1 = kb * c[kFxB];
    const double X2 = c[kFxA] + (1.0 - kb) * c[kFxB];
    const double l = p.dist_front + p.dist_rear;
    const double Z1 =
        p.mass * kGravity * p.dist_rear / l - p.com_height / l * (X1 + X2);
    const double Z2 =
        p.mass * kGravity * p.dist_front / l + p.com_height / l * (X1 + X2);
    const double a1 =
        c[kDelta] - std::atan((x[kV] + p.dist_front * x[kR]) / x[kU]);
    const double a2 = -std::atan((x[kV] - p.dist_rear * x[kR]) / x[kU]);
    const double Y1 =
        p.mu_y[0] * Z1 * std::sin(p.pacejka_C[0] * std::atan(p.pacejka_B[0] * a1));
    const double Y2 =
        p.mu_y[1] * Z2 * std::sin(p.pacejka_C[1] * std::atan(p.pacejka_B[1] * a2));
    const double cd = std::cos(c[kDelta]), sd = std::sin(c[kDelta]);
    Vec6d want;
    want[kU] = (X1 * cd - Y1 * sd + X2) / p.mass + x[kV] * x[kR];
    want[kV] = (X1 * sd + Y1 * cd + Y2) / p.mass - x[kU] * x[kR];
    want[kR] =
        (p.dist_front * (X1 * sd + Y1 * cd) - p.dist_rear * Y2) / p.yaw_inertia;
    want[kXG] = x[kU] * std::cos(x[kPsi]) - x[kV] * std::sin(x[kPsi]);
    want[kYG] = x[kU] * std::sin(x[kPsi]) + x[kV] * std::cos(x[kPsi]);
    want[kPsi] = x[kR];
    for (int k = 0; k < kNx; ++k) {
      CHECK(got[k] ==
            doctest::Approx(want[k]).epsilon(1e-12).scale(std::abs(want[k]) + 1.0));
    }
  }
}

TEST_CASE("small-angle switch removes the front-force rotation") {
  VehicleParams p;
  p.small_angle_front_forces = true;
  Vec6d x = make_state(30.0, 0.5, 0.2);
  Vec3d c = make_ctrl(0.0, -4000.0, 0.2);
  Vec6d xdot = dynamics(x, c, p);
  PlanarForces f = planar_forces(x, c, p);
  CHECK(xdot[kU] == doctest::Approx((f.X1 + f.X2) / p.mass + x[kV] * x[kR]));
  CHECK(xdot[kV] == doctest::Approx((f.Y1 + f.Y2) / p.mass - x[kU] * x[kR]));
}

TEST_CASE("AD Jacobians: analytic kinematic rows") {
  VehicleParams p;
  Vec6d x = make_state(35.0, -1.0, 0.4, 10.0, -4.0, 0.6);
  Vec3d c = make_ctrl(3000.0, 0.0, 0.1);
  Mat6d A;
  Mat63d B;
  jacobians(x, c, p, &A, &B);
  CHECK(A(kXG, kU) == doctest::Approx(std::cos(0.6)).epsilon(1e-14));
  CHECK(A(kXG, kV) == doctest::Approx(-std::sin(0.6)).epsilon(1e-14));
  CHECK(A(kPsi, kR) == doctest::Approx(1.0));
  for (int j = 0; j < kNu; ++j) CHECK(B(kPsi, j) == 0.0);
}

TEST_CASE("AD Jacobians agree with central finite differences") {
  VehicleParams p;
  std::mt19937 rng(99);
  std::uniform_real_distribution<double> uu(5.0, 60.0), uv(-3.0, 3.0),
      ur(-1.5, 1.5), upos(-200.0, 200.0), upsi(-3.1, 3.1), ufa(0.0, 15000.0),
      ufb(-15000.0, 0.0), ud(-0.35, 0.35);
  int checked = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    Vec6d x = make_state(uu(rng), uv(rng), ur(rng), upos(rng), upos(rng),
                         upsi(rng));
    Vec3d c = make_ctrl(ufa(rng), ufb(rng), ud(rng));
    Mat6d A;
    Mat63d B;
    jacobians(x, c, p, &A, &B);
    auto check = [&](double ad, double fd) {
      if (std::abs(fd) < 1e-8) {
        CHECK(std::abs(ad - fd) < 1e-6);
      } else {
        CHECK(ad == doctest::Approx(fd).epsilon(1e-6));
      }
      ++checked;
    };
    for (int j = 0; j < kNx; ++j) {
      const double h = 1e-6 * std::max(1.0, std::abs(x[j]));
      Vec6d xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      Vec6d fd = (dynamics(xp, c, p) - dynamics(xm, c, p)) / (2.0 * h);
      for (int i = 0; i < kNx; ++i) check(A(i, j), fd[i]);
    }
    for (int j = 0; j < kNu; ++j) {
      const double h = 1e-6 * std::max(1.0, std::abs(c[j]));
      Vec3d cp = c, cm = c;
      cp[j] += h;
      cm[j] -= h;
      Vec6d fd = (dynamics(x, cp, p) - dynamics(x, cm, p)) / (2.0 * h);
      for (int i = 0; i < kNx; ++i) check(B(i, j), fd[i]);
    }
  }
  CHECK(checked == 1000 * (36 + 18));
}

TEST_CASE("frame invariance: translation leaves body rates unchanged") {
  VehicleParams p;
  Vec6d x = make_state(28.0, 0.7, -0.3, 5.0, 9.0, 1.1);
  Vec6d xs = x;
  xs[kXG] += 137.0;
  xs[kYG] -= 54.0;
  Vec3d c = make_ctrl(1000.0, -500.0, 0.12);
  Vec6d d0 = dynamics(x, c, p);
  Vec6d d1 = dynamics(xs, c, p);
  CHECK(d0[kU] == d1[kU]);
  CHECK(d0[kV] == d1[kV]);
  CHECK(d0[kR] == d1[kR]);
  Mat6d A0, A1;
  jacobians(x, c, p, &A0, static_cast<Mat63d*>(nullptr));
  jacobians(xs, c, p, &A1, static_cast<Mat63d*>(nullptr));
  CHECK((A0 - A1).norm() == doctest::Approx(0.0));
  CHECK(A0.col(kXG).norm() == 0.0);
  CHECK(A0.col(kYG).norm() == 0.0);
}
