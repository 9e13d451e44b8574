#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "laptime/errors.hpp"
#include "laptime/track.hpp"

using namespace laptime;

namespace {

std::string temp_csv(const std::string& name, const std::string& body) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream out(path);
  out << body;
  return path.string();
}

}  // namespace

TEST_CASE("straight 100 m track: length and recomputed headings") {
  std::string body = "s,x,y,w_left,w_right\n";
  for (int i = 0; i <= 10; ++i) {
    char line[128];
    std::snprintf(line, sizeof(line), "%d,%d,0,5,5\n", 10 * i, 10 * i);
    body += line;
  }
  TrackModel track = load_track(temp_csv("straight.csv", body));
  CHECK(track.total_length() == doctest::Approx(100.0).epsilon(1e-14));
  for (const auto& p : track.samples()) {
    CHECK(p.heading == doctest::Approx(0.0));
  }
}

TEST_CASE("circle sampled at 1 degree: chord-length circumference") {
  const double R = 40.0;
  std::string body = "s,x,y,heading,w_left,w_right\n";
  for (int i = 0; i <= 360; ++i) {
    const double th = i * M_PI / 180.0;
    char line[256];
    std::snprintf(line, sizeof(line), "%.17g,%.17g,%.17g,%.17g,4,4\n", R * th,
                  R * std::sin(th), R * (1.0 - std::cos(th)), th);
    body += line;
  }
  TrackModel track = load_track(temp_csv("circle.csv", body));
  CHECK(track.total_length() ==
        doctest::Approx(2.0 * M_PI * R).epsilon(2e-4));
}

TEST_CASE("duplicated arc length row is a monotonicity error") {
  const std::string body =
      "s,x,y,w_left,w_right\n0,0,0,5,5\n10,10,0,5,5\n10,20,0,5,5\n";
  CHECK_THROWS_AS(load_track(temp_csv("dup.csv", body)), IoError);
}

TEST_CASE("malformed rows carry line numbers") {
  const std::string body = "s,x,y,w_left,w_right\n0,0,0,5,5\n10,oops,0,5,5\n";
  try {
    load_track(temp_csv("bad.csv", body));
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("node_at on a straight track") {
  std::string body = "s,x,y,w_left,w_right\n";
  for (int i = 0; i <= 10; ++i) {
    char line[128];
    std::snprintf(line, sizeof(line), "%d,%d,0,5,5\n", 10 * i, 10 * i);
    body += line;
  }
  TrackModel track = load_track(temp_csv("straight2.csv", body));
  VehicleParams vehicle;  // t_w = 1.6
  TrackNode node = node_at(track, 3, 10, vehicle);
  CHECK(node.n.x() == doctest::Approx(0.0));
  CHECK(node.n.y() == doctest::Approx(1.0));
  CHECK(node.e_max == doctest::Approx(4.2));
  CHECK(node.e_min == doctest::Approx(-4.2));
  CHECK(node.c.x() == doctest::Approx(30.0));

  VehicleParams wide = vehicle;
  wide.track_width = 10.5;
  CHECK_THROWS_AS(node_at(track, 3, 10, wide), ConfigError);
}

TEST_CASE("quarter-circle: normals are radial and unit") {
  const double R = 30.0;
  std::string body = "s,x,y,heading,w_left,w_right\n";
  for (int i = 0; i <= 90; ++i) {
    const double th = i * M_PI / 180.0;
    char line[256];
    std::snprintf(line, sizeof(line), "%.17g,%.17g,%.17g,%.17g,5,5\n", R * th,
                  R * std::sin(th), R * (1.0 - std::cos(th)), th);
    body += line;
  }
  TrackModel track = load_track(temp_csv("quarter.csv", body));
  VehicleParams vehicle;
  // Node at the 45-degree arc point.
  TrackNode node = node_at(track, 1, 2, vehicle);
  CHECK(node.n.norm() == doctest::Approx(1.0).epsilon(1e-12));
  // Center of the circle is (0, R): inward radial = (center - c)/R.
  Vec2d inward = (Vec2d(0.0, R) - node.c).normalized();
  CHECK(std::abs(node.n.dot(inward)) == doctest::Approx(1.0).epsilon(1e-4));

  // Normal orthogonal to the interpolated tangent at every node.
  for (int k = 0; k <= 30; ++k) {
    TrackNode nk = node_at(track, k, 30, vehicle);
    Vec2d tangent(std::cos(nk.heading), std::sin(nk.heading));
    CHECK(nk.n.norm() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(nk.n.dot(tangent)) < 1e-12);
  }
}

TEST_CASE("bundled sector: geometry, widths, and heading consistency") {
  TrackModel track = make_two_corner_sector();
  const double expected =
      80.0 + 25.0 * M_PI / 2.0 + 60.0 + 120.0 * 25.0 * M_PI / 180.0 + 60.0;
  CHECK(track.total_length() == doctest::Approx(expected).epsilon(1e-4));

  // Curvatures of both corners appear with the right signs.
  CHECK(track.curvature_at(100.0) == doctest::Approx(1.0 / 25.0).epsilon(1e-2));
  CHECK(track.curvature_at(195.0) ==
        doctest::Approx(-1.0 / 120.0).epsilon(1e-2));

  // Stored headings match finite-difference chord directions within 1e-3.
  const auto& pts = track.samples();
  for (size_t i = 1; i + 1 < pts.size(); ++i) {
    const double fd = std::atan2(pts[i + 1].y - pts[i - 1].y,
                                 pts[i + 1].x - pts[i - 1].x);
    double diff = std::fmod(pts[i].heading - fd + 3.0 * M_PI, 2.0 * M_PI) - M_PI;
    CHECK(std::abs(diff) < 1e-3);
  }
}

TEST_CASE("resampling at N and 2N coincides on even indices") {
  TrackModel track = make_two_corner_sector();
  VehicleParams vehicle;
  const int N = 35;
  for (int k = 0; k <= N; ++k) {
    TrackNode a = node_at(track, k, N, vehicle);
    TrackNode b = node_at(track, 2 * k, 2 * N, vehicle);
    CHECK((a.c - b.c).norm() < 1e-9);
    CHECK(std::abs(a.heading - b.heading) < 1e-9);
  }
}

TEST_CASE("save/load round trip preserves geometry") {
  TrackModel track = make_two_corner_sector(2.0);
  const auto path =
      (std::filesystem::temp_directory_path() / "sector_rt.csv").string();
  save_track(track, path);
  TrackModel back = load_track(path);
  CHECK(back.total_length() ==
        doctest::Approx(track.total_length()).epsilon(1e-12));
  REQUIRE(back.samples().size() == track.samples().size());
  for (size_t i = 0; i < back.samples().size(); ++i) {
    CHECK(back.samples()[i].x == track.samples()[i].x);
    CHECK(back.samples()[i].y == track.samples()[i].y);
  }
}

TEST_CASE("projection recovers arc length near the centerline") {
  TrackModel track = make_two_corner_sector();
  for (double s : {5.0, 90.0, 150.0, 200.0, 280.0}) {
    TrackSamplePoint p = track.at(s);
    // Offset laterally by 2 m; the projected arc length moves only by the
    // linearization error of the polyline.
    const double nx = -std::sin(p.heading), ny = std::cos(p.heading);
    const double got = track.project(p.x + 2.0 * nx, p.y + 2.0 * ny, s - 8.0);
    CHECK(got == doctest::Approx(s).epsilon(0.01));
  }
}
