#pragma once

#include <string>
#include <vector>

#include "laptime/types.hpp"
#include "laptime/vehicle.hpp"

namespace laptime {

struct TrackSamplePoint {
  double s = 0.0;        // cumulative arc length, m
  double x = 0.0;        // m
  double y = 0.0;        // m
  double heading = 0.0;  // rad, unwrapped
  double w_left = 0.0;   // m, lateral room left of the centerline
  double w_right = 0.0;  // m, lateral room right of the centerline
};

// One constraint node of the discretized centerline.
struct TrackNode {
  Vec2d c;               // centerline point
  Vec2d n;               // unit normal (-sin h, cos h)
  double heading = 0.0;  // rad
  double curvature = 0.0;  // 1/m, d(heading)/ds
  double s = 0.0;          // m
  double e_min = 0.0;      // m, e_min < 0
  double e_max = 0.0;      // m, e_max > 0
};

// Piecewise-linear centerline parameterized by arc length (equivalently by
// the normalized parameter alpha = s / total_length in [0, 1]).  Immutable
// after construction; safe to share across threads.
class TrackModel {
 public:
  // Canonicalizes the samples: recomputes arc length from chord sums,
  // unwraps or (if absent) reconstructs headings from smoothed central
  // differences, and derives curvature.
  static TrackModel from_samples(std::vector<TrackSamplePoint> samples,
                                 bool headings_given);

  double total_length() const { return total_length_; }
  const std::vector<TrackSamplePoint>& samples() const { return samples_; }

  // Linear interpolation at arc length s (clamped to [0, total_length]).
  TrackSamplePoint at(double s) const;
  double curvature_at(double s) const;

  // Arc length of the closest centerline point to (x, y); `hint` seeds the
  // local search.  Used to recover the lateral offset of simulated states.
  double project(double x, double y, double hint) const;

 private:
  std::vector<TrackSamplePoint> samples_;
  std::vector<double> curvature_;  // per sample
  double total_length_ = 0.0;

  int segment_index(double s) const;
};

// Reads the CSV schema `s,x,y,heading,w_left,w_right` (heading optional).
// Throws IoError with a line number on parse failures and on non-monotone s.
TrackModel load_track(const std::string& path);

// Writes the same CSV schema.
void save_track(const TrackModel& track, const std::string& path);

// Constraint node at s_k = k * total_length / N.
// Throws ConfigError when the track is narrower than the vehicle.
TrackNode node_at(const TrackModel& track, int k, int N,
                  const VehicleParams& vehicle);

// Bundled synthetic sector: a low-speed corner (R = 25 m, 90 deg left) and a
// high-speed corner (R = 120 m, 25 deg right) joined by straights,
// about 300 m total, 10 m wide.
TrackModel make_two_corner_sector(double sample_ds = 0.05);

}  // namespace laptime
