#include "laptime/track.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "laptime/errors.hpp"

namespace laptime {

namespace {

constexpr double kPi = 3.14159265358979323846;

double wrap_to_pi(double a) {
  while (a > kPi) a -= 2.0 * kPi;
  while (a < -kPi) a += 2.0 * kPi;
  return a;
}

}  // namespace

TrackModel TrackModel::from_samples(std::vector<TrackSamplePoint> samples,
                                    bool headings_given) {
  if (samples.size() < 2) {
    throw IoError("track: need at least two samples");
  }
  // Canonical arc length from chord sums.
  samples[0].s = 0.0;
  for (size_t i = 1; i < samples.size(); ++i) {
    const double dx = samples[i].x - samples[i - 1].x;
    const double dy = samples[i].y - samples[i - 1].y;
    const double ds = std::hypot(dx, dy);
    if (ds <= 0.0) {
      throw IoError("track: coincident consecutive samples at index " +
                    std::to_string(i));
    }
    samples[i].s = samples[i - 1].s + ds;
  }

  if (!headings_given) {
    // Smoothed central differences: average the chord directions over a
    // 5-point window (clamped at the ends), which filters sampling noise.
    const int n = static_cast<int>(samples.size());
    std::vector<double> heading(n);
    for (int i = 0; i < n; ++i) {
      const int lo = std::max(0, i - 2);
      const int hi = std::min(n - 1, i + 2);
      double tx = 0.0, ty = 0.0;
      for (int j = lo; j < hi; ++j) {
        const double len = samples[j + 1].s - samples[j].s;
        tx += (samples[j + 1].x - samples[j].x) / len;
        ty += (samples[j + 1].y - samples[j].y) / len;
      }
      heading[i] = std::atan2(ty, tx);
    }
    for (int i = 0; i < n; ++i) samples[i].heading = heading[i];
  }

  // Unwrap so linear interpolation across the +-pi seam is safe.
  for (size_t i = 1; i < samples.size(); ++i) {
    const double step = wrap_to_pi(samples[i].heading - samples[i - 1].heading);
    samples[i].heading = samples[i - 1].heading + step;
  }

  TrackModel track;
  track.total_length_ = samples.back().s;
  const int n = static_cast<int>(samples.size());
  track.curvature_.resize(n);
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - 1);
    const int hi = std::min(n - 1, i + 1);
    track.curvature_[i] = (samples[hi].heading - samples[lo].heading) /
                          (samples[hi].s - samples[lo].s);
  }
  track.samples_ = std::move(samples);
  return track;
}

int TrackModel::segment_index(double s) const {
  const auto it = std::upper_bound(
      samples_.begin(), samples_.end(), s,
      [](double value, const TrackSamplePoint& p) { return value < p.s; });
  int idx = static_cast<int>(it - samples_.begin()) - 1;
  idx = std::clamp(idx, 0, static_cast<int>(samples_.size()) - 2);
  return idx;
}

TrackSamplePoint TrackModel::at(double s) const {
  s = std::clamp(s, 0.0, total_length_);
  const int i = segment_index(s);
  const TrackSamplePoint& p = samples_[i];
  const TrackSamplePoint& q = samples_[i + 1];
  const double t = (s - p.s) / (q.s - p.s);
  TrackSamplePoint out;
  out.s = s;
  out.x = p.x + t * (q.x - p.x);
  out.y = p.y + t * (q.y - p.y);
  out.heading = p.heading + t * (q.heading - p.heading);
  out.w_left = p.w_left + t * (q.w_left - p.w_left);
  out.w_right = p.w_right + t * (q.w_right - p.w_right);
  return out;
}

double TrackModel::curvature_at(double s) const {
  s = std::clamp(s, 0.0, total_length_);
  const int i = segment_index(s);
  const TrackSamplePoint& p = samples_[i];
  const TrackSamplePoint& q = samples_[i + 1];
  const double t = (s - p.s) / (q.s - p.s);
  return curvature_[i] + t * (curvature_[i + 1] - curvature_[i]);
}

double TrackModel::project(double x, double y, double hint) const {
  // Sample-level search around the hint, then segment-level refinement.
  // The hint window starts narrow (callers advance the hint step by step)
  // and widens until the minimum lies strictly inside it.
  const int n = static_cast<int>(samples_.size());
  for (double window = 5.0; ; window *= 4.0) {
    const bool full = window >= total_length_;
    const int i_lo =
        full ? 0 : segment_index(std::max(0.0, hint - window));
    const int i_hi = full ? n - 1
                          : std::min(n - 1, segment_index(std::min(
                                                total_length_, hint + window)) +
                                                1);
    double best_d2 = 1e300;
    int best = i_lo;
    for (int i = i_lo; i <= i_hi; ++i) {
      const double dx = samples_[i].x - x;
      const double dy = samples_[i].y - y;
      const double d2 = dx * dx + dy * dy;
      if (d2 < best_d2) {
        best_d2 = d2;
        best = i;
      }
    }
    if (!full && (best == i_lo || best == i_hi)) {
      continue;  // minimum at the window edge: widen and retry
    }
    double best_s = samples_[best].s;
    best_d2 = 1e300;
    for (int i = std::max(0, best - 1); i <= std::min(n - 2, best); ++i) {
      const TrackSamplePoint& p = samples_[i];
      const TrackSamplePoint& q = samples_[i + 1];
      const double ex = q.x - p.x, ey = q.y - p.y;
      const double len2 = ex * ex + ey * ey;
      double t = ((x - p.x) * ex + (y - p.y) * ey) / len2;
      t = std::clamp(t, 0.0, 1.0);
      const double px = p.x + t * ex, py = p.y + t * ey;
      const double d2 = (x - px) * (x - px) + (y - py) * (y - py);
      if (d2 < best_d2) {
        best_d2 = d2;
        best_s = p.s + t * (q.s - p.s);
      }
    }
    return best_s;
  }
}

TrackModel load_track(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("track: cannot open '" + path + "'");
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw IoError("track: '" + path + "' is empty");
  }
  auto fields = [](const std::string& l) {
    std::vector<std::string> out;
    std::stringstream ss(l);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
  };
  const auto header = fields(line);
  const bool with_heading =
      header.size() == 6 && header[3].find("heading") != std::string::npos;
  const size_t expected = with_heading ? 6 : 5;
  if (header.size() != expected || header[0].find('s') == std::string::npos) {
    throw IoError("track: '" + path +
                  "' line 1: expected header s,x,y[,heading],w_left,w_right");
  }

  std::vector<TrackSamplePoint> samples;
  double prev_s = -1e300;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = fields(line);
    if (cells.size() != expected) {
      throw IoError("track: '" + path + "' line " + std::to_string(lineno) +
                    ": expected " + std::to_string(expected) + " fields, got " +
                    std::to_string(cells.size()));
    }
    TrackSamplePoint p;
    try {
      size_t c = 0;
      p.s = std::stod(cells[c++]);
      p.x = std::stod(cells[c++]);
      p.y = std::stod(cells[c++]);
      if (with_heading) p.heading = std::stod(cells[c++]);
      p.w_left = std::stod(cells[c++]);
      p.w_right = std::stod(cells[c]);
    } catch (const std::exception&) {
      throw IoError("track: '" + path + "' line " + std::to_string(lineno) +
                    ": malformed number");
    }
    if (p.s <= prev_s) {
      throw IoError("track: '" + path + "' line " + std::to_string(lineno) +
                    ": arc length not strictly increasing");
    }
    if (p.w_left <= 0.0 || p.w_right <= 0.0) {
      throw IoError("track: '" + path + "' line " + std::to_string(lineno) +
                    ": widths must be positive");
    }
    prev_s = p.s;
    samples.push_back(p);
  }
  return TrackModel::from_samples(std::move(samples), with_heading);
}

void save_track(const TrackModel& track, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw IoError("track: cannot write '" + path + "'");
  }
  out << "s,x,y,heading,w_left,w_right\n";
  char buf[256];
  for (const auto& p : track.samples()) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  p.s, p.x, p.y, p.heading, p.w_left, p.w_right);
    out << buf;
  }
}

TrackNode node_at(const TrackModel& track, int k, int N,
                  const VehicleParams& vehicle) {
  const double s = static_cast<double>(k) * track.total_length() / N;
  const TrackSamplePoint p = track.at(s);
  TrackNode node;
  node.s = s;
  node.c = Vec2d(p.x, p.y);
  node.heading = p.heading;
  node.n = Vec2d(-std::sin(p.heading), std::cos(p.heading));
  node.curvature = track.curvature_at(s);
  const double half_tw = 0.5 * vehicle.track_width;
  node.e_max = p.w_left - half_tw;
  node.e_min = -(p.w_right - half_tw);
  if (node.e_max <= 0.0 || node.e_min >= 0.0) {
    throw ConfigError("track: available width is not positive at s = " +
                      std::to_string(s) + " (track narrower than vehicle)");
  }
  return node;
}

TrackModel make_two_corner_sector(double sample_ds) {
  struct Segment {
    double length;
    double curvature;  // 0 for straights, 1/R signed by turn direction
  };
  const std::vector<Segment> segments = {
      {80.0, 0.0},
      {25.0 * kPi / 2.0, 1.0 / 25.0},    // 90 deg left, R = 25
      {60.0, 0.0},
      {120.0 * 25.0 * kPi / 180.0, -1.0 / 120.0},  // 25 deg right, R = 120
      {60.0, 0.0},
  };
  double total = 0.0;
  for (const auto& seg : segments) total += seg.length;

  std::vector<TrackSamplePoint> samples;
  double x = 0.0, y = 0.0, heading = 0.0, s0 = 0.0;
  auto emit = [&](double s_local, const Segment& seg) {
    TrackSamplePoint p;
    p.s = s0 + s_local;
    if (seg.curvature == 0.0) {
      p.x = x + s_local * std::cos(heading);
      p.y = y + s_local * std::sin(heading);
      p.heading = heading;
    } else {
      const double R = 1.0 / seg.curvature;
      const double dh = s_local * seg.curvature;
      p.x = x + R * (std::sin(heading + dh) - std::sin(heading));
      p.y = y - R * (std::cos(heading + dh) - std::cos(heading));
      p.heading = heading + dh;
    }
    p.w_left = 5.0;
    p.w_right = 5.0;
    samples.push_back(p);
  };
  for (const auto& seg : segments) {
    const int steps = std::max(1, static_cast<int>(seg.length / sample_ds));
    for (int i = 0; i < steps; ++i) emit(seg.length * i / steps, seg);
    // advance the frame to the segment end
    emit(seg.length, seg);
    const TrackSamplePoint& end = samples.back();
    x = end.x;
    y = end.y;
    heading = end.heading;
    s0 = end.s;
    samples.pop_back();  // re-emitted as the next segment's first point
  }
  TrackSamplePoint last;
  last.s = s0;
  last.x = x;
  last.y = y;
  last.heading = heading;
  last.w_left = 5.0;
  last.w_right = 5.0;
  samples.push_back(last);
  // Recompute headings from the sampled polyline so the stored geometry is
  // self-consistent at the straight/arc junctions.
  return TrackModel::from_samples(std::move(samples), /*headings_given=*/false);
}

}  // namespace laptime
