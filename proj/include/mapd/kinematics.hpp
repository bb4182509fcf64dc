#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "mapd/grid_model.hpp"

namespace mapd {

inline constexpr double kTimeEps = 1e-9;
inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct AgentKinematics {
  double radius = 0.35;
  double v_free = 1.0;
  double v_task = 1.0;
  double v_rot = std::numbers::pi / 2.0;

  void validate(double cell_size) const {
    if (!(radius > 0.0) || radius > cell_size / 2.0 + 1e-12)
      throw std::domain_error("agent radius must lie in (0, L/2]");
    if (!(v_free > 0.0) || !(v_task > 0.0) || !(v_rot > 0.0))
      throw std::domain_error("velocities must be strictly positive");
    if (v_task > v_free) throw std::domain_error("task velocity exceeds free velocity");
  }
};

// A configuration together with the body radius and the translational
// velocity its owner uses to cross the cell boundary.
struct TimedConfiguration {
  Configuration cfg;
  double radius = 0.0;
  double v_trans = 0.0;
  friend bool operator==(const TimedConfiguration&, const TimedConfiguration&) = default;
};

using OptionalTimedConfiguration = std::optional<TimedConfiguration>;

// Minimum time between `departing` leaving the shared cell and `arriving`
// reaching its center. Zero when either side is absent.
inline double offset(const OptionalTimedConfiguration& departing, const OptionalTimedConfiguration& arriving,
                     double cell_size) {
  if (!departing || !arriving) return 0.0;
  const double v1 = departing->v_trans;
  const double v2 = arriving->v_trans;
  if (!(v1 > 0.0) || !(v2 > 0.0)) throw std::domain_error("offset requires positive velocities");
  const double r = departing->radius + arriving->radius;
  const Orientation o1 = departing->cfg.orientation;
  const Orientation o2 = arriving->cfg.orientation;
  if (o1 == o2) return r / std::min(v1, v2);
  if (orthogonal(o1, o2)) return r * std::sqrt(v1 * v1 + v2 * v2) / (v1 * v2);
  return cell_size / v1 + cell_size / v2;
}

inline double turn_duration(Orientation from, Orientation to, double v_rot) {
  return quarter_turns(from, to) * (std::numbers::pi / 2.0) / v_rot;
}

struct Segment {
  enum class Kind : std::uint8_t { Turn, Wait, Move };
  Kind kind = Kind::Wait;
  CellId from = 0;
  CellId to = 0;  // equals `from` for Turn and Wait
  double start = 0.0;
  double end = 0.0;
  Orientation from_orientation = Orientation::North;
  Orientation orientation = Orientation::North;  // heading at the end of the segment

  double duration() const { return end - start; }

  friend bool operator==(const Segment&, const Segment&) = default;
};

inline const char* to_string(Segment::Kind k) {
  switch (k) {
    case Segment::Kind::Turn: return "turn";
    case Segment::Kind::Wait: return "wait";
    default: return "move";
  }
}

// Chronological turn/wait/move primitives starting at `start` at `start_t`.
// After the last segment the agent parks at end_configuration() forever.
class TimedPath {
 public:
  TimedPath() = default;
  TimedPath(Configuration start, double start_t) : start_(start), start_t_(start_t) {}

  const Configuration& start() const { return start_; }
  double start_time() const { return start_t_; }
  const std::vector<Segment>& segments() const { return segments_; }
  bool empty() const { return segments_.empty(); }

  double end_time() const { return segments_.empty() ? start_t_ : segments_.back().end; }
  Configuration end_configuration() const {
    if (segments_.empty()) return start_;
    const Segment& s = segments_.back();
    return {s.to, s.orientation};
  }

  void turn(Orientation to, double duration) {
    const Configuration c = end_configuration();
    const double t = end_time();
    segments_.push_back({Segment::Kind::Turn, c.cell, c.cell, t, t + duration, c.orientation, to});
  }
  void wait_until(double t_end) {
    const Configuration c = end_configuration();
    const double t = end_time();
    segments_.push_back({Segment::Kind::Wait, c.cell, c.cell, t, t_end, c.orientation, c.orientation});
  }
  void move(CellId to, double duration) {
    const Configuration c = end_configuration();
    const double t = end_time();
    segments_.push_back({Segment::Kind::Move, c.cell, to, t, t + duration, c.orientation, c.orientation});
  }
  void push(const Segment& s) { segments_.push_back(s); }

  // Appends `next`, bridging any gap with a wait. `next` must start where
  // this path ends.
  void append(const TimedPath& next) {
    const Configuration here = end_configuration();
    if (next.start().cell != here.cell) throw std::domain_error("appended path starts elsewhere");
    if (next.start_time() < end_time() - kTimeEps) throw std::domain_error("appended path starts in the past");
    if (next.start_time() > end_time() + kTimeEps) wait_until(next.start_time());
    if (next.start().orientation != end_configuration().orientation) {
      throw std::domain_error("appended path starts with a different orientation");
    }
    segments_.insert(segments_.end(), next.segments().begin(), next.segments().end());
  }

  friend bool operator==(const TimedPath&, const TimedPath&) = default;

 private:
  Configuration start_;
  double start_t_ = 0.0;
  std::vector<Segment> segments_;
};

// Structural validation of a path against a map and kinematic envelope.
inline void validate_path(const TimedPath& path, const GridMap& map, double v_rot) {
  Configuration cur = path.start();
  double t = path.start_time();
  for (const Segment& s : path.segments()) {
    if (std::abs(s.start - t) > 1e-6) throw std::domain_error("segments are not contiguous");
    if (s.end < s.start - kTimeEps) throw std::domain_error("segment ends before it starts");
    if (s.from != cur.cell) throw std::domain_error("segment starts at the wrong cell");
    switch (s.kind) {
      case Segment::Kind::Turn:
        if (s.from_orientation != cur.orientation || s.to != s.from)
          throw std::domain_error("malformed turn");
        if (std::abs(s.duration() - turn_duration(s.from_orientation, s.orientation, v_rot)) > 1e-6)
          throw std::domain_error("turn duration does not match rotational velocity");
        break;
      case Segment::Kind::Wait:
        if (s.to != s.from || s.orientation != cur.orientation) throw std::domain_error("malformed wait");
        break;
      case Segment::Kind::Move: {
        auto n = map.step(s.from, s.orientation);
        if (s.orientation != cur.orientation || !n || *n != s.to)
          throw std::domain_error("move does not follow the heading to an adjacent cell");
        if (!(s.duration() > 0.0)) throw std::domain_error("move must take positive time");
        break;
      }
    }
    cur = {s.to, s.orientation};
    t = s.end;
  }
}

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;  // compass heading: North 0, East pi/2, South pi, West 3pi/2
};

inline double heading(Orientation o) { return static_cast<int>(o) * (std::numbers::pi / 2.0); }

inline Pose cell_pose(CellId c, Orientation o, int map_width, double cell_size) {
  return {static_cast<double>(c % map_width) * cell_size, static_cast<double>(c / map_width) * cell_size,
          heading(o)};
}

inline Pose segment_pose(const Segment& s, double t, int map_width, double cell_size) {
  const double span = s.end - s.start;
  const double frac = span > 0.0 ? std::clamp((t - s.start) / span, 0.0, 1.0) : 1.0;
  Pose a = cell_pose(s.from, s.from_orientation, map_width, cell_size);
  switch (s.kind) {
    case Segment::Kind::Wait: return a;
    case Segment::Kind::Turn: {
      const int d = (static_cast<int>(s.orientation) - static_cast<int>(s.from_orientation) + 4) % 4;
      const double delta = (d == 3 ? -1.0 : static_cast<double>(d)) * (std::numbers::pi / 2.0);
      a.theta = std::fmod(a.theta + delta * frac + 2.0 * std::numbers::pi, 2.0 * std::numbers::pi);
      return a;
    }
    case Segment::Kind::Move: {
      const Pose b = cell_pose(s.to, s.orientation, map_width, cell_size);
      return {a.x + (b.x - a.x) * frac, a.y + (b.y - a.y) * frac, heading(s.orientation)};
    }
  }
  return a;
}

// Continuous pose along `path` on a map `map_width` cells wide.
inline Pose pose_at(const TimedPath& path, double t, int map_width, double cell_size) {
  if (t < path.start_time() - kTimeEps) throw std::domain_error("pose requested before path start");
  const auto& segs = path.segments();
  auto it = std::upper_bound(segs.begin(), segs.end(), t, [](double v, const Segment& s) { return v < s.end; });
  if (it == segs.end()) {
    const Configuration c = path.end_configuration();
    return cell_pose(c.cell, c.orientation, map_width, cell_size);
  }
  return segment_pose(*it, t, map_width, cell_size);
}

struct AgentTrajectory {
  TimedPath path;
  double radius = 0.0;
};

struct CollisionViolation {
  double t = 0.0;
  std::size_t agent_a = 0;
  std::size_t agent_b = 0;
  double distance = 0.0;
  double required = 0.0;
};

struct CollisionReport {
  std::vector<CollisionViolation> violations;  // capped at `max_recorded`
  std::size_t total = 0;
  std::size_t samples = 0;
  bool empty() const { return total == 0; }
};

namespace detail {

// Monotone-time pose evaluation along one path.
class PathCursor {
 public:
  PathCursor(const TimedPath& path, int map_width, double cell_size)
      : path_(&path), width_(map_width), cell_(cell_size) {}

  Pose at(double t) {
    const auto& segs = path_->segments();
    if (t <= path_->start_time() || segs.empty()) {
      const Configuration c = segs.empty() ? path_->end_configuration() : path_->start();
      return cell_pose(c.cell, c.orientation, width_, cell_);
    }
    while (index_ < segs.size() && segs[index_].end <= t) ++index_;
    if (index_ == segs.size()) {
      const Configuration c = path_->end_configuration();
      return cell_pose(c.cell, c.orientation, width_, cell_);
    }
    return segment_pose(segs[index_], t, width_, cell_);
  }

 private:
  const TimedPath* path_;
  int width_;
  double cell_;
  std::size_t index_ = 0;
};

}  // namespace detail

struct CollisionCheckOptions {
  double dt = 0.01;
  double clearance_tolerance = 1e-6;
  double tail_window = 1.0;  // seconds sampled past the last path end
  std::size_t max_recorded = 1000;
};

// Sampled disk-overlap check over all agent pairs. Agents before their path
// start are held at their start pose.
inline CollisionReport check_collision_free(const std::vector<AgentTrajectory>& agents, int map_width,
                                            double cell_size, const CollisionCheckOptions& opt = {}) {
  if (!(opt.dt > 0.0)) throw std::domain_error("sampling step must be positive");
  CollisionReport report;
  if (agents.size() < 2) return report;

  double t0 = kInf, horizon = -kInf, max_radius = 0.0;
  int max_x = 0, max_y = 0;
  for (const auto& a : agents) {
    t0 = std::min(t0, a.path.start_time());
    horizon = std::max(horizon, a.path.end_time());
    max_radius = std::max(max_radius, a.radius);
    auto touch = [&](CellId c) {
      max_x = std::max(max_x, c % map_width);
      max_y = std::max(max_y, c / map_width);
    };
    touch(a.path.start().cell);
    for (const auto& s : a.path.segments()) touch(s.to);
  }
  horizon += opt.tail_window;

  // Uniform bucket grid; any overlapping pair lies in neighboring buckets.
  const double bucket = std::max(cell_size, 2.0 * max_radius);
  const int nbx = static_cast<int>(std::floor(max_x * cell_size / bucket)) + 3;
  const int nby = static_cast<int>(std::floor(max_y * cell_size / bucket)) + 3;
  std::vector<int> head(static_cast<std::size_t>(nbx) * nby, -1);
  std::vector<int> next(agents.size(), -1);
  std::vector<int> bucket_of(agents.size(), 0);
  std::vector<Pose> pose(agents.size());
  std::vector<detail::PathCursor> cursors;
  cursors.reserve(agents.size());
  for (const auto& a : agents) cursors.emplace_back(a.path, map_width, cell_size);

  const auto steps = static_cast<std::size_t>(std::ceil((horizon - t0) / opt.dt));
  for (std::size_t k = 0; k <= steps; ++k) {
    const double t = t0 + static_cast<double>(k) * opt.dt;
    ++report.samples;
    for (std::size_t i = 0; i < agents.size(); ++i) {
      pose[i] = cursors[i].at(t);
      const int bx = static_cast<int>(std::floor(pose[i].x / bucket + 0.5)) + 1;
      const int by = static_cast<int>(std::floor(pose[i].y / bucket + 0.5)) + 1;
      bucket_of[i] = by * nbx + bx;
      next[i] = head[bucket_of[i]];
      head[bucket_of[i]] = static_cast<int>(i);
    }
    for (std::size_t i = 0; i < agents.size(); ++i) {
      const int b = bucket_of[i];
      for (int oy = -1; oy <= 1; ++oy) {
        for (int ox = -1; ox <= 1; ++ox) {
          const int nb = b + oy * nbx + ox;
          if (nb < 0 || nb >= static_cast<int>(head.size())) continue;
          for (int j = head[nb]; j >= 0; j = next[j]) {
            if (static_cast<std::size_t>(j) <= i) continue;
            const double ddx = pose[i].x - pose[j].x, ddy = pose[i].y - pose[j].y;
            const double dist = std::sqrt(ddx * ddx + ddy * ddy);
            const double required = agents[i].radius + agents[j].radius;
            if (dist < required - opt.clearance_tolerance) {
              ++report.total;
              if (report.violations.size() < opt.max_recorded)
                report.violations.push_back({t, i, static_cast<std::size_t>(j), dist, required});
            }
          }
        }
      }
    }
    for (std::size_t i = 0; i < agents.size(); ++i) head[bucket_of[i]] = -1;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Numeric reference for the offset closed forms.
//
// Agent 2 leaves the neighbor cell at t = 0 and reaches the shared cell at
// t' = L / v2; agent 1 rests at the shared cell center until t_d and then
// leaves at v1. The reference offset is t' minus the largest t_d for which
// the center distance never drops below R1 + R2 on [0, t'].

enum class OffsetCase : std::uint8_t { SameDirection, Orthogonal };

namespace detail {

inline double separation(OffsetCase c, double t, double t_d, double v1, double v2, double cell_size) {
  const double along = v1 * std::max(0.0, t - t_d);
  const double approach = cell_size - v2 * t;
  if (c == OffsetCase::SameDirection) return approach + along;
  return std::hypot(along, approach);
}

// Dense scan followed by golden-section refinement; the separation is
// unimodal in t for both cases.
inline double min_separation(OffsetCase c, double t_d, double v1, double v2, double cell_size) {
  const double t_end = cell_size / v2;
  constexpr int kGrid = 128;
  int best = 0;
  double best_value = kInf;
  for (int k = 0; k <= kGrid; ++k) {
    const double t = t_end * k / kGrid;
    const double v = separation(c, t, t_d, v1, v2, cell_size);
    if (v < best_value) {
      best_value = v;
      best = k;
    }
  }
  double lo = t_end * std::max(0, best - 1) / kGrid;
  double hi = t_end * std::min(kGrid, best + 1) / kGrid;
  const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = hi - ratio * (hi - lo), b = lo + ratio * (hi - lo);
  double fa = separation(c, a, t_d, v1, v2, cell_size), fb = separation(c, b, t_d, v1, v2, cell_size);
  for (int it = 0; it < 80; ++it) {
    if (fa < fb) {
      hi = b; b = a; fb = fa;
      a = hi - ratio * (hi - lo);
      fa = separation(c, a, t_d, v1, v2, cell_size);
    } else {
      lo = a; a = b; fa = fb;
      b = lo + ratio * (hi - lo);
      fb = separation(c, b, t_d, v1, v2, cell_size);
    }
  }
  return std::min({best_value, fa, fb});
}

}  // namespace detail

inline double numeric_offset(OffsetCase c, double r1, double r2, double v1, double v2, double cell_size) {
  const double required = r1 + r2;
  const double t_arrive = cell_size / v2;
  double lo = t_arrive - 4.0 * (cell_size + required) / std::min(v1, v2) - 1.0;  // always safe
  double hi = t_arrive;                                                              // never safe
  for (int it = 0; it < 200 && hi - lo > 1e-13; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (detail::min_separation(c, mid, v1, v2, cell_size) >= required) lo = mid;
    else hi = mid;
  }
  return t_arrive - lo;
}

struct OffsetVerificationReport {
  std::size_t trials = 0;
  double max_discrepancy_same = 0.0;
  double max_discrepancy_orthogonal = 0.0;
  double max_discrepancy() const { return std::max(max_discrepancy_same, max_discrepancy_orthogonal); }
};

struct OffsetDrawRanges {
  double radius_min = 0.05, radius_max = 0.5;
  double velocity_min = 0.1, velocity_max = 2.0;
  double cell_min = 0.5, cell_max = 2.0;
};

// Compares the closed forms against numeric_offset on random draws. Draws
// violating R <= L/2 are rejected and redrawn.
inline OffsetVerificationReport verify_offset_formulas(std::size_t trials, std::uint64_t seed,
                                                       const OffsetDrawRanges& ranges = {}) {
  if (trials == 0) throw std::domain_error("at least one trial required");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> radius(ranges.radius_min, ranges.radius_max);
  std::uniform_real_distribution<double> velocity(ranges.velocity_min, ranges.velocity_max);
  std::uniform_real_distribution<double> cell(ranges.cell_min, ranges.cell_max);

  OffsetVerificationReport report;
  while (report.trials < trials) {
    const double r1 = radius(rng), r2 = radius(rng), v1 = velocity(rng), v2 = velocity(rng), l = cell(rng);
    if (r1 > l / 2.0 || r2 > l / 2.0) continue;
    const TimedConfiguration dep{{0, Orientation::East}, r1, v1};
    const TimedConfiguration same{{0, Orientation::East}, r2, v2};
    const TimedConfiguration orth{{0, Orientation::North}, r2, v2};
    report.max_discrepancy_same =
        std::max(report.max_discrepancy_same,
                 std::abs(offset(dep, same, l) - numeric_offset(OffsetCase::SameDirection, r1, r2, v1, v2, l)));
    report.max_discrepancy_orthogonal =
        std::max(report.max_discrepancy_orthogonal,
                 std::abs(offset(dep, orth, l) - numeric_offset(OffsetCase::Orthogonal, r1, r2, v1, v2, l)));
    ++report.trials;
  }
  return report;
}

}  // namespace mapd
