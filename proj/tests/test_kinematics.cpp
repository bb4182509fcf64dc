#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "mapd/kinematics.hpp"

using namespace mapd;

namespace {

TimedConfiguration tc(Orientation o, double r, double v) { return {{0, o}, r, v}; }

double angle_diff(double a, double b) {
  const double d = std::fmod(std::abs(a - b), 2.0 * std::numbers::pi);
  return std::min(d, 2.0 * std::numbers::pi - d);
}

}  // namespace

TEST(Offset, ZeroWhenEitherSideAbsent) {
  EXPECT_EQ(offset(std::nullopt, tc(Orientation::East, 0.35, 1.0), 1.0), 0.0);
  EXPECT_EQ(offset(tc(Orientation::East, 0.35, 1.0), std::nullopt, 1.0), 0.0);
  EXPECT_EQ(offset(std::nullopt, std::nullopt, 1.0), 0.0);
}

TEST(Offset, SameDirection) {
  EXPECT_NEAR(offset(tc(Orientation::East, 0.35, 1.0), tc(Orientation::East, 0.35, 1.0), 1.0), 0.70, 1e-12);
  EXPECT_NEAR(offset(tc(Orientation::East, 0.35, 0.5), tc(Orientation::East, 0.35, 2.0), 1.0), 1.40, 1e-12);
}

TEST(Offset, Orthogonal) {
  EXPECT_NEAR(offset(tc(Orientation::East, 0.35, 1.0), tc(Orientation::North, 0.35, 1.0), 1.0),
              0.7 * std::sqrt(2.0), 1e-12);
}

TEST(Offset, Opposite) {
  EXPECT_NEAR(offset(tc(Orientation::East, 0.35, 1.0), tc(Orientation::West, 0.35, 1.0), 1.0), 2.0, 1e-12);
  EXPECT_NEAR(offset(tc(Orientation::North, 0.2, 0.5), tc(Orientation::South, 0.2, 2.0), 1.5), 3.75, 1e-12);
}

TEST(Offset, NonPositiveVelocityIsDomainError) {
  EXPECT_THROW(offset(tc(Orientation::East, 0.35, 0.0), tc(Orientation::East, 0.35, 1.0), 1.0), std::domain_error);
  EXPECT_THROW(offset(tc(Orientation::East, 0.35, 1.0), tc(Orientation::North, 0.35, -1.0), 1.0),
               std::domain_error);
}

TEST(Offset, NumericReferenceMatchesKnownValues) {
  EXPECT_NEAR(numeric_offset(OffsetCase::SameDirection, 0.35, 0.35, 1.0, 1.0, 1.0), 0.70, 1e-9);
  EXPECT_NEAR(numeric_offset(OffsetCase::Orthogonal, 0.35, 0.35, 1.0, 1.0, 1.0), 0.7 * std::sqrt(2.0), 1e-9);
}

TEST(Offset, ClosedFormsMatchNumericReference) {
  const auto report = verify_offset_formulas(500, 7);
  EXPECT_EQ(report.trials, 500u);
  EXPECT_LE(report.max_discrepancy_same, 1e-6);
  EXPECT_LE(report.max_discrepancy_orthogonal, 1e-6);
}

TEST(Offset, EqualVelocitiesAgreeAcrossSubcases) {
  for (double v : {0.3, 1.0, 1.7}) {
    EXPECT_NEAR(numeric_offset(OffsetCase::SameDirection, 0.3, 0.2, v, v, 1.0), 0.5 / v, 1e-7);
  }
}

TEST(Offset, NonNegativeAndZeroOnlyForAbsentSide) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> r(0.05, 0.5), v(0.1, 2.0);
  for (int k = 0; k < 1000; ++k) {
    const auto a = tc(static_cast<Orientation>(k % 4), r(rng), v(rng));
    const auto b = tc(static_cast<Orientation>((k / 4) % 4), r(rng), v(rng));
    EXPECT_GT(offset(a, b, 1.0), 0.0);
  }
}

TEST(Offset, RejectsZeroTrials) { EXPECT_THROW(verify_offset_formulas(0, 1), std::domain_error); }

TEST(TimedPath, BuildersAndEndState) {
  const GridMap m(3, 3, 1.0);
  TimedPath p({m.id(0, 0), Orientation::North}, 2.0);
  EXPECT_TRUE(p.empty());
  EXPECT_EQ(p.end_time(), 2.0);
  p.turn(Orientation::East, 1.0);
  p.wait_until(4.0);
  p.move(m.id(1, 0), 1.0);
  EXPECT_EQ(p.end_time(), 5.0);
  EXPECT_EQ(p.end_configuration(), (Configuration{m.id(1, 0), Orientation::East}));
  EXPECT_NO_THROW(validate_path(p, m, std::numbers::pi / 2.0));
  EXPECT_STREQ(to_string(p.segments()[0].kind), "turn");
  EXPECT_STREQ(to_string(p.segments()[1].kind), "wait");
  EXPECT_STREQ(to_string(p.segments()[2].kind), "move");
}

TEST(TimedPath, ValidationRejectsMalformedPaths) {
  const GridMap m(3, 3, 1.0);
  const double v_rot = std::numbers::pi / 2.0;
  TimedPath sideways({m.id(0, 0), Orientation::North}, 0.0);
  sideways.move(m.id(1, 0), 1.0);
  EXPECT_THROW(validate_path(sideways, m, v_rot), std::domain_error);
  TimedPath fast_turn({m.id(0, 0), Orientation::North}, 0.0);
  fast_turn.turn(Orientation::East, 0.5);
  EXPECT_THROW(validate_path(fast_turn, m, v_rot), std::domain_error);
  TimedPath gap({m.id(0, 0), Orientation::East}, 0.0);
  gap.push({Segment::Kind::Move, m.id(0, 0), m.id(1, 0), 1.0, 2.0, Orientation::East, Orientation::East});
  EXPECT_THROW(validate_path(gap, m, v_rot), std::domain_error);
}

TEST(TimedPath, AppendBridgesGapWithWait) {
  TimedPath a({0, Orientation::East}, 0.0);
  a.move(1, 1.0);
  TimedPath b({1, Orientation::East}, 3.0);
  b.move(2, 1.0);
  a.append(b);
  ASSERT_EQ(a.segments().size(), 3u);
  EXPECT_EQ(a.segments()[1].kind, Segment::Kind::Wait);
  EXPECT_EQ(a.end_time(), 4.0);
  TimedPath elsewhere({5, Orientation::East}, 5.0);
  EXPECT_THROW(a.append(elsewhere), std::domain_error);
}

TEST(PoseAt, MoveMidpoint) {
  TimedPath p({0, Orientation::East}, 0.0);
  p.move(1, 1.0);
  const Pose q = pose_at(p, 0.5, 4, 1.0);
  EXPECT_NEAR(q.x, 0.5, 1e-12);
  EXPECT_NEAR(q.y, 0.0, 1e-12);
}

TEST(PoseAt, ParkedLongAfterEnd) {
  TimedPath p({0, Orientation::East}, 0.0);
  p.move(1, 1.0);
  const Pose q = pose_at(p, 101.0, 4, 2.0);
  EXPECT_NEAR(q.x, 2.0, 1e-12);
  EXPECT_NEAR(q.y, 0.0, 1e-12);
}

TEST(PoseAt, TurnEndsFacingEast) {
  TimedPath p({0, Orientation::North}, 0.0);
  p.turn(Orientation::East, 1.0);
  EXPECT_NEAR(angle_diff(pose_at(p, 1.0, 4, 1.0).theta, heading(Orientation::East)), 0.0, 1e-12);
  EXPECT_NEAR(angle_diff(pose_at(p, 0.5, 4, 1.0).theta, std::numbers::pi / 4.0), 0.0, 1e-12);
  TimedPath ccw({0, Orientation::North}, 0.0);
  ccw.turn(Orientation::West, 1.0);
  EXPECT_NEAR(angle_diff(pose_at(ccw, 0.5, 4, 1.0).theta, 7.0 * std::numbers::pi / 4.0), 0.0, 1e-12);
}

TEST(PoseAt, BeforeStartIsDomainError) {
  TimedPath p({0, Orientation::North}, 3.0);
  EXPECT_THROW(pose_at(p, 2.0, 4, 1.0), std::domain_error);
}

TEST(PoseAt, ContinuousAtSegmentBoundaries) {
  const GridMap m(4, 4, 1.0);
  TimedPath p({m.id(0, 0), Orientation::North}, 0.0);
  p.turn(Orientation::East, 1.0);
  p.move(m.id(1, 0), 1.0);
  p.wait_until(3.5);
  p.turn(Orientation::West, 2.0);
  p.turn(Orientation::South, 1.0);
  p.move(m.id(1, 1), 2.0);
  for (const Segment& s : p.segments()) {
    for (double t : {s.start, s.end}) {
      const Pose a = pose_at(p, std::max(0.0, t - 1e-6), m.width(), 1.0);
      const Pose b = pose_at(p, t + 1e-6, m.width(), 1.0);
      EXPECT_LT(std::hypot(a.x - b.x, a.y - b.y), 1e-5);
      EXPECT_LT(angle_diff(a.theta, b.theta), 1e-5);
    }
  }
}

TEST(PoseAt, EveryMoveCoversOneCell) {
  const double l = 1.25;
  TimedPath p({0, Orientation::East}, 0.0);
  p.move(1, 0.7);
  p.move(2, 2.0);
  for (const Segment& s : p.segments()) {
    const Pose a = pose_at(p, s.start, 5, l);
    const Pose b = pose_at(p, s.end, 5, l);
    EXPECT_NEAR(std::hypot(a.x - b.x, a.y - b.y), l, 1e-12);
  }
}

TEST(CollisionCheck, SeparatedParkedAgents) {
  std::vector<AgentTrajectory> agents{{TimedPath({0, Orientation::North}, 0.0), 0.35},
                                      {TimedPath({3, Orientation::North}, 0.0), 0.35}};
  EXPECT_TRUE(check_collision_free(agents, 5, 1.0).empty());
}

TEST(CollisionCheck, OverlappingParkedAgents) {
  std::vector<AgentTrajectory> agents{{TimedPath({0, Orientation::North}, 0.0), 0.6},
                                      {TimedPath({1, Orientation::North}, 0.0), 0.6}};
  const auto r = check_collision_free(agents, 5, 1.0);
  ASSERT_FALSE(r.empty());
  EXPECT_NEAR(r.violations.front().distance, 1.0, 1e-12);
  EXPECT_NEAR(r.violations.front().required, 1.2, 1e-12);
}

TEST(CollisionCheck, HeadOnSwapDetected) {
  TimedPath a({0, Orientation::East}, 0.0), b({1, Orientation::West}, 0.0);
  a.move(1, 1.0);
  b.move(0, 1.0);
  std::vector<AgentTrajectory> agents{{a, 0.35}, {b, 0.35}};
  const auto r = check_collision_free(agents, 5, 1.0);
  EXPECT_FALSE(r.empty());
  double closest = 1.0;
  for (const auto& v : r.violations) closest = std::min(closest, v.distance);
  EXPECT_LT(closest, 0.02);
}

TEST(CollisionCheck, ReportsAllViolations) {
  std::vector<AgentTrajectory> agents{{TimedPath({0, Orientation::North}, 0.0), 0.6},
                                      {TimedPath({1, Orientation::North}, 0.0), 0.6},
                                      {TimedPath({2, Orientation::North}, 0.0), 0.6}};
  CollisionCheckOptions opt;
  opt.dt = 0.5;
  const auto r = check_collision_free(agents, 5, 1.0, opt);
  EXPECT_EQ(r.total, 2 * r.samples);
}

TEST(CollisionCheck, FollowingAtOffsetIsClear) {
  // Leader departs at 1, follower reaches the leader's cell 0.7 s later.
  TimedPath leader({1, Orientation::East}, 0.0), follower({0, Orientation::East}, 0.0);
  leader.wait_until(1.0);
  leader.move(2, 1.0);
  follower.wait_until(0.7);
  follower.move(1, 1.0);
  std::vector<AgentTrajectory> agents{{leader, 0.35}, {follower, 0.35}};
  EXPECT_TRUE(check_collision_free(agents, 5, 1.0).empty());
}

TEST(CollisionCheck, RejectsNonPositiveStep) {
  CollisionCheckOptions opt;
  opt.dt = 0.0;
  EXPECT_THROW(check_collision_free({}, 5, 1.0, opt), std::domain_error);
}

TEST(Kinematics, ValidateEnvelope) {
  AgentKinematics k;
  EXPECT_NO_THROW(k.validate(1.0));
  k.radius = 0.6;
  EXPECT_THROW(k.validate(1.0), std::domain_error);
  k.radius = 0.35;
  k.v_task = 2.0;
  EXPECT_THROW(k.validate(1.0), std::domain_error);
}
