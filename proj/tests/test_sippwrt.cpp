#include <gtest/gtest.h>

#include <numbers>
#include <random>
#include <sstream>

#include "bruteforce_oracle.hpp"
#include "mapd/mapd.hpp"
#include "test_support.hpp"

using namespace mapd;

namespace {

constexpr double kRot = std::numbers::pi / 2.0;

TimedConfiguration tc(Orientation o, double v = 1.0, double r = 0.35) { return {{0, o}, r, v}; }

SafeInterval si(double lb, double ub, OptionalTimedConfiguration dep = std::nullopt,
                OptionalTimedConfiguration arr = std::nullopt) {
  return {lb, ub, dep, arr};
}

PlanQuery query(Configuration start, std::vector<CellId> goals, double t = 0.0, double v = 1.0) {
  return {start, std::move(goals), t, v, kRot, 0.35, TraversalPolicy::free_mode(), nullptr, {}, nullptr};
}

// Corridor 1x5; an obstacle rests on cell 1 until t=5, then drives east to cell 4.
struct BlockedCorridor {
  GridMap map{5, 1, 1.0};
  ReservationTable table{5, 1.0};
  TimedPath obstacle{{1, Orientation::East}, 0.0};
  BlockedCorridor() {
    obstacle.wait_until(5.0);
    obstacle.move(2, 1.0);
    obstacle.move(3, 1.0);
    obstacle.move(4, 1.0);
    table.reserve_path(obstacle, 1, 0.35);
    table.reserve_path(TimedPath({0, Orientation::East}, 0.0), 0, 0.35);
    table.release_agent(0);
  }
};

}  // namespace

TEST(Bounds, Lb1WithoutDeparturesIsUnchanged) {
  const std::vector<SafeInterval> iv{si(0, 2), si(3, kInf)};
  EXPECT_EQ(get_lb1(iv, 1, tc(Orientation::East), 1.0), 3.0);
}

TEST(Bounds, Lb1SameDirectionDeparture) {
  const std::vector<SafeInterval> iv{si(0, 4), si(5, kInf, tc(Orientation::East))};
  EXPECT_NEAR(get_lb1(iv, 1, tc(Orientation::East), 1.0), 5.70, 1e-12);
}

TEST(Bounds, Lb1OppositeDeparture) {
  const std::vector<SafeInterval> iv{si(0, 4), si(5, kInf, tc(Orientation::West))};
  EXPECT_NEAR(get_lb1(iv, 1, tc(Orientation::East), 1.0), 7.0, 1e-12);
}

TEST(Bounds, Lb1UsesEarlierDepartures) {
  const std::vector<SafeInterval> iv{si(0, 1), si(5, 5.1, tc(Orientation::West)), si(5.2, kInf, tc(Orientation::East))};
  EXPECT_NEAR(get_lb1(iv, 2, tc(Orientation::East), 1.0), 7.0, 1e-12);
}

TEST(Bounds, Ub1WithoutArrivalsIsInfinite) {
  const std::vector<SafeInterval> iv{si(0, kInf)};
  EXPECT_TRUE(std::isinf(get_ub1(iv, 0, tc(Orientation::East), 1.0)));
}

TEST(Bounds, Ub1OrthogonalArrival) {
  const std::vector<SafeInterval> iv{si(0, 10, std::nullopt, tc(Orientation::North)), si(12, kInf)};
  EXPECT_NEAR(get_ub1(iv, 0, tc(Orientation::East), 1.0), 10.0 - 0.7 * std::sqrt(2.0), 1e-12);
}

TEST(Bounds, Ub1TakesMinimumOfLaterArrivals) {
  const std::vector<SafeInterval> iv{si(0, 10, std::nullopt, tc(Orientation::East)),
                                     si(11, 11.5, std::nullopt, tc(Orientation::West)), si(12, kInf)};
  EXPECT_NEAR(get_ub1(iv, 0, tc(Orientation::East), 1.0), 9.3, 1e-12);
  const std::vector<SafeInterval> iv2{si(0, 10, std::nullopt, tc(Orientation::East)),
                                      si(10.5, 11, std::nullopt, tc(Orientation::West)), si(12, kInf)};
  EXPECT_NEAR(get_ub1(iv2, 0, tc(Orientation::East), 1.0), 9.0, 1e-12);
}

TEST(Bounds, Lb2AntiOvertaking) {
  const std::vector<SafeInterval> none{si(0, 1), si(4, kInf, tc(Orientation::North))};
  EXPECT_TRUE(std::isinf(get_lb2(none, 1, tc(Orientation::East), 1.0)));
  const std::vector<SafeInterval> slow{si(0, 1), si(4, kInf, tc(Orientation::East, 0.5))};
  EXPECT_NEAR(get_lb2(slow, 1, tc(Orientation::East, 1.0), 1.0), 5.0, 1e-12);
  const std::vector<SafeInterval> same{si(0, 1), si(4, kInf, tc(Orientation::East, 1.0))};
  EXPECT_NEAR(get_lb2(same, 1, tc(Orientation::East, 1.0), 1.0), 4.0, 1e-12);
}

TEST(Bounds, Ub2AntiBeingOvertaken) {
  const std::vector<SafeInterval> none{si(0, 8)};
  EXPECT_TRUE(std::isinf(get_ub2(none, 0, tc(Orientation::East), 1.0)));
  const std::vector<SafeInterval> fast{si(0, 8), si(9, kInf, tc(Orientation::East, 2.0))};
  EXPECT_NEAR(get_ub2(fast, 0, tc(Orientation::East, 1.0), 1.0), 8.5, 1e-12);
  const std::vector<SafeInterval> slow{si(0, 8), si(9, kInf, tc(Orientation::East, 0.5))};
  EXPECT_GT(get_ub2(slow, 0, tc(Orientation::East, 1.0), 1.0), 9.0);
}

TEST(Bounds, TableFormsAgreeWithVectorForms) {
  BlockedCorridor c;
  const auto iv = c.table.safe_intervals(1, -kInf);
  ASSERT_EQ(iv.size(), 2u);
  EXPECT_EQ(iv[0].lb, iv[0].ub);
  EXPECT_NEAR(get_lb1(c.table, TimedConfiguration{{1, Orientation::East}, 0.35, 1.0}, iv[1]), 5.7, 1e-12);
  EXPECT_NEAR(get_lb2(c.table, TimedConfiguration{{1, Orientation::East}, 0.35, 1.0}, iv[1]), 5.0, 1e-12);
  EXPECT_NEAR(get_lb1(iv, 1, TimedConfiguration{{1, Orientation::East}, 0.35, 1.0}, 1.0), 5.7, 1e-12);
  EXPECT_THROW(get_lb1(c.table, TimedConfiguration{{1, Orientation::East}, 0.35, 1.0}, si(3, 4)),
               std::domain_error);
}

TEST(Successors, UnobstructedMove) {
  const GridMap m(2, 1, 1.0);
  const ReservationTable t(2, 1.0);
  const auto s = get_successors({0, Orientation::East}, si(0, kInf), 0.0, query({0, Orientation::East}, {1}), t, m);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].cfg, (Configuration{1, Orientation::East}));
  EXPECT_DOUBLE_EQ(s[0].cost, 1.0);
}

TEST(Successors, TurnThenMove) {
  const GridMap m(2, 1, 1.0);
  const ReservationTable t(2, 1.0);
  const auto s = get_successors({0, Orientation::North}, si(0, kInf), 0.0, query({0, Orientation::North}, {1}), t, m);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_DOUBLE_EQ(s[0].cost, 2.0);
}

TEST(Successors, FullyReservedDestination) {
  const GridMap m(2, 1, 1.0);
  ReservationTable t(2, 1.0);
  t.reserve_path(TimedPath({1, Orientation::North}, 0.0), 1, 0.35);
  EXPECT_TRUE(get_successors({0, Orientation::East}, si(0, kInf), 0.0, query({0, Orientation::East}, {1}), t, m).empty());
}

TEST(Successors, TurnMustFitInsideOwnInterval) {
  const GridMap m(2, 1, 1.0);
  ReservationTable t(2, 1.0);
  ReservedInterval later{0.5, kInf, 1, TimedConfiguration{{0, Orientation::South}, 0.35, 1.0}, std::nullopt};
  t.insert(0, later);
  const auto iv = t.safe_intervals(0, 0.0);
  EXPECT_TRUE(get_successors({0, Orientation::North}, iv[0], 0.0, query({0, Orientation::North}, {1}), t, m).empty());
}

TEST(Plan, OpenCorridor) {
  const GridMap m(4, 1, 1.0);
  const ReservationTable t(4, 1.0);
  const auto r = plan(query({0, Orientation::East}, {3}), t, m);
  ASSERT_TRUE(r);
  EXPECT_DOUBLE_EQ(r->arrival, 3.0);
  EXPECT_EQ(r->goal, 3);
  EXPECT_EQ(r->path.segments().size(), 3u);
}

TEST(Plan, GoalAtStart) {
  const GridMap m(4, 1, 1.0);
  const ReservationTable t(4, 1.0);
  const auto r = plan(query({2, Orientation::West}, {2}, 4.5), t, m);
  ASSERT_TRUE(r);
  EXPECT_TRUE(r->path.empty());
  EXPECT_DOUBLE_EQ(r->arrival, 4.5);
}

TEST(Plan, WaitsBehindObstacle) {
  BlockedCorridor c;
  const auto r = plan(query({0, Orientation::East}, {3}), c.table, c.map);
  ASSERT_TRUE(r);
  EXPECT_NEAR(r->arrival, 7.7, 1e-9);
  mapd::testing::BruteForceQuery bq{{0, Orientation::East}, {3}, 1.0, kRot, 0.35, 0.05, 1e-7};
  const auto bf = mapd::testing::brute_force_arrival(bq, {{c.obstacle, 0.35}}, c.map);
  ASSERT_TRUE(bf);
  EXPECT_LE(std::abs(*bf - r->arrival), 0.05 + 1e-9);
  std::vector<AgentTrajectory> agents{{r->path, 0.35}, {c.obstacle, 0.35}};
  EXPECT_TRUE(check_collision_free(agents, c.map.width(), 1.0).empty());
}

TEST(Plan, NoPathWhenEveryGoalIntervalIsFinite) {
  GridMap m(3, 1, 1.0);
  ReservationTable t(3, 1.0);
  TimedPath other({2, Orientation::West}, 0.0);
  other.wait_until(10.0);
  other.move(1, 1.0);
  t.reserve_path(other, 1, 0.35);
  EXPECT_FALSE(plan(query({0, Orientation::East}, {1}), t, m));
}

TEST(Plan, StartInsideForeignReservationIsDomainError) {
  const GridMap m(3, 1, 1.0);
  ReservationTable t(3, 1.0);
  t.reserve_path(TimedPath({0, Orientation::West}, 0.0), 1, 0.35);
  EXPECT_THROW(plan(query({0, Orientation::East}, {2}, 1.0), t, m), std::domain_error);
}

TEST(Plan, BlockedGoalIsDomainError) {
  GridMap m(3, 1, 1.0);
  m.set_blocked(2, true);
  const ReservationTable t(3, 1.0);
  EXPECT_THROW(plan(query({0, Orientation::East}, {2}), t, m), std::domain_error);
}

TEST(Plan, GoalRankPrefersLowerRank) {
  const GridMap m(5, 1, 1.0);
  const ReservationTable t(5, 1.0);
  auto q = query({2, Orientation::East}, {0, 4});
  EXPECT_EQ(plan(q, t, m)->goal, 4);
  q.goal_rank = [](CellId c) { return c == 0 ? 0LL : 1LL; };
  q.start.orientation = Orientation::North;
  const auto r = plan(q, t, m);
  EXPECT_EQ(r->goal, 0);
  EXPECT_DOUBLE_EQ(r->arrival, 3.0);
}

TEST(Plan, TaskPolicyAvoidsForeignEndpoints) {
  GridMap m = load_map("3 3 1\n.e.\n...\n...\n");
  const ReservationTable t(9, 1.0);
  auto q = query({m.id(0, 0), Orientation::East}, {m.id(2, 0)});
  EXPECT_DOUBLE_EQ(plan(q, t, m)->arrival, 2.0);
  q.policy = TraversalPolicy::task_mode(-1, m.id(2, 0));
  const auto r = plan(q, t, m);
  ASSERT_TRUE(r);
  for (const auto& s : r->path.segments()) EXPECT_NE(s.to, m.id(1, 0));
  EXPECT_GT(r->arrival, 2.0);
}

TEST(Plan, TraceIsDeterministic) {
  BlockedCorridor c;
  std::ostringstream a, b;
  auto q = query({0, Orientation::East}, {3});
  q.trace = &a;
  plan(q, c.table, c.map);
  q.trace = &b;
  plan(q, c.table, c.map);
  EXPECT_FALSE(a.str().empty());
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(a.str().substr(0, a.str().find('\n')), "expand 0 E 0.000000000 0.000000000");
}

TEST(Heuristic, Examples) {
  const GridMap m(6, 1, 1.0);
  const auto h = build_heuristic(m, {5}, 1.0, kRot, TraversalPolicy::free_mode());
  EXPECT_EQ(h({5, Orientation::North}), 0.0);
  EXPECT_DOUBLE_EQ(h({1, Orientation::East}), 4.0);
  EXPECT_DOUBLE_EQ(h({1, Orientation::West}), 6.0);
  const auto z = build_heuristic(m, {5}, 1.0, kRot, TraversalPolicy::free_mode(), HeuristicTable::Mode::Zero);
  EXPECT_EQ(z({1, Orientation::West}), 0.0);
  EXPECT_THROW(build_heuristic(m, {}, 1.0, kRot, TraversalPolicy::free_mode()), std::domain_error);
}

TEST(Heuristic, DoesNotChangeArrival) {
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    auto inst = mapd::testing::make_optimality_instance(seed);
    const auto without = plan(inst.query, inst.table, inst.map);
    const auto h = build_heuristic(inst.map, inst.query.goals, inst.query.v_trans, kRot, TraversalPolicy::free_mode());
    inst.query.heuristic = &h;
    const auto with = plan(inst.query, inst.table, inst.map);
    ASSERT_EQ(without.has_value(), with.has_value());
    if (with) {
      EXPECT_NEAR(with->arrival, without->arrival, 1e-9) << "seed " << seed;
      EXPECT_LE(h(inst.query.start), with->arrival - inst.query.current_t + 1e-9) << "seed " << seed;
    }
  }
}

// Properties of plans computed against randomized reservation states.
TEST(PlanProperties, ContainmentMonotonicityAndClearance) {
  int solved = 0;
  for (std::uint64_t seed = 0; seed < 150; ++seed) {
    const auto st = mapd::testing::random_table_state(seed + 5000);
    double now = 0.0;
    for (const auto& p : st.paths) now = std::max(now, p.end_time());
    std::mt19937_64 rng(seed);
    const CellId from = static_cast<CellId>(rng() % st.map.num_cells());
    const auto iv = st.table.safe_intervals(from, now);
    if (iv.back().lb > now || !std::isinf(iv.back().ub)) continue;
    const CellId to = static_cast<CellId>(rng() % st.map.num_cells());
    const double v = (rng() % 2) ? 1.0 : 0.5;
    auto q = query({from, static_cast<Orientation>(rng() % 4)}, {to}, now, v);
    const auto h = build_heuristic(st.map, q.goals, v, kRot, TraversalPolicy::free_mode());
    q.heuristic = &h;
    const auto r = plan(q, st.table, st.map);
    if (!r) continue;
    ++solved;
    ASSERT_NO_THROW(validate_path(r->path, st.map, kRot));
    EXPECT_LE(h(q.start), r->arrival - now + 1e-9);

    double prev = now - 1.0;
    for (const Segment& s : r->path.segments()) {
      if (s.kind != Segment::Kind::Move) continue;
      EXPECT_GT(s.end, prev);
      prev = s.end;
      const auto there = st.table.safe_intervals(s.to, -kInf);
      const TimedConfiguration arrived{{s.to, s.orientation}, q.radius, v};
      bool inside = false;
      for (std::size_t k = 0; k < there.size(); ++k) {
        if (get_lb1(there, k, arrived, 1.0) <= s.end + 1e-9 && s.end <= there[k].ub + 1e-9) inside = true;
      }
      EXPECT_TRUE(inside) << "seed " << seed;
    }

    auto agents = mapd::testing::trajectories(st);
    agents.push_back({r->path, q.radius});
    // The planned agent only exists from `now` on.
    CollisionCheckOptions opt;
    opt.max_recorded = std::numeric_limits<std::size_t>::max();
    for (const auto& v : check_collision_free(agents, st.map.width(), 1.0, opt).violations) {
      EXPECT_LT(v.t, now - 1e-9) << "seed " << seed << " t=" << v.t;
    }
  }
  EXPECT_GT(solved, 50);
}

TEST(PlanProperties, MatchesBruteForceOptimum) {
  for (std::uint64_t seed = 0; seed < 80; ++seed) {
    const auto inst = mapd::testing::make_optimality_instance(seed);
    const auto r = plan(inst.query, inst.table, inst.map);
    const auto bf = mapd::testing::brute_force_arrival(inst.bf, inst.obstacles, inst.map);
    ASSERT_EQ(r.has_value(), bf.has_value()) << "seed " << seed;
    if (r) {
      EXPECT_LE(std::abs(r->arrival - *bf), inst.bf.dt + 1e-9) << "seed " << seed;
    }
  }
}
