#pragma once

#include <algorithm>
#include <chrono>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "mapd/grid_model.hpp"
#include "mapd/kinematics.hpp"
#include "mapd/reservation_table.hpp"
#include "mapd/scenario.hpp"
#include "mapd/sippwrt.hpp"

namespace mapd {

enum class TaskState : std::uint8_t { Unassigned, Assigned, Executing, Done };

struct Task {
  int id = 0;
  CellId pickup = 0;
  CellId delivery = 0;
  double insert_t = 0.0;
  TaskState state = TaskState::Unassigned;
  AgentId agent = -1;
  double finish_t = -1.0;
};

struct AgentRecord {
  AgentId id = 0;
  AgentKinematics kinematics;
  TimedPath path;
  std::optional<int> carried_task;
};

// Shared planning state. Mutation happens only inside tp_step, which holds
// the token's lock for the whole plan-and-reserve episode.
class Token {
 public:
  Token(const GridMap& map, std::size_t num_agents)
      : reservation(map.num_cells(), map.cell_size()), paths(num_agents), lock_(std::make_unique<std::mutex>()) {}

  std::vector<Task> task_set;  // unassigned tasks
  ReservationTable reservation;
  std::vector<TimedPath> paths;
  double now = 0.0;
  // Stored paths keep this much executed motion so that recent departures
  // keep constraining arrivals of later plans.
  double history_window = kInf;

  std::mutex& lock() const { return *lock_; }

  // End cells of every path except `except`.
  std::vector<CellId> end_cells(AgentId except = -1) const {
    std::vector<CellId> out;
    out.reserve(paths.size());
    for (std::size_t a = 0; a < paths.size(); ++a) {
      if (static_cast<AgentId>(a) != except) out.push_back(paths[a].end_configuration().cell);
    }
    return out;
  }

 private:
  std::unique_ptr<std::mutex> lock_;
};

// Tasks whose pickup and delivery differ from the end cells of all paths
// other than `agent`'s own (its path is about to be replaced).
inline std::vector<Task> eligible_tasks(const Token& token, AgentId agent = -1) {
  const auto ends = token.end_cells(agent);
  auto blocked = [&](CellId c) { return std::find(ends.begin(), ends.end(), c) != ends.end(); };
  std::vector<Task> out;
  for (const Task& t : token.task_set) {
    if (!blocked(t.pickup) && !blocked(t.delivery)) out.push_back(t);
  }
  return out;
}

// Drops segments that ended before `t`.
inline TimedPath trim_history(const TimedPath& path, double t) {
  const auto& segs = path.segments();
  std::size_t first = 0;
  while (first < segs.size() && segs[first].end < t) ++first;
  if (first == 0) return path;
  if (first == segs.size()) return TimedPath(path.end_configuration(), segs.back().end);
  TimedPath out({segs[first].from, segs[first].from_orientation}, segs[first].start);
  for (std::size_t k = first; k < segs.size(); ++k) out.push(segs[k]);
  return out;
}

enum class TpRule : std::uint8_t { TP1, TP2, TP3 };

struct StepOutcome {
  TpRule rule = TpRule::TP2;
  std::optional<Task> task;  // TP1 only
  double pickup_t = -1.0;    // TP1 only
  TimedPath fresh;           // motion planned in this step
  double end_t = 0.0;
  double planning_seconds = 0.0;
};

// One token grant to an idle agent at token.now.
inline StepOutcome tp_step(Token& token, AgentRecord& agent, const GridMap& map) {
  std::scoped_lock guard(token.lock());
  const auto started = std::chrono::steady_clock::now();
  const AgentKinematics& k = agent.kinematics;
  const Configuration here = token.paths[agent.id].end_configuration();
  if (token.paths[agent.id].end_time() > token.now + kTimeEps) {
    throw ProtocolError("agent " + std::to_string(agent.id) + " received the token while following a path");
  }

  const TimedPath previous = token.paths[agent.id];
  auto restore = [&]() {
    token.reservation.release_agent(agent.id);
    token.reservation.reserve_path(previous, agent.id, k.radius);
  };
  auto commit = [&](TimedPath fresh, StepOutcome out) {
    TimedPath combined = trim_history(previous, token.now - token.history_window);
    combined.append(fresh);
    try {
      token.reservation.reserve_path(combined, agent.id, k.radius);
    } catch (...) {
      restore();
      throw;
    }
    out.end_t = fresh.end_time();
    token.paths[agent.id] = std::move(combined);
    out.fresh = fresh;
    agent.path = std::move(fresh);
    out.planning_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return out;
  };
  auto fail = [&](const std::string& what) -> StepOutcome {
    restore();
    throw ProtocolError("agent " + std::to_string(agent.id) + " at t=" + std::to_string(token.now) + ": " + what);
  };

  const auto eligible = eligible_tasks(token, agent.id);
  if (!eligible.empty()) {
    token.reservation.release_agent(agent.id);
    // TP1: earliest reachable pickup, ties to the lowest task id.
    std::unordered_map<CellId, int> lowest_id;
    for (const Task& t : eligible) {
      auto [it, inserted] = lowest_id.try_emplace(t.pickup, t.id);
      if (!inserted) it->second = std::min(it->second, t.id);
    }
    std::vector<CellId> pickups;
    for (const auto& [cell, id] : lowest_id) pickups.push_back(cell);
    std::sort(pickups.begin(), pickups.end());

    const TraversalPolicy free = TraversalPolicy::free_mode();
    const HeuristicTable to_pickup = build_heuristic(map, pickups, k.v_free, k.v_rot, free);
    PlanQuery leg1{here, pickups, token.now, k.v_free, k.v_rot, k.radius, free, &to_pickup,
                   [&](CellId c) { return static_cast<long long>(lowest_id.at(c)); }, nullptr};
    auto first = plan(leg1, token.reservation, map);
    if (!first) return fail("no path to any eligible pickup");
    const int chosen_id = lowest_id.at(first->goal);
    auto chosen = std::find_if(token.task_set.begin(), token.task_set.end(),
                               [&](const Task& t) { return t.id == chosen_id; });

    const TraversalPolicy carrying = TraversalPolicy::task_mode(chosen->pickup, chosen->delivery);
    const HeuristicTable to_delivery = build_heuristic(map, {chosen->delivery}, k.v_task, k.v_rot, carrying);
    PlanQuery leg2{first->path.end_configuration(), {chosen->delivery}, first->arrival, k.v_task, k.v_rot,
                   k.radius, carrying, &to_delivery, {}, nullptr};
    auto second = plan(leg2, token.reservation, map);
    if (!second) return fail("no path from pickup to delivery of task " + std::to_string(chosen->id));

    TimedPath path = first->path;
    path.append(second->path);
    StepOutcome out;
    out.rule = TpRule::TP1;
    Task task = *chosen;
    task.state = TaskState::Assigned;
    task.agent = agent.id;
    task.finish_t = second->arrival;
    out.task = task;
    out.pickup_t = first->arrival;
    token.task_set.erase(chosen);
    agent.carried_task = task.id;
    return commit(std::move(path), out);
  }

  const bool on_delivery = std::any_of(token.task_set.begin(), token.task_set.end(),
                                       [&](const Task& t) { return t.delivery == here.cell; });
  agent.carried_task.reset();
  if (!on_delivery) {
    // TP2: park in place. The stored path already ends here and its
    // terminal reservation is unbounded, so the token is unchanged.
    StepOutcome out;
    out.rule = TpRule::TP2;
    out.end_t = token.now;
    out.fresh = TimedPath(here, token.now);
    agent.path = out.fresh;
    out.planning_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return out;
  }
  token.reservation.release_agent(agent.id);

  // TP3: move to an endpoint that is no pending delivery and no end cell.
  const auto ends = token.end_cells(agent.id);
  std::vector<CellId> goals;
  for (CellId c : map.endpoints()) {
    const bool pending = std::any_of(token.task_set.begin(), token.task_set.end(),
                                     [&](const Task& t) { return t.delivery == c; });
    if (!pending && std::find(ends.begin(), ends.end(), c) == ends.end()) goals.push_back(c);
  }
  if (goals.empty()) return fail("no admissible parking endpoint");
  PlanQuery q{here, goals, token.now, k.v_free, k.v_rot, k.radius, TraversalPolicy::free_mode(), nullptr, {}, nullptr};
  auto parked = plan(q, token.reservation, map);
  if (!parked) return fail("no path to a parking endpoint");
  StepOutcome out;
  out.rule = TpRule::TP3;
  return commit(std::move(parked->path), out);
}

namespace detail {

struct CellBox {
  int x0 = 0, y0 = 0, x1 = -1, y1 = -1;
  void add(Coord c) {
    if (x1 < x0) {
      x0 = x1 = c.x;
      y0 = y1 = c.y;
      return;
    }
    x0 = std::min(x0, c.x); x1 = std::max(x1, c.x);
    y0 = std::min(y0, c.y); y1 = std::max(y1, c.y);
  }
  // Boxes at least one full cell apart cannot host overlapping disks of radius <= L/2.
  bool near(const CellBox& o) const {
    return !(o.x0 > x1 + 1 || x0 > o.x1 + 1 || o.y0 > y1 + 1 || y0 > o.y1 + 1);
  }
};

inline CellBox box_after(const TimedPath& p, double t, const GridMap& map) {
  CellBox b;
  b.add(map.coord(p.end_configuration().cell));
  for (const Segment& s : p.segments()) {
    if (s.end >= t) {
      b.add(map.coord(s.from));
      b.add(map.coord(s.to));
    }
  }
  if (p.segments().empty() || p.start_time() >= t) b.add(map.coord(p.start().cell));
  return b;
}

}  // namespace detail

// TP invariants after agent `changed` stored a new path: end-cell
// exclusivity, no other path entering an end cell after its end time, and
// sampled collision freedom of the new path against every other path.
inline std::vector<std::string> check_token_invariants(const Token& token, AgentId changed,
                                                       const std::vector<double>& radii, const GridMap& map,
                                                       double dt, bool path_changed = true) {
  std::vector<std::string> problems;
  const auto& paths = token.paths;
  for (std::size_t a = 0; a < paths.size(); ++a) {
    for (std::size_t b = a + 1; b < paths.size(); ++b) {
      if (paths[a].end_configuration().cell == paths[b].end_configuration().cell) {
        problems.push_back("agents " + std::to_string(a) + " and " + std::to_string(b) + " share an end cell");
      }
    }
  }
  for (std::size_t a = 0; a < paths.size(); ++a) {
    const CellId end = paths[a].end_configuration().cell;
    const double end_t = paths[a].end_time();
    for (std::size_t b = 0; b < paths.size(); ++b) {
      if (a == b) continue;
      for (const Segment& s : paths[b].segments()) {
        if (s.kind == Segment::Kind::Move && s.to == end && s.end > end_t + kTimeEps) {
          problems.push_back("agent " + std::to_string(b) + " enters end cell of agent " + std::to_string(a) +
                             " after its end time");
        }
      }
    }
  }

  if (!path_changed) return problems;
  const TimedPath& mine = paths[changed];
  const double t0 = token.now;
  double t1 = mine.end_time();
  const detail::CellBox my_box = detail::box_after(mine, t0, map);
  std::vector<std::size_t> near;
  for (std::size_t b = 0; b < paths.size(); ++b) {
    if (static_cast<AgentId>(b) == changed) continue;
    if (my_box.near(detail::box_after(paths[b], t0, map))) {
      near.push_back(b);
      t1 = std::max(t1, paths[b].end_time());
    }
  }
  if (near.empty()) return problems;
  t1 = std::max(t1, t0) + 1.0;
  detail::PathCursor me(mine, map.width(), map.cell_size());
  std::vector<detail::PathCursor> others;
  for (std::size_t b : near) others.emplace_back(paths[b], map.width(), map.cell_size());
  const auto steps = static_cast<std::size_t>(std::ceil((t1 - t0) / dt));
  for (std::size_t s = 0; s <= steps; ++s) {
    const double t = t0 + static_cast<double>(s) * dt;
    const Pose p = me.at(t);
    for (std::size_t k = 0; k < near.size(); ++k) {
      const Pose o = others[k].at(t);
      const double dist = std::hypot(p.x - o.x, p.y - o.y);
      if (dist < radii[changed] + radii[near[k]] - 1e-6) {
        problems.push_back("agent " + std::to_string(changed) + " collides with agent " + std::to_string(near[k]) +
                           " at t=" + std::to_string(t));
        return problems;
      }
    }
  }
  return problems;
}

// Lifelong TP-SIPPwRT execution of a validated scenario.
inline SimulationResult run_lifelong(const ScenarioConfig& sc) {
  const GridMap& map = sc.map;
  const std::size_t m = sc.num_agents();
  sc.kinematics.validate(map.cell_size());
  if (auto report = validate_well_formed(map, m, sc.tasks.size()); !report) {
    throw std::domain_error("scenario is not well-formed: " + report.detail);
  }

  SimulationResult result;
  result.tasks.resize(sc.tasks.size());
  for (std::size_t i = 0; i < sc.tasks.size(); ++i) {
    result.tasks[i].id = sc.tasks[i].id;
    result.tasks[i].insert_t = sc.tasks[i].insert_t;
  }
  std::unordered_map<int, std::size_t> slot_of;
  for (std::size_t i = 0; i < sc.tasks.size(); ++i) slot_of[sc.tasks[i].id] = i;

  Token token(map, m);
  std::vector<AgentRecord> agents(m);
  result.radii.assign(m, sc.kinematics.radius);
  for (std::size_t a = 0; a < m; ++a) {
    agents[a] = {static_cast<AgentId>(a), sc.kinematics, TimedPath(sc.agent_starts[a], 0.0), std::nullopt};
    token.paths[a] = agents[a].path;
    token.reservation.reserve_path(token.paths[a], static_cast<AgentId>(a), sc.kinematics.radius);
  }
  result.trajectories = token.paths;

  const double gc_lookback =
      max_offset(map.cell_size(), std::min(sc.kinematics.v_task, sc.kinematics.v_free)) + 1.0;
  token.history_window = gc_lookback;
  double last_gc = 0.0;
  std::size_t next_task = 0;
  std::size_t done = 0;
  std::vector<double> done_times;

  auto over_budget = [&]() {
    if (result.planning_time > sc.wall_budget) {
      result.failure = "wall-clock budget exceeded";
      return true;
    }
    if (token.now > sc.time_budget) {
      result.failure = "simulated-time budget exceeded";
      return true;
    }
    return false;
  };

  try {
    while (true) {
      while (next_task < sc.tasks.size() && sc.tasks[next_task].insert_t <= token.now + kTimeEps) {
        const TaskSpec& s = sc.tasks[next_task++];
        token.task_set.push_back({s.id, s.pickup, s.delivery, s.insert_t, TaskState::Unassigned, -1, -1.0});
      }
      while (!done_times.empty() && done_times.back() <= token.now + kTimeEps) {
        done_times.pop_back();
        ++done;
      }
      if (done == sc.tasks.size() && next_task == sc.tasks.size()) {
        result.complete = true;
        break;
      }
      if (over_budget()) break;

      if (token.now - last_gc > 50.0) {
        token.reservation.garbage_collect(token.now, gc_lookback);
        last_gc = token.now;
      }

      // Grant the token to idle agents in ascending id until a round
      // produces no new motion.
      bool moved = true;
      while (moved) {
        moved = false;
        for (std::size_t a = 0; a < m; ++a) {
          if (token.paths[a].end_time() > token.now + kTimeEps) continue;
          const StepOutcome out = tp_step(token, agents[a], map);
          result.planning_time += out.planning_seconds;
          switch (out.rule) {
            case TpRule::TP1: {
              ++result.tp1_steps;
              TaskRecord& rec = result.tasks[slot_of.at(out.task->id)];
              rec.agent = static_cast<int>(a);
              rec.assign_t = token.now;
              rec.pickup_t = out.pickup_t;
              rec.done_t = out.end_t;
              done_times.push_back(out.end_t);
              std::sort(done_times.begin(), done_times.end(), std::greater<>());
              moved = true;
              break;
            }
            case TpRule::TP2: ++result.tp2_steps; break;
            case TpRule::TP3: ++result.tp3_steps; moved = true; break;
          }
          if (out.rule != TpRule::TP2) result.trajectories[a].append(out.fresh);
          if (sc.check_invariants) {
            for (auto& p : check_token_invariants(token, static_cast<AgentId>(a), result.radii, map, sc.oracle_dt,
                                                  out.rule != TpRule::TP2)) {
              result.invariant_violations.push_back("t=" + std::to_string(token.now) + ": " + p);
            }
          }
        }
      }

      double next = kInf;
      if (next_task < sc.tasks.size()) next = std::min(next, sc.tasks[next_task].insert_t);
      for (std::size_t a = 0; a < m; ++a) {
        const double e = token.paths[a].end_time();
        if (e > token.now + kTimeEps) next = std::min(next, e);
      }
      if (std::isinf(next)) {
        result.failure = "no pending event while tasks remain (deadlock)";
        break;
      }
      token.now = next;
    }
  } catch (const std::exception& e) {
    result.failure = e.what();
  }

  for (const TaskRecord& r : result.tasks) {
    if (r.done_t >= 0.0 && r.done_t <= token.now + kTimeEps) {
      result.service_times.push_back(r.done_t - r.insert_t);
      result.makespan = std::max(result.makespan, r.done_t);
    }
  }
  if (sc.verify_collisions) {
    std::vector<AgentTrajectory> traj;
    traj.reserve(m);
    for (std::size_t a = 0; a < m; ++a) traj.push_back({result.trajectories[a], result.radii[a]});
    CollisionCheckOptions opt;
    opt.dt = sc.oracle_dt;
    result.collisions = check_collision_free(traj, map.width(), map.cell_size(), opt);
  }
  return result;
}

}  // namespace mapd
