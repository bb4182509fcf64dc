#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <queue>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "mapd/grid_model.hpp"
#include "mapd/reservation_table.hpp"
#include "mapd/scenario.hpp"

namespace mapd {

using Timestep = long long;
inline constexpr Timestep kNever = std::numeric_limits<Timestep>::max();

// cells[k] is occupied at timestep start_t + k; the agent parks at the last
// cell afterwards.
struct DiscretePath {
  Timestep start_t = 0;
  std::vector<CellId> cells;

  Timestep end_t() const { return start_t + static_cast<Timestep>(cells.size()) - 1; }
  CellId end_cell() const { return cells.back(); }
  CellId at(Timestep t) const {
    if (t <= start_t) return cells.front();
    if (t >= end_t()) return cells.back();
    return cells[static_cast<std::size_t>(t - start_t)];
  }
  friend bool operator==(const DiscretePath&, const DiscretePath&) = default;
};

class DiscreteReservationConflict : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Vertex, edge and parking reservations indexed by cell and timestep.
class DiscreteReservation {
 public:
  DiscreteReservation() = default;
  explicit DiscreteReservation(int num_cells) : times_(num_cells), park_from_(num_cells, kNever), park_owner_(num_cells, -1) {}

  bool vertex_free(CellId c, Timestep t) const {
    return t < park_from_[c] && !vertex_.contains(vertex_key(c, t));
  }
  // Moving a -> b between t and t + 1 swaps with someone moving b -> a.
  bool swap_free(CellId a, CellId b, Timestep t) const { return !edge_.contains(edge_key(b, a, t)); }
  // No reservation touches `c` at any timestep after `t`.
  bool free_after(CellId c, Timestep t) const {
    if (park_from_[c] != kNever) return false;
    return times_[c].empty() || *times_[c].rbegin() <= t;
  }
  Timestep park_from(CellId c) const { return park_from_[c]; }
  Timestep last_reserved() const { return last_; }

  void reserve(const DiscretePath& p, AgentId owner) {
    validate(p, owner);
    auto& keys = owned_[owner];
    for (std::size_t k = 0; k + 1 < p.cells.size(); ++k) {
      const Timestep t = p.start_t + static_cast<Timestep>(k);
      vertex_.emplace(vertex_key(p.cells[k], t), owner);
      times_[p.cells[k]].insert(t);
      keys.vertices.push_back({p.cells[k], t});
      if (p.cells[k] != p.cells[k + 1]) {
        edge_.emplace(edge_key(p.cells[k], p.cells[k + 1], t), owner);
        keys.edges.push_back(edge_key(p.cells[k], p.cells[k + 1], t));
      }
    }
    park_from_[p.end_cell()] = p.end_t();
    park_owner_[p.end_cell()] = owner;
    keys.parked = p.end_cell();
    last_ = std::max(last_, p.end_t());
  }

  void release(AgentId owner) {
    auto it = owned_.find(owner);
    if (it == owned_.end()) return;
    for (auto [c, t] : it->second.vertices) {
      vertex_.erase(vertex_key(c, t));
      times_[c].erase(t);
    }
    for (auto e : it->second.edges) edge_.erase(e);
    if (it->second.parked >= 0 && park_owner_[it->second.parked] == owner) {
      park_from_[it->second.parked] = kNever;
      park_owner_[it->second.parked] = -1;
    }
    owned_.erase(it);
  }

 private:
  struct Owned {
    std::vector<std::pair<CellId, Timestep>> vertices;
    std::vector<std::uint64_t> edges;
    CellId parked = -1;
  };

  static std::uint64_t vertex_key(CellId c, Timestep t) {
    return static_cast<std::uint64_t>(t) << 24 ^ static_cast<std::uint64_t>(c);
  }
  static std::uint64_t edge_key(CellId a, CellId b, Timestep t) {
    return (static_cast<std::uint64_t>(t) << 40) ^ (static_cast<std::uint64_t>(a) << 20) ^ static_cast<std::uint64_t>(b);
  }

  void validate(const DiscretePath& p, AgentId owner) const {
    auto fail = [&](const std::string& what, Timestep t) {
      throw DiscreteReservationConflict("agent " + std::to_string(owner) + ": " + what + " at timestep " +
                                        std::to_string(t));
    };
    if (p.cells.empty()) throw std::domain_error("discrete path has no cells");
    for (std::size_t k = 0; k < p.cells.size(); ++k) {
      const Timestep t = p.start_t + static_cast<Timestep>(k);
      if (!vertex_free(p.cells[k], t)) fail("vertex conflict", t);
      if (k + 1 < p.cells.size() && !swap_free(p.cells[k], p.cells[k + 1], t)) fail("edge conflict", t);
    }
    if (!free_after(p.end_cell(), p.end_t())) fail("end cell is used later", p.end_t());
  }

  std::unordered_map<std::uint64_t, AgentId> vertex_;
  std::unordered_map<std::uint64_t, AgentId> edge_;
  std::vector<std::set<Timestep>> times_;
  std::vector<Timestep> park_from_;
  std::vector<AgentId> park_owner_;
  std::unordered_map<AgentId, Owned> owned_;
  Timestep last_ = 0;
};

// Breadth-first distances to the nearest goal under `policy`.
inline std::vector<int> discrete_distances(const GridMap& map, const std::vector<CellId>& goals,
                                           const TraversalPolicy& policy) {
  std::vector<int> dist(map.num_cells(), std::numeric_limits<int>::max());
  std::queue<CellId> open;
  for (CellId g : goals) {
    if (dist[g] != 0) {
      dist[g] = 0;
      open.push(g);
    }
  }
  while (!open.empty()) {
    const CellId c = open.front();
    open.pop();
    // Reverse search: a predecessor p reaches c iff c admits entry.
    if (!policy.admits(map, c) && dist[c] != 0) continue;
    for (CellId n : neighbors(map, c, TraversalPolicy::free_mode())) {
      if (dist[n] == std::numeric_limits<int>::max()) {
        dist[n] = dist[c] + 1;
        open.push(n);
      }
    }
  }
  return dist;
}

struct DiscreteQuery {
  CellId start = 0;
  Timestep start_t = 0;
  std::vector<CellId> goals;
  TraversalPolicy policy;
  bool use_heuristic = true;
  std::function<long long(CellId)> goal_rank;  // ties among goals at the same arrival
};

// Time-minimal discrete path to a goal that nobody uses after arrival.
inline std::optional<DiscretePath> spacetime_astar(const DiscreteQuery& q, const DiscreteReservation& res,
                                                   const GridMap& map) {
  require_open_cell(map, q.start);
  if (q.goals.empty()) throw std::domain_error("spacetime_astar needs at least one goal cell");
  if (!res.vertex_free(q.start, q.start_t)) throw std::domain_error("start is reserved at the start timestep");
  std::vector<char> is_goal(map.num_cells(), 0);
  for (CellId g : q.goals) is_goal[g] = 1;
  const std::vector<int> h = q.use_heuristic ? discrete_distances(map, q.goals, q.policy)
                                             : std::vector<int>(map.num_cells(), 0);
  if (h[q.start] == std::numeric_limits<int>::max()) return std::nullopt;

  // Beyond this horizon every reservation has ended, so waiting longer
  // cannot help.
  const Timestep horizon = std::max(res.last_reserved(), q.start_t) + 2 * map.num_cells() + 2;

  struct Node {
    CellId cell;
    Timestep t;
    int parent;
  };
  std::vector<Node> nodes;
  std::unordered_set<std::uint64_t> seen;
  auto key = [](CellId c, Timestep t) { return static_cast<std::uint64_t>(t) << 24 ^ static_cast<std::uint64_t>(c); };
  struct Entry {
    Timestep f;
    Timestep t;
    CellId cell;
    int node;
  };
  auto worse = [](const Entry& a, const Entry& b) {
    if (a.f != b.f) return a.f > b.f;
    if (a.t != b.t) return a.t < b.t;
    return a.cell > b.cell;
  };
  std::priority_queue<Entry, std::vector<Entry>, decltype(worse)> open(worse);
  nodes.push_back({q.start, q.start_t, -1});
  seen.insert(key(q.start, q.start_t));
  open.push({q.start_t + h[q.start], q.start_t, q.start, 0});

  int best = -1;
  long long best_rank = 0;
  while (!open.empty()) {
    const Entry top = open.top();
    if (best >= 0 && top.f > nodes[best].t) break;
    open.pop();
    const Node n = nodes[top.node];
    if (is_goal[n.cell] && res.free_after(n.cell, n.t)) {
      const long long rank = q.goal_rank ? q.goal_rank(n.cell) : 0;
      if (best < 0 || rank < best_rank) {
        best = top.node;
        best_rank = rank;
      }
      if (!q.goal_rank) break;
      continue;
    }
    if (n.t >= horizon) continue;
    auto push = [&](CellId next) {
      const Timestep t = n.t + 1;
      if (!res.vertex_free(next, t) || !res.swap_free(n.cell, next, n.t)) return;
      if (h[next] == std::numeric_limits<int>::max()) return;
      if (!seen.insert(key(next, t)).second) return;
      nodes.push_back({next, t, top.node});
      open.push({t + h[next], t, next, static_cast<int>(nodes.size()) - 1});
    };
    push(n.cell);
    for (CellId next : neighbors(map, n.cell, q.policy)) push(next);
  }
  if (best < 0) return std::nullopt;
  DiscretePath path;
  path.start_t = q.start_t;
  for (int k = best; k >= 0; k = nodes[k].parent) path.cells.push_back(nodes[k].cell);
  std::reverse(path.cells.begin(), path.cells.end());
  return path;
}

// Lifelong TP with space-time A*. One timestep is one cell traversal and
// times in the result are timesteps.
inline SimulationResult run_lifelong_discrete(const ScenarioConfig& sc) {
  const GridMap& map = sc.map;
  const std::size_t m = sc.num_agents();
  if (auto report = validate_well_formed(map, m, sc.tasks.size()); !report) {
    throw std::domain_error("scenario is not well-formed: " + report.detail);
  }
  SimulationResult result;
  result.discrete = true;
  result.tasks.resize(sc.tasks.size());
  std::unordered_map<int, std::size_t> slot_of;
  for (std::size_t i = 0; i < sc.tasks.size(); ++i) {
    result.tasks[i].id = sc.tasks[i].id;
    result.tasks[i].insert_t = std::ceil(sc.tasks[i].insert_t - 1e-9);
    slot_of[sc.tasks[i].id] = i;
  }

  DiscreteReservation res(map.num_cells());
  std::vector<DiscretePath> paths(m);
  for (std::size_t a = 0; a < m; ++a) {
    paths[a] = {0, {sc.agent_starts[a].cell}};
    res.reserve(paths[a], static_cast<AgentId>(a));
  }
  std::vector<TaskSpec> task_set;
  std::size_t next_task = 0;
  std::size_t done = 0;
  std::vector<Timestep> done_times;
  Timestep now = 0;
  const auto started = std::chrono::steady_clock::now();

  auto end_cells = [&](std::size_t except) {
    std::vector<CellId> out;
    for (std::size_t a = 0; a < m; ++a) {
      if (a != except) out.push_back(paths[a].end_cell());
    }
    return out;
  };
  auto contains = [](const std::vector<CellId>& v, CellId c) { return std::find(v.begin(), v.end(), c) != v.end(); };

  // Returns true when the agent started moving.
  auto step = [&](std::size_t a) -> bool {
    const CellId here = paths[a].end_cell();
    const auto ends = end_cells(a);
    std::unordered_map<CellId, int> lowest_id;
    for (const TaskSpec& t : task_set) {
      if (contains(ends, t.pickup) || contains(ends, t.delivery)) continue;
      auto [it, inserted] = lowest_id.try_emplace(t.pickup, t.id);
      if (!inserted) it->second = std::min(it->second, t.id);
    }
    const auto agent = static_cast<AgentId>(a);
    if (!lowest_id.empty()) {
      res.release(agent);
      std::vector<CellId> pickups;
      for (const auto& [c, id] : lowest_id) pickups.push_back(c);
      std::sort(pickups.begin(), pickups.end());
      DiscreteQuery q1{here, now, pickups, TraversalPolicy::free_mode(), true,
                       [&](CellId c) { return static_cast<long long>(lowest_id.at(c)); }};
      auto first = spacetime_astar(q1, res, map);
      if (!first) throw ProtocolError("agent " + std::to_string(a) + ": no path to any eligible pickup");
      const int id = lowest_id.at(first->end_cell());
      auto chosen = std::find_if(task_set.begin(), task_set.end(), [&](const TaskSpec& t) { return t.id == id; });
      DiscreteQuery q2{first->end_cell(), first->end_t(), {chosen->delivery},
                       TraversalPolicy::task_mode(chosen->pickup, chosen->delivery), true, {}};
      auto second = spacetime_astar(q2, res, map);
      if (!second) throw ProtocolError("agent " + std::to_string(a) + ": no path to delivery");
      DiscretePath path = *first;
      path.cells.insert(path.cells.end(), second->cells.begin() + 1, second->cells.end());
      res.reserve(path, agent);
      paths[a] = path;
      TaskRecord& rec = result.tasks[slot_of.at(id)];
      rec.agent = static_cast<int>(a);
      rec.assign_t = static_cast<double>(now);
      rec.pickup_t = static_cast<double>(first->end_t());
      rec.done_t = static_cast<double>(path.end_t());
      done_times.push_back(path.end_t());
      std::sort(done_times.begin(), done_times.end(), std::greater<>());
      task_set.erase(chosen);
      ++result.tp1_steps;
      return true;
    }
    const bool on_delivery =
        std::any_of(task_set.begin(), task_set.end(), [&](const TaskSpec& t) { return t.delivery == here; });
    if (!on_delivery) {
      ++result.tp2_steps;
      return false;
    }
    std::vector<CellId> goals;
    for (CellId c : map.endpoints()) {
      const bool pending =
          std::any_of(task_set.begin(), task_set.end(), [&](const TaskSpec& t) { return t.delivery == c; });
      if (!pending && !contains(ends, c)) goals.push_back(c);
    }
    if (goals.empty()) throw ProtocolError("agent " + std::to_string(a) + ": no admissible parking endpoint");
    res.release(agent);
    DiscreteQuery q{here, now, goals, TraversalPolicy::free_mode(), false, {}};
    auto parked = spacetime_astar(q, res, map);
    if (!parked) throw ProtocolError("agent " + std::to_string(a) + ": no path to a parking endpoint");
    res.reserve(*parked, agent);
    paths[a] = *parked;
    ++result.tp3_steps;
    return true;
  };

  try {
    while (true) {
      while (next_task < sc.tasks.size() && result.tasks[next_task].insert_t <= static_cast<double>(now)) {
        task_set.push_back(sc.tasks[next_task]);
        ++next_task;
      }
      while (!done_times.empty() && done_times.back() <= now) {
        done_times.pop_back();
        ++done;
      }
      if (done == sc.tasks.size() && next_task == sc.tasks.size()) {
        result.complete = true;
        break;
      }
      result.planning_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      if (result.planning_time > sc.wall_budget) {
        result.failure = "wall-clock budget exceeded";
        break;
      }
      if (static_cast<double>(now) > sc.time_budget) {
        result.failure = "simulated-time budget exceeded";
        break;
      }
      bool moved = true;
      while (moved) {
        moved = false;
        for (std::size_t a = 0; a < m; ++a) {
          if (paths[a].end_t() <= now && step(a)) moved = true;
        }
      }
      Timestep next = kNever;
      if (next_task < sc.tasks.size()) {
        next = std::min(next, static_cast<Timestep>(result.tasks[next_task].insert_t));
      }
      for (const auto& p : paths) {
        if (p.end_t() > now) next = std::min(next, p.end_t());
      }
      if (next == kNever) {
        result.failure = "no pending event while tasks remain (deadlock)";
        break;
      }
      now = next;
    }
  } catch (const std::exception& e) {
    result.failure = e.what();
  }
  result.planning_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  for (const TaskRecord& r : result.tasks) {
    if (r.done_t >= 0.0 && r.done_t <= static_cast<double>(now)) {
      result.service_times.push_back(r.done_t - r.insert_t);
      result.makespan = std::max(result.makespan, r.done_t);
    }
  }
  return result;
}

}  // namespace mapd
