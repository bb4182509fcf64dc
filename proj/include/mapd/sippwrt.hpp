#pragma once

#include <algorithm>
#include <deque>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <queue>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "mapd/grid_model.hpp"
#include "mapd/kinematics.hpp"
#include "mapd/reservation_table.hpp"

namespace mapd {

// ---------------------------------------------------------------------------
// Bound tightening over the safe intervals of one cell. `intervals` are the
// safe intervals of cfg.cell and `i` indexes the interval being tightened.

// Earliest arrival into interval i that clears every earlier departure.
inline double get_lb1(const std::vector<SafeInterval>& intervals, std::size_t i, const TimedConfiguration& cfg,
                      double cell_size) {
  double bound = intervals[i].lb;
  for (std::size_t j = 0; j <= i; ++j) {
    bound = std::max(bound, intervals[j].lb + offset(intervals[j].dep_cfg_at_lb, cfg, cell_size));
  }
  return bound;
}

// Latest departure from interval i that stays clear of every later arrival.
inline double get_ub1(const std::vector<SafeInterval>& intervals, std::size_t i, const TimedConfiguration& cfg,
                      double cell_size) {
  double bound = intervals[i].ub;
  for (std::size_t j = i; j < intervals.size(); ++j) {
    bound = std::min(bound, intervals[j].ub - offset(cfg, intervals[j].arr_cfg_at_ub, cell_size));
  }
  return bound;
}

// No overtaking of an earlier same-direction departer.
inline double get_lb2(const std::vector<SafeInterval>& intervals, std::size_t i, const TimedConfiguration& cfg,
                      double cell_size) {
  double bound = -kInf;
  for (std::size_t j = 0; j <= i; ++j) {
    const auto& dep = intervals[j].dep_cfg_at_lb;
    if (dep && dep->cfg.orientation == cfg.cfg.orientation) {
      bound = std::max(bound, intervals[j].lb + cell_size / dep->v_trans - cell_size / cfg.v_trans);
    }
  }
  return bound;
}

// No being overtaken by a later same-direction departer.
inline double get_ub2(const std::vector<SafeInterval>& intervals, std::size_t i, const TimedConfiguration& cfg,
                      double cell_size) {
  double bound = kInf;
  for (std::size_t j = i + 1; j < intervals.size(); ++j) {
    const auto& dep = intervals[j].dep_cfg_at_lb;
    if (intervals[j].lb >= intervals[i].ub - kTimeEps && dep && dep->cfg.orientation == cfg.cfg.orientation) {
      bound = std::min(bound, intervals[j].lb + cell_size / dep->v_trans - cell_size / cfg.v_trans);
    }
  }
  return bound;
}

namespace detail {

inline std::size_t find_interval(const std::vector<SafeInterval>& intervals, const SafeInterval& i) {
  for (std::size_t k = 0; k < intervals.size(); ++k) {
    if (std::abs(intervals[k].lb - i.lb) <= kTimeEps) return k;
  }
  throw std::domain_error("interval is not a safe interval of the cell");
}

}  // namespace detail

// Table-level conveniences; `reference_t` is forwarded to get_safe_intervals.
inline double get_lb1(const ReservationTable& table, const TimedConfiguration& cfg, const SafeInterval& i,
                      double reference_t = -kInf) {
  const auto iv = table.safe_intervals(cfg.cfg.cell, reference_t);
  return get_lb1(iv, detail::find_interval(iv, i), cfg, table.cell_size());
}
inline double get_ub1(const ReservationTable& table, const TimedConfiguration& cfg, const SafeInterval& i,
                      double reference_t = -kInf) {
  const auto iv = table.safe_intervals(cfg.cfg.cell, reference_t);
  return get_ub1(iv, detail::find_interval(iv, i), cfg, table.cell_size());
}
inline double get_lb2(const ReservationTable& table, const TimedConfiguration& cfg, const SafeInterval& i,
                      double reference_t = -kInf) {
  const auto iv = table.safe_intervals(cfg.cfg.cell, reference_t);
  return get_lb2(iv, detail::find_interval(iv, i), cfg, table.cell_size());
}
inline double get_ub2(const ReservationTable& table, const TimedConfiguration& cfg, const SafeInterval& i,
                      double reference_t = -kInf) {
  const auto iv = table.safe_intervals(cfg.cfg.cell, reference_t);
  return get_ub2(iv, detail::find_interval(iv, i), cfg, table.cell_size());
}

// ---------------------------------------------------------------------------

class HeuristicTable {
 public:
  enum class Mode : std::uint8_t { BackwardSearch, Zero };

  HeuristicTable() = default;
  HeuristicTable(Mode mode, std::vector<double> values) : mode_(mode), values_(std::move(values)) {}

  Mode mode() const { return mode_; }
  double operator()(const Configuration& c) const {
    if (mode_ == Mode::Zero) return 0.0;
    return values_[static_cast<std::size_t>(c.cell) * 4 + static_cast<std::size_t>(c.orientation)];
  }

 private:
  Mode mode_ = Mode::Zero;
  std::vector<double> values_;
};

// Wait-free time-minimal cost from every configuration to any configuration
// whose cell is in `goals`, by one backward Dijkstra over (cell, heading).
inline HeuristicTable build_heuristic(const GridMap& map, const std::vector<CellId>& goals, double v_trans,
                                      double v_rot, const TraversalPolicy& policy,
                                      HeuristicTable::Mode mode = HeuristicTable::Mode::BackwardSearch) {
  if (goals.empty()) throw std::domain_error("heuristic needs at least one goal");
  if (mode == HeuristicTable::Mode::Zero) return {};

  const std::size_t n = static_cast<std::size_t>(map.num_cells()) * 4;
  std::vector<double> h(n, kInf);
  using Entry = std::pair<double, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
  for (CellId g : goals) {
    require_open_cell(map, g);
    for (Orientation o : kOrientations) {
      const std::size_t k = static_cast<std::size_t>(g) * 4 + static_cast<std::size_t>(o);
      h[k] = 0.0;
      open.push({0.0, k});
    }
  }
  const double move = map.cell_size() / v_trans;
  while (!open.empty()) {
    auto [value, key] = open.top();
    open.pop();
    if (value > h[key]) continue;
    const auto cell = static_cast<CellId>(key / 4);
    const auto heading = static_cast<Orientation>(key % 4);
    if (!policy.admits(map, cell)) continue;
    // Predecessor cell moved into `cell` heading `heading`.
    auto pred = map.step(cell, opposite(heading));
    if (!pred) continue;
    for (Orientation o : kOrientations) {
      const double cost = value + turn_duration(o, heading, v_rot) + move;
      const std::size_t pk = static_cast<std::size_t>(*pred) * 4 + static_cast<std::size_t>(o);
      if (cost < h[pk]) {
        h[pk] = cost;
        open.push({cost, pk});
      }
    }
  }
  return {HeuristicTable::Mode::BackwardSearch, std::move(h)};
}

struct PlanQuery {
  Configuration start;
  std::vector<CellId> goals;
  double current_t = 0.0;
  double v_trans = 1.0;
  double v_rot = std::numbers::pi / 2.0;
  double radius = 0.35;
  TraversalPolicy policy;
  const HeuristicTable* heuristic = nullptr;  // null: zero heuristic
  // Among goals reached at the same earliest time, the lowest rank wins.
  std::function<long long(CellId)> goal_rank;
  std::ostream* trace = nullptr;
};

struct PlanResult {
  TimedPath path;
  double arrival = 0.0;
  CellId goal = -1;
  std::size_t expansions = 0;
};

struct Successor {
  Configuration cfg;
  std::size_t interval_index = 0;
  SafeInterval interval;
  double departure = 0.0;
  double arrival = 0.0;
  double cost = 0.0;
};

namespace detail {

// Safe intervals fetched lazily per planning episode.
class IntervalCache {
 public:
  IntervalCache(const ReservationTable& table, double reference_t)
      : table_(&table), reference_t_(reference_t), index_(table.num_cells(), -1) {}

  const std::vector<SafeInterval>& get(CellId c) {
    if (index_[c] < 0) {
      index_[c] = static_cast<int>(store_.size());
      store_.push_back(table_->safe_intervals(c, reference_t_));
    }
    return store_[index_[c]];
  }

 private:
  const ReservationTable* table_;
  double reference_t_;
  std::vector<int> index_;
  std::deque<std::vector<SafeInterval>> store_;  // stable references
};

template <typename Emit>
void expand_successors(const Configuration& cfg, std::size_t interval_index, double g, const PlanQuery& q,
                       const GridMap& map, IntervalCache& cache, Emit&& emit) {
  const double cell_size = map.cell_size();
  const double move = cell_size / q.v_trans;
  const auto& here = cache.get(cfg.cell);
  for (Orientation d : kOrientations) {
    auto next = map.step(cfg.cell, d);
    if (!next || !q.policy.admits(map, *next)) continue;
    const TimedConfiguration turned{{cfg.cell, d}, q.radius, q.v_trans};
    const double turned_t = g + turn_duration(cfg.orientation, d, q.v_rot);
    if (turned_t > here[interval_index].ub + kTimeEps) continue;
    const double lb = std::max(turned_t, get_lb2(here, interval_index, turned, cell_size));
    const double ub = std::min(get_ub1(here, interval_index, turned, cell_size),
                               get_ub2(here, interval_index, turned, cell_size));
    if (lb > ub + kTimeEps) continue;
    const double arrive_lb = lb + move;
    const double arrive_ub = ub + move;
    const TimedConfiguration arrived{{*next, d}, q.radius, q.v_trans};
    const auto& there = cache.get(*next);
    for (std::size_t k = 0; k < there.size(); ++k) {
      if (there[k].lb > arrive_ub + kTimeEps) break;
      if (there[k].ub < arrive_lb - kTimeEps) continue;
      const double lb1 = get_lb1(there, k, arrived, cell_size);
      const double t = std::max(arrive_lb, lb1);
      if (t > std::min(there[k].ub, arrive_ub) + kTimeEps) continue;
      emit(Successor{{*next, d}, k, there[k], std::max(t - move, lb), t, t - g});
    }
  }
}

inline std::size_t start_interval(const std::vector<SafeInterval>& intervals, double t) {
  std::optional<std::size_t> found;
  for (std::size_t k = 0; k < intervals.size(); ++k) {
    if (intervals[k].lb <= t + kTimeEps && t <= intervals[k].ub + kTimeEps) {
      if (!found || intervals[k].ub > t + kTimeEps) found = k;
    }
  }
  if (!found) throw std::domain_error("start cell is reserved by another agent at the start time");
  return *found;
}

}  // namespace detail

// Successors of the node <cfg, interval> reached at time g.
inline std::vector<Successor> get_successors(const Configuration& cfg, const SafeInterval& interval, double g,
                                             const PlanQuery& q, const ReservationTable& table, const GridMap& map) {
  detail::IntervalCache cache(table, -kInf);
  const std::size_t i = detail::find_interval(cache.get(cfg.cell), interval);
  std::vector<Successor> out;
  detail::expand_successors(cfg, i, g, q, map, cache, [&](const Successor& s) { out.push_back(s); });
  return out;
}

// A* over <configuration, safe interval> nodes. Returns a time-minimal path
// ending in a goal cell whose safe interval is unbounded, or nullopt.
//
// Departure configurations of safe intervals are kept even when the interval
// starts before current_t: a slow agent that left a neighboring cell shortly
// before current_t still constrains arrivals there.
inline std::optional<PlanResult> plan(const PlanQuery& q, const ReservationTable& table, const GridMap& map) {
  require_open_cell(map, q.start.cell);
  if (q.goals.empty()) throw std::domain_error("plan needs at least one goal cell");
  if (!(q.v_trans > 0.0) || !(q.v_rot > 0.0)) throw std::domain_error("velocities must be positive");

  std::vector<char> is_goal(map.num_cells(), 0);
  for (CellId g : q.goals) {
    require_open_cell(map, g);
    is_goal[g] = 1;
  }
  auto h = [&](const Configuration& c) { return q.heuristic ? (*q.heuristic)(c) : 0.0; };

  detail::IntervalCache cache(table, -kInf);

  struct Node {
    Configuration cfg;
    std::size_t interval = 0;
    double g = kInf;
    int parent = -1;
    double departure = 0.0;  // departure time from the parent cell
    bool closed = false;
  };
  std::vector<Node> nodes;
  std::unordered_map<std::uint64_t, int> index;
  auto key_of = [](const Configuration& c, std::size_t interval) {
    return (static_cast<std::uint64_t>(c.cell) * 4 + static_cast<std::uint64_t>(c.orientation)) << 32 |
           static_cast<std::uint64_t>(interval);
  };

  struct Entry {
    double f;
    double g;
    CellId cell;
    int orientation;
    double lb;
    int node;
  };
  auto worse = [](const Entry& a, const Entry& b) {
    if (std::abs(a.f - b.f) > kTimeEps) return a.f > b.f;
    if (std::abs(a.g - b.g) > kTimeEps) return a.g < b.g;
    if (a.cell != b.cell) return a.cell > b.cell;
    if (a.orientation != b.orientation) return a.orientation > b.orientation;
    return a.lb > b.lb;
  };
  std::priority_queue<Entry, std::vector<Entry>, decltype(worse)> open(worse);

  const auto& start_intervals = cache.get(q.start.cell);
  const std::size_t start_i = detail::start_interval(start_intervals, q.current_t);
  nodes.push_back({q.start, start_i, q.current_t, -1, q.current_t, false});
  index[key_of(q.start, start_i)] = 0;
  open.push({q.current_t + h(q.start), q.current_t, q.start.cell, static_cast<int>(q.start.orientation),
             start_intervals[start_i].lb, 0});

  std::size_t expansions = 0;
  int best_goal = -1;
  long long best_rank = 0;

  while (!open.empty()) {
    const Entry top = open.top();
    if (best_goal >= 0 && top.f > nodes[best_goal].g + kTimeEps) break;
    open.pop();
    Node& n = nodes[top.node];
    if (n.closed || top.g > n.g + kTimeEps * 0.5) continue;
    n.closed = true;

    const bool goal = is_goal[n.cfg.cell] && std::isinf(cache.get(n.cfg.cell)[n.interval].ub);
    if (goal) {
      const long long rank = q.goal_rank ? q.goal_rank(n.cfg.cell) : 0;
      if (best_goal < 0 || rank < best_rank) {
        best_goal = top.node;
        best_rank = rank;
      }
      if (!q.goal_rank) break;
      continue;
    }

    ++expansions;
    if (q.trace) {
      *q.trace << "expand " << n.cfg.cell << ' ' << to_char(n.cfg.orientation) << ' '
               << ReservationTable::format_time(cache.get(n.cfg.cell)[n.interval].lb) << ' '
               << ReservationTable::format_time(n.g) << '\n';
    }
    const Configuration cfg = n.cfg;
    const std::size_t interval = n.interval;
    const double g = n.g;
    const int parent = top.node;
    detail::expand_successors(cfg, interval, g, q, map, cache, [&](const Successor& s) {
      const double hv = h(s.cfg);
      if (std::isinf(hv)) return;
      const auto key = key_of(s.cfg, s.interval_index);
      auto [it, inserted] = index.try_emplace(key, static_cast<int>(nodes.size()));
      if (inserted) nodes.push_back({s.cfg, s.interval_index, kInf, -1, 0.0, false});
      Node& m = nodes[it->second];
      if (m.g > s.arrival + kTimeEps) {
        m.g = s.arrival;
        m.parent = parent;
        m.departure = s.departure;
        m.closed = false;
        open.push({s.arrival + hv, s.arrival, s.cfg.cell, static_cast<int>(s.cfg.orientation), s.interval.lb,
                   it->second});
      }
    });
  }

  if (best_goal < 0) return std::nullopt;

  std::vector<int> chain;
  for (int k = best_goal; k >= 0; k = nodes[k].parent) chain.push_back(k);
  std::reverse(chain.begin(), chain.end());

  PlanResult result;
  result.path = TimedPath(q.start, q.current_t);
  const double move = map.cell_size() / q.v_trans;
  for (std::size_t k = 1; k < chain.size(); ++k) {
    const Node& child = nodes[chain[k]];
    const Configuration here = result.path.end_configuration();
    if (here.orientation != child.cfg.orientation) {
      result.path.turn(child.cfg.orientation, turn_duration(here.orientation, child.cfg.orientation, q.v_rot));
    }
    if (child.departure > result.path.end_time() + kTimeEps) result.path.wait_until(child.departure);
    result.path.move(child.cfg.cell, move);
  }
  result.arrival = nodes[best_goal].g;
  result.goal = nodes[best_goal].cfg.cell;
  result.expansions = expansions;
  return result;
}

}  // namespace mapd
