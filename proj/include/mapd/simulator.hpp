#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "mapd/grid_model.hpp"
#include "mapd/scenario.hpp"

namespace mapd {

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class WarehouseFamily : std::uint8_t { Small, Large };

// Rectangular blocks of task endpoints separated by one-cell aisles, flanked
// on the left and right by columns of potential start cells. Every start
// column is followed (towards the blocks) by an aisle column, and the top and
// bottom rows are aisles.
struct WarehouseParams {
  int start_columns_per_side = 1;
  int blocks_x = 4;
  int blocks_y = 9;
  int block_width = 10;
  int block_height = 2;
  int num_agents = 30;
  double cell_size = 1.0;

  static WarehouseParams defaults(WarehouseFamily family) {
    WarehouseParams p;
    if (family == WarehouseFamily::Large) {
      p.start_columns_per_side = 2;
      p.blocks_x = 7;
      p.blocks_y = 22;
      p.block_width = 10;
      p.num_agents = 250;
    }
    return p;
  }
};

struct Warehouse {
  GridMap map;
  std::vector<CellId> potential_starts;
  std::vector<Configuration> starts;  // facing north
};

inline int warehouse_width(const WarehouseParams& p) {
  return 4 * p.start_columns_per_side + p.blocks_x * p.block_width + (p.blocks_x - 1);
}

inline int warehouse_height(const WarehouseParams& p) { return 1 + p.blocks_y * (p.block_height + 1); }

// Start cells are drawn from the potential start cells with `seed`; the
// remaining potential start cells become task endpoints.
inline Warehouse generate_warehouse(WarehouseFamily family, const WarehouseParams& p, std::uint64_t seed) {
  (void)family;
  if (p.start_columns_per_side < 1) throw GenerationError("layout needs at least one start column per side");
  if (p.blocks_x < 1 || p.blocks_y < 1 || p.block_width < 1) throw GenerationError("layout needs at least one block");
  if (p.block_height < 1 || p.block_height > 2) {
    throw GenerationError("block height must be 1 or 2 so every task endpoint borders an aisle");
  }
  if (p.num_agents < 1) throw GenerationError("layout needs at least one agent");
  if (!(p.cell_size > 0.0)) throw GenerationError("cell size must be positive");

  const int w = warehouse_width(p);
  const int h = warehouse_height(p);
  if (h < 3) throw GenerationError("layout needs aisle rows around the start cells");
  GridMap map(w, h, p.cell_size);
  const int flank = 2 * p.start_columns_per_side;

  std::vector<CellId> potential;
  for (int k = 0; k < p.start_columns_per_side; ++k) {
    for (int x : {2 * k, w - 1 - 2 * k}) {
      for (int y = 1; y + 1 < h; ++y) potential.push_back(map.id(x, y));
    }
  }
  std::sort(potential.begin(), potential.end());
  for (int bx = 0; bx < p.blocks_x; ++bx) {
    for (int by = 0; by < p.blocks_y; ++by) {
      const int x0 = flank + bx * (p.block_width + 1);
      const int y0 = 1 + by * (p.block_height + 1);
      for (int dx = 0; dx < p.block_width; ++dx) {
        for (int dy = 0; dy < p.block_height; ++dy) map.set_kind(map.id(x0 + dx, y0 + dy), EndpointKind::Task);
      }
    }
  }
  if (static_cast<int>(potential.size()) < p.num_agents) {
    throw GenerationError("layout has " + std::to_string(potential.size()) + " potential start cells for " +
                          std::to_string(p.num_agents) + " agents");
  }

  std::mt19937_64 rng(seed);
  std::vector<CellId> shuffled = potential;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  std::vector<CellId> chosen(shuffled.begin(), shuffled.begin() + p.num_agents);
  std::sort(chosen.begin(), chosen.end());
  for (CellId c : potential) map.set_kind(c, EndpointKind::Task);
  for (CellId c : chosen) map.set_kind(c, EndpointKind::NonTask);

  const auto report = validate_well_formed(map, static_cast<std::size_t>(p.num_agents), std::size_t{0});
  if (!report) throw GenerationError("generated layout is not well-formed: " + report.detail);

  Warehouse out{std::move(map), std::move(potential), {}};
  for (CellId c : chosen) out.starts.push_back({c, Orientation::North});
  return out;
}

// `n` tasks with distinct pickup and delivery drawn uniformly from the task
// endpoints; task i is inserted at floor(i / rate).
inline std::vector<TaskSpec> generate_tasks(const GridMap& map, std::size_t n, double rate, std::uint64_t seed) {
  const auto ends = map.task_endpoints();
  if (ends.size() < 2) throw std::domain_error("task generation needs at least two task endpoints");
  if (!(rate > 0.0)) throw std::domain_error("task rate must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, ends.size() - 1);
  std::vector<TaskSpec> tasks;
  tasks.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const CellId pickup = ends[pick(rng)];
    CellId delivery = pickup;
    while (delivery == pickup) delivery = ends[pick(rng)];
    tasks.push_back({static_cast<int>(i), std::floor(static_cast<double>(i) / rate + 1e-12), pickup, delivery});
  }
  return tasks;
}

struct ThroughputStats {
  std::vector<double> series;  // series[t] for integer t >= 0
  double average = 0.0;        // over t with positive throughput
  double steady = 0.0;         // over integer t in [steady_lb, steady_ub]
  double steady_lb = 0.0;
  double steady_ub = 0.0;
  bool defined = false;        // false when no task was done
};

inline ThroughputStats compute_throughput(const std::vector<double>& done_times, double window = 100.0,
                                          double steady_lb = 501.0, double steady_ub = 1100.0) {
  if (!(window > 0.0)) throw std::domain_error("throughput window must be positive");
  ThroughputStats out;
  out.steady_lb = steady_lb;
  out.steady_ub = steady_ub;
  std::vector<double> done = done_times;
  std::sort(done.begin(), done.end());
  const double last = done.empty() ? 0.0 : done.back();
  const auto horizon = static_cast<std::size_t>(std::ceil(std::max(last + window, steady_ub)));
  out.series.assign(horizon + 1, 0.0);
  // Count of done times in (t - window, t].
  for (std::size_t t = 0; t <= horizon; ++t) {
    const double td = static_cast<double>(t);
    const auto hi = std::upper_bound(done.begin(), done.end(), td);
    const auto lo = std::upper_bound(done.begin(), done.end(), td - window);
    out.series[t] = static_cast<double>(hi - lo) / window;
  }
  double sum = 0.0;
  std::size_t n = 0;
  for (double v : out.series) {
    if (v > 0.0) {
      sum += v;
      ++n;
    }
  }
  out.defined = n > 0;
  out.average = n > 0 ? sum / static_cast<double>(n) : 0.0;
  double ssum = 0.0;
  std::size_t sn = 0;
  for (auto t = static_cast<std::size_t>(std::max(0.0, std::ceil(steady_lb))); t <= horizon && t <= steady_ub; ++t) {
    ssum += out.series[t];
    ++sn;
  }
  out.steady = sn > 0 ? ssum / static_cast<double>(sn) : 0.0;
  return out;
}

inline std::vector<double> completion_times(const SimulationResult& r) {
  std::vector<double> out;
  for (const TaskRecord& t : r.tasks) {
    if (t.done_t >= 0.0) out.push_back(t.done_t);
  }
  return out;
}

inline ThroughputStats compute_throughput(const SimulationResult& r, double window = 100.0,
                                          double steady_lb = 501.0, double steady_ub = 1100.0) {
  return compute_throughput(completion_times(r), window, steady_lb, steady_ub);
}

// Scenario for a generated warehouse with the experiment defaults.
inline ScenarioConfig warehouse_scenario(const Warehouse& w, std::size_t num_tasks, double rate, double v_task,
                                         std::uint64_t task_seed) {
  ScenarioConfig sc;
  sc.map = w.map;
  sc.agent_starts = w.starts;
  sc.kinematics = {0.35, 1.0, v_task, std::numbers::pi / 2.0};
  sc.tasks = generate_tasks(w.map, num_tasks, rate, task_seed);
  return sc;
}

}  // namespace mapd
