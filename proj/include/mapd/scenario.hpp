#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mapd/grid_model.hpp"
#include "mapd/kinematics.hpp"

namespace mapd {

// A token step found no admissible path; impossible on well-formed instances.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TaskSpec {
  int id = 0;
  double insert_t = 0.0;
  CellId pickup = 0;
  CellId delivery = 0;
  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

struct ScenarioConfig {
  GridMap map;
  std::vector<Configuration> agent_starts;
  AgentKinematics kinematics;
  std::vector<TaskSpec> tasks;  // sorted by insert_t
  double time_budget = 1e6;     // simulated seconds
  double wall_budget = 600.0;   // seconds of planning wall clock
  double steady_lb = 501.0;
  double steady_ub = 1100.0;
  double throughput_window = 100.0;
  // Assert TP invariants and per-step collision freedom after every token grant.
  bool check_invariants = false;
  // Run the sampled collision oracle over the executed trajectories.
  bool verify_collisions = false;
  double oracle_dt = 0.01;

  std::size_t num_agents() const { return agent_starts.size(); }
};

struct TaskRecord {
  int id = 0;
  int agent = -1;
  double insert_t = 0.0;
  double assign_t = -1.0;
  double pickup_t = -1.0;
  double done_t = -1.0;
};

struct SimulationResult {
  bool complete = false;
  std::string failure;
  std::vector<TaskRecord> tasks;  // indexed like ScenarioConfig::tasks
  std::vector<double> service_times;
  double makespan = 0.0;
  double planning_time = 0.0;  // wall-clock seconds spent in token steps
  std::vector<TimedPath> trajectories;  // full executed motion per agent
  std::vector<double> radii;
  CollisionReport collisions;
  std::vector<std::string> invariant_violations;
  std::size_t tp1_steps = 0;
  std::size_t tp2_steps = 0;
  std::size_t tp3_steps = 0;
  bool discrete = false;  // times are timesteps (space-time baseline)

  double mean_service_time() const {
    if (service_times.empty()) return 0.0;
    double s = 0.0;
    for (double v : service_times) s += v;
    return s / static_cast<double>(service_times.size());
  }
};

}  // namespace mapd
