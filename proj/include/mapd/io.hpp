#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mapd/grid_model.hpp"
#include "mapd/kinematics.hpp"
#include "mapd/scenario.hpp"
#include "mapd/simulator.hpp"

namespace mapd {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
}

inline std::string format_fixed(double v, int digits = 9) {
  if (std::isinf(v)) return "inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

inline std::string format_cell(const GridMap& map, CellId c) {
  const Coord p = map.coord(c);
  return std::to_string(p.x) + "," + std::to_string(p.y);
}

inline CellId cell_at(const GridMap& map, int x, int y, const std::string& what) {
  if (!map.in_bounds(x, y)) throw FormatError(what + " (" + std::to_string(x) + "," + std::to_string(y) + ") is off the map");
  return map.id(x, y);
}

// Non-empty lines with '#' comments stripped, paired with 1-based line numbers.
inline std::vector<std::pair<int, std::string>> content_lines(const std::string& text) {
  std::vector<std::pair<int, std::string>> out;
  std::istringstream in(text);
  std::string line;
  int no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.emplace_back(no, line);
  }
  return out;
}

// ---- tasks ---------------------------------------------------------------

inline std::string serialize_tasks(const GridMap& map, const std::vector<TaskSpec>& tasks) {
  std::string out = "# id insert_t pickup_x pickup_y delivery_x delivery_y\n";
  for (const TaskSpec& t : tasks) {
    const Coord p = map.coord(t.pickup);
    const Coord d = map.coord(t.delivery);
    out += std::to_string(t.id) + " " + format_fixed(t.insert_t, 3) + " " + std::to_string(p.x) + " " +
           std::to_string(p.y) + " " + std::to_string(d.x) + " " + std::to_string(d.y) + "\n";
  }
  return out;
}

inline std::vector<TaskSpec> parse_tasks(const GridMap& map, const std::string& text) {
  std::vector<TaskSpec> tasks;
  for (const auto& [no, line] : content_lines(text)) {
    std::istringstream in(line);
    TaskSpec t;
    int px = 0, py = 0, dx = 0, dy = 0;
    if (!(in >> t.id >> t.insert_t >> px >> py >> dx >> dy)) {
      throw FormatError("task file line " + std::to_string(no) + ": expected 'id insert_t px py dx dy'");
    }
    t.pickup = cell_at(map, px, py, "task pickup");
    t.delivery = cell_at(map, dx, dy, "task delivery");
    if (t.pickup == t.delivery) throw FormatError("task file line " + std::to_string(no) + ": pickup equals delivery");
    if (map.kind(t.pickup) != EndpointKind::Task || map.kind(t.delivery) != EndpointKind::Task) {
      throw FormatError("task file line " + std::to_string(no) + ": pickup and delivery must be task endpoints");
    }
    tasks.push_back(t);
  }
  std::stable_sort(tasks.begin(), tasks.end(), [](const TaskSpec& a, const TaskSpec& b) { return a.insert_t < b.insert_t; });
  return tasks;
}

// ---- scenarios -----------------------------------------------------------

// Key-value header followed by an optional `starts` section of `x y O` lines.
// Relative file references resolve against the scenario's directory.
//
//   map small.map
//   agents 30
//   v_free 1.0
//   v_task 1.0
//   v_rot 1.5707963267948966
//   radius 0.35
//   start_seed 1            # draw starts from non-task endpoints
//   tasks tasks.txt         # or: task_count / task_rate / task_seed
//   steady_window 501 1100
//   time_budget 1000000
//   wall_budget 600
//   starts
//   1 3 N
inline ScenarioConfig parse_scenario(const std::string& text, const std::filesystem::path& base_dir = {}) {
  ScenarioConfig sc;
  std::map<std::string, std::vector<std::string>> kv;
  std::vector<std::pair<int, std::string>> start_lines;
  bool in_starts = false;
  for (const auto& [no, line] : content_lines(text)) {
    std::istringstream in(line);
    std::string key;
    in >> key;
    if (key == "starts") {
      in_starts = true;
      continue;
    }
    if (in_starts) {
      start_lines.emplace_back(no, line);
      continue;
    }
    std::vector<std::string> values;
    for (std::string v; in >> v;) values.push_back(v);
    if (values.empty()) throw FormatError("scenario line " + std::to_string(no) + ": key '" + key + "' has no value");
    kv[key] = values;
  }
  auto take = [&](const std::string& key) -> std::optional<std::vector<std::string>> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    auto v = it->second;
    kv.erase(it);
    return v;
  };
  auto number = [&](const std::string& key, double fallback) {
    auto v = take(key);
    if (!v) return fallback;
    try {
      return std::stod(v->front());
    } catch (const std::exception&) {
      throw FormatError("scenario key '" + key + "' expects a number, got '" + v->front() + "'");
    }
  };
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  };

  const auto map_ref = take("map");
  if (!map_ref) throw FormatError("scenario lacks a 'map' entry");
  sc.map = load_map(read_file(resolve(map_ref->front())));

  sc.kinematics.v_free = number("v_free", 1.0);
  sc.kinematics.v_task = number("v_task", 1.0);
  sc.kinematics.v_rot = number("v_rot", std::numbers::pi / 2.0);
  sc.kinematics.radius = number("radius", 0.35);
  sc.time_budget = number("time_budget", sc.time_budget);
  sc.wall_budget = number("wall_budget", sc.wall_budget);
  sc.throughput_window = number("throughput_window", sc.throughput_window);
  if (auto w = take("steady_window")) {
    if (w->size() != 2) throw FormatError("steady_window expects two numbers");
    sc.steady_lb = std::stod((*w)[0]);
    sc.steady_ub = std::stod((*w)[1]);
  }
  const auto agents = static_cast<long>(number("agents", -1.0));
  const auto start_seed = static_cast<std::uint64_t>(number("start_seed", 0.0));

  for (const auto& [no, line] : start_lines) {
    std::istringstream in(line);
    int x = 0, y = 0;
    std::string o = "N";
    if (!(in >> x >> y)) throw FormatError("scenario line " + std::to_string(no) + ": expected 'x y [O]'");
    in >> o;
    if (o.size() != 1) throw FormatError("scenario line " + std::to_string(no) + ": bad orientation '" + o + "'");
    sc.agent_starts.push_back({cell_at(sc.map, x, y, "agent start"), orientation_from_char(o[0])});
  }
  if (sc.agent_starts.empty()) {
    auto parking = sc.map.non_task_endpoints();
    const std::size_t n = agents < 0 ? parking.size() : static_cast<std::size_t>(agents);
    if (n > parking.size()) throw FormatError("scenario asks for more agents than non-task endpoints");
    if (n < parking.size()) {
      std::mt19937_64 rng(start_seed);
      std::shuffle(parking.begin(), parking.end(), rng);
      parking.resize(n);
      std::sort(parking.begin(), parking.end());
    }
    for (CellId c : parking) sc.agent_starts.push_back({c, Orientation::North});
  } else if (agents >= 0 && static_cast<std::size_t>(agents) != sc.agent_starts.size()) {
    throw FormatError("scenario lists " + std::to_string(sc.agent_starts.size()) + " starts for " +
                      std::to_string(agents) + " agents");
  }
  for (std::size_t a = 0; a < sc.agent_starts.size(); ++a) {
    const CellId c = sc.agent_starts[a].cell;
    if (sc.map.kind(c) != EndpointKind::NonTask) {
      throw FormatError("agent " + std::to_string(a) + " does not start on a non-task endpoint");
    }
    for (std::size_t b = 0; b < a; ++b) {
      if (sc.agent_starts[b].cell == c) throw FormatError("agents share a start cell");
    }
  }

  if (auto tasks = take("tasks")) {
    sc.tasks = parse_tasks(sc.map, read_file(resolve(tasks->front())));
  } else {
    const double count = number("task_count", -1.0);
    if (count < 0) throw FormatError("scenario needs 'tasks' or 'task_count'");
    const double rate = number("task_rate", 2.0);
    const auto seed = static_cast<std::uint64_t>(number("task_seed", 0.0));
    sc.tasks = generate_tasks(sc.map, static_cast<std::size_t>(count), rate, seed);
  }
  if (!kv.empty()) throw FormatError("unknown scenario key '" + kv.begin()->first + "'");
  return sc;
}

inline ScenarioConfig load_scenario(const std::filesystem::path& path) {
  return parse_scenario(read_file(path), path.parent_path());
}

// ---- path dumps ----------------------------------------------------------

inline std::string orientation_field(const Segment& s) {
  std::string out(1, to_char(s.from_orientation));
  if (s.kind == Segment::Kind::Turn) {
    out += '>';
    out += to_char(s.orientation);
  }
  return out;
}

// Header lines `cell_size L`, `radius <agent> R` and `start <agent> x,y O t`,
// then one segment per line: `agent kind cell_from cell_to t_start t_end orientation`.
inline std::string serialize_paths(const GridMap& map, const std::vector<TimedPath>& paths,
                                   const std::vector<double>& radii) {
  std::string out = "cell_size " + format_fixed(map.cell_size()) + "\n";
  for (std::size_t a = 0; a < paths.size(); ++a) {
    out += "radius " + std::to_string(a) + " " + format_fixed(radii.at(a)) + "\n";
    out += "start " + std::to_string(a) + " " + format_cell(map, paths[a].start().cell) + " " +
           to_char(paths[a].start().orientation) + " " + format_fixed(paths[a].start_time()) + "\n";
  }
  for (std::size_t a = 0; a < paths.size(); ++a) {
    for (const Segment& s : paths[a].segments()) {
      out += std::to_string(a) + " " + to_string(s.kind) + " " + format_cell(map, s.from) + " " +
             format_cell(map, s.to) + " " + format_fixed(s.start) + " " + format_fixed(s.end) + " " +
             orientation_field(s) + "\n";
    }
  }
  return out;
}

struct PathDump {
  double cell_size = 1.0;
  int width = 0;  // synthetic grid width covering every referenced cell
  int height = 0;
  std::vector<AgentTrajectory> agents;
};

// Reads a path dump without any map: cells are addressed by coordinates.
inline PathDump parse_paths(const std::string& text) {
  struct Raw {
    std::optional<double> radius;
    std::optional<std::tuple<int, int, char, double>> start;
    std::vector<std::tuple<std::string, int, int, int, int, double, double, std::string>> segments;
  };
  PathDump dump;
  std::map<int, Raw> raw;
  int max_x = 0, max_y = 0;
  auto parse_xy = [&](const std::string& s, int no) {
    int x = 0, y = 0;
    char comma = 0;
    std::istringstream in(s);
    if (!(in >> x >> comma >> y) || comma != ',' || x < 0 || y < 0) {
      throw FormatError("path dump line " + std::to_string(no) + ": bad cell '" + s + "'");
    }
    max_x = std::max(max_x, x);
    max_y = std::max(max_y, y);
    return std::pair{x, y};
  };
  for (const auto& [no, line] : content_lines(text)) {
    std::istringstream in(line);
    std::string first;
    in >> first;
    if (first == "cell_size") {
      if (!(in >> dump.cell_size) || !(dump.cell_size > 0.0)) throw FormatError("bad cell_size line");
      continue;
    }
    if (first == "radius") {
      int a = 0;
      double r = 0.0;
      if (!(in >> a >> r)) throw FormatError("path dump line " + std::to_string(no) + ": bad radius line");
      raw[a].radius = r;
      continue;
    }
    if (first == "start") {
      int a = 0;
      std::string cell, o;
      double t = 0.0;
      if (!(in >> a >> cell >> o >> t) || o.size() != 1) {
        throw FormatError("path dump line " + std::to_string(no) + ": bad start line");
      }
      auto [x, y] = parse_xy(cell, no);
      raw[a].start = std::tuple{x, y, o[0], t};
      continue;
    }
    int a = 0;
    try {
      a = std::stoi(first);
    } catch (const std::exception&) {
      throw FormatError("path dump line " + std::to_string(no) + ": unknown record '" + first + "'");
    }
    std::string kind, from, to, orient;
    double t0 = 0.0, t1 = 0.0;
    if (!(in >> kind >> from >> to >> t0 >> t1 >> orient)) {
      throw FormatError("path dump line " + std::to_string(no) + ": expected 'agent kind from to t_start t_end O'");
    }
    auto [fx, fy] = parse_xy(from, no);
    auto [tx, ty] = parse_xy(to, no);
    raw[a].segments.emplace_back(kind, fx, fy, tx, ty, t0, t1, orient);
  }
  dump.width = max_x + 1;
  dump.height = max_y + 1;
  auto id = [&](int x, int y) { return y * dump.width + x; };
  for (auto& [a, r] : raw) {
    if (a != static_cast<int>(dump.agents.size())) throw FormatError("path dump agents must be numbered 0..n-1");
    if (!r.radius) throw FormatError("path dump lacks a radius for agent " + std::to_string(a));
    if (!r.start) throw FormatError("path dump lacks a start for agent " + std::to_string(a));
    auto [sx, sy, so, st] = *r.start;
    TimedPath path({id(sx, sy), orientation_from_char(so)}, st);
    for (auto& [kind, fx, fy, tx, ty, t0, t1, orient] : r.segments) {
      Segment s;
      s.from = id(fx, fy);
      s.to = id(tx, ty);
      s.start = t0;
      s.end = t1;
      s.from_orientation = orientation_from_char(orient.at(0));
      s.orientation = s.from_orientation;
      if (kind == "turn") {
        if (orient.size() != 3 || orient[1] != '>') throw FormatError("turn segments need an 'A>B' orientation");
        s.kind = Segment::Kind::Turn;
        s.orientation = orientation_from_char(orient[2]);
      } else if (kind == "wait") {
        s.kind = Segment::Kind::Wait;
      } else if (kind == "move") {
        s.kind = Segment::Kind::Move;
      } else {
        throw FormatError("unknown segment kind '" + kind + "'");
      }
      path.push(s);
    }
    dump.agents.push_back({std::move(path), *r.radius});
  }
  return dump;
}

// ---- metrics -------------------------------------------------------------

inline std::string metrics_csv(const SimulationResult& r, const ThroughputStats& th,
                               const SimulationResult* discrete = nullptr) {
  std::string header = "service_time_mean,makespan,planning_time,throughput,steady_throughput";
  std::string row = format_fixed(r.mean_service_time(), 6) + "," + format_fixed(r.makespan, 6) + "," +
                    format_fixed(r.planning_time, 6) + "," + format_fixed(th.average, 6) + "," +
                    format_fixed(th.steady, 6);
  if (discrete) {
    header += ",discrete_service_time,discrete_makespan";
    row += "," + format_fixed(discrete->mean_service_time(), 6) + "," + format_fixed(discrete->makespan, 0);
  }
  return header + "\n" + row + "\n";
}

inline std::string tasks_csv(const SimulationResult& r) {
  std::string out = "id,agent,insert_t,assign_t,pickup_t,done_t,service_time\n";
  for (const TaskRecord& t : r.tasks) {
    out += std::to_string(t.id) + "," + std::to_string(t.agent) + "," + format_fixed(t.insert_t, 6) + "," +
           format_fixed(t.assign_t, 6) + "," + format_fixed(t.pickup_t, 6) + "," + format_fixed(t.done_t, 6) + "," +
           (t.done_t >= 0.0 ? format_fixed(t.done_t - t.insert_t, 6) : std::string("nan")) + "\n";
  }
  return out;
}

inline std::string throughput_csv(const ThroughputStats& th) {
  std::string out = "t,throughput\n";
  for (std::size_t t = 0; t < th.series.size(); ++t) out += std::to_string(t) + "," + format_fixed(th.series[t], 4) + "\n";
  return out;
}

// Time-ordered task events: insert, assign, pickup, done.
inline std::string event_log(const SimulationResult& r) {
  struct Event {
    double t;
    int order;
    std::string text;
  };
  std::vector<Event> events;
  for (const TaskRecord& t : r.tasks) {
    const std::string id = std::to_string(t.id);
    events.push_back({t.insert_t, 0, "insert task " + id});
    if (t.assign_t >= 0.0) events.push_back({t.assign_t, 1, "assign task " + id + " agent " + std::to_string(t.agent)});
    if (t.pickup_t >= 0.0) events.push_back({t.pickup_t, 2, "pickup task " + id + " agent " + std::to_string(t.agent)});
    if (t.done_t >= 0.0) events.push_back({t.done_t, 3, "done task " + id + " agent " + std::to_string(t.agent)});
  }
  std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
    return a.t != b.t ? a.t < b.t : a.order < b.order;
  });
  std::string out;
  for (const Event& e : events) out += format_fixed(e.t) + " " + e.text + "\n";
  return out;
}

}  // namespace mapd
