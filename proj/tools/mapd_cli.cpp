#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "mapd/mapd.hpp"

namespace fs = std::filesystem;
using namespace mapd;

namespace {

fs::path default_out_dir() {
  if (const char* env = std::getenv("MAPD_OUT_DIR"); env && *env) return env;
  return "out";
}

struct RunOptions {
  std::string scenario;
  std::string out;
  bool check = false;
  double dt = 0.01;
  std::optional<std::uint64_t> task_seed;
};

ScenarioConfig load_for_run(const RunOptions& o) {
  ScenarioConfig sc = load_scenario(o.scenario);
  if (o.task_seed) {
    // Regenerate the stream with the same size and rate under a new seed.
    const double rate = sc.tasks.size() > 1 && sc.tasks.back().insert_t > 0.0
                            ? static_cast<double>(sc.tasks.size() - 1) / sc.tasks.back().insert_t
                            : 2.0;
    sc.tasks = generate_tasks(sc.map, sc.tasks.size(), rate, *o.task_seed);
  }
  sc.check_invariants = o.check;
  sc.verify_collisions = o.check;
  sc.oracle_dt = o.dt;
  return sc;
}

int report_failure(const SimulationResult& r) {
  int status = 0;
  if (!r.complete) {
    std::cerr << "run incomplete: " << r.failure << "\n";
    status = 2;
  }
  if (!r.invariant_violations.empty()) {
    std::cerr << r.invariant_violations.size() << " invariant violations, first: " << r.invariant_violations.front()
              << "\n";
    status = 3;
  }
  if (!r.collisions.empty()) {
    std::cerr << r.collisions.total << " collision samples\n";
    status = 3;
  }
  return status;
}

int cmd_run(const RunOptions& o) {
  const ScenarioConfig sc = load_for_run(o);
  const SimulationResult r = run_lifelong(sc);
  const ThroughputStats th = compute_throughput(r, sc.throughput_window, sc.steady_lb, sc.steady_ub);
  const fs::path out = o.out.empty() ? default_out_dir() : fs::path(o.out);
  write_file(out / "metrics.csv", metrics_csv(r, th));
  write_file(out / "tasks.csv", tasks_csv(r));
  write_file(out / "throughput.csv", throughput_csv(th));
  write_file(out / "events.log", event_log(r));
  write_file(out / "paths.txt", serialize_paths(sc.map, r.trajectories, r.radii));
  std::cout << metrics_csv(r, th);
  return report_failure(r);
}

int cmd_run_discrete(const RunOptions& o) {
  const ScenarioConfig sc = load_for_run(o);
  const SimulationResult r = run_lifelong_discrete(sc);
  const ThroughputStats th = compute_throughput(r, sc.throughput_window, sc.steady_lb, sc.steady_ub);
  const fs::path out = o.out.empty() ? default_out_dir() : fs::path(o.out);
  write_file(out / "metrics.csv", metrics_csv(r, th, &r));
  write_file(out / "tasks.csv", tasks_csv(r));
  write_file(out / "throughput.csv", throughput_csv(th));
  write_file(out / "events.log", event_log(r));
  std::cout << metrics_csv(r, th, &r);
  return r.complete ? 0 : (std::cerr << "run incomplete: " << r.failure << "\n", 2);
}

int cmd_verify(const std::string& paths, double dt, double tolerance) {
  const PathDump dump = parse_paths(read_file(paths));
  CollisionCheckOptions opt;
  opt.dt = dt;
  opt.clearance_tolerance = tolerance;
  const CollisionReport report = check_collision_free(dump.agents, dump.width, dump.cell_size, opt);
  std::cout << "agents " << dump.agents.size() << " samples " << report.samples << " violations " << report.total
            << "\n";
  for (const CollisionViolation& v : report.violations) {
    std::cout << "t=" << format_fixed(v.t) << " agents " << v.agent_a << " " << v.agent_b << " distance "
              << format_fixed(v.distance) << " required " << format_fixed(v.required) << "\n";
  }
  return report.empty() ? 0 : 1;
}

int cmd_bench(const std::vector<std::string>& scenarios, unsigned threads, const std::string& out_dir, bool check) {
  const fs::path out = out_dir.empty() ? default_out_dir() : fs::path(out_dir);
  std::vector<std::string> rows(scenarios.size());
  std::vector<int> status(scenarios.size(), 0);
  std::atomic<std::size_t> next{0};
  std::mutex log_lock;
  auto worker = [&]() {
    for (std::size_t i = next++; i < scenarios.size(); i = next++) {
      try {
        RunOptions o{scenarios[i], "", check, 0.01, std::nullopt};
        const ScenarioConfig sc = load_for_run(o);
        const SimulationResult r = run_lifelong(sc);
        const ThroughputStats th = compute_throughput(r, sc.throughput_window, sc.steady_lb, sc.steady_ub);
        const fs::path dir = out / (std::to_string(i) + "_" + fs::path(scenarios[i]).stem().string());
        write_file(dir / "metrics.csv", metrics_csv(r, th));
        write_file(dir / "throughput.csv", throughput_csv(th));
        const std::string csv = metrics_csv(r, th);
        rows[i] = scenarios[i] + "," + (r.complete ? "1" : "0") + "," + csv.substr(csv.find('\n') + 1);
        rows[i].pop_back();
        status[i] = report_failure(r);
      } catch (const std::exception& e) {
        std::scoped_lock guard(log_lock);
        std::cerr << scenarios[i] << ": " << e.what() << "\n";
        status[i] = 1;
        rows[i] = scenarios[i] + ",0,,,,,";
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < std::max(1u, threads); ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  std::string summary = "scenario,complete,service_time_mean,makespan,planning_time,throughput,steady_throughput\n";
  for (const auto& row : rows) summary += row + "\n";
  write_file(out / "summary.csv", summary);
  std::cout << summary;
  for (int s : status) {
    if (s != 0) return s;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lifelong multi-agent pickup and delivery with continuous-time safe-interval planning"};
  app.require_subcommand(1);

  RunOptions run_opts;
  std::uint64_t task_seed = 0;
  auto add_run_options = [&](CLI::App* sub) {
    sub->add_option("scenario", run_opts.scenario, "Scenario file")->required()->check(CLI::ExistingFile);
    sub->add_option("-o,--out", run_opts.out, "Output directory (default: $MAPD_OUT_DIR or ./out)");
    sub->add_option("--task-seed", task_seed, "Regenerate the task stream with this seed");
    sub->add_flag("--check", run_opts.check, "Assert token invariants and run the collision oracle");
    sub->add_option("--dt", run_opts.dt, "Collision oracle sampling step in seconds")->check(CLI::PositiveNumber);
  };
  auto* run = app.add_subcommand("run", "Run token passing with safe-interval planning");
  add_run_options(run);
  auto* run_discrete = app.add_subcommand("run-discrete", "Run token passing with discrete space-time A*");
  add_run_options(run_discrete);

  std::string paths_file;
  double verify_dt = 0.01;
  double tolerance = 1e-6;
  auto* verify = app.add_subcommand("verify", "Check a path dump for collisions");
  verify->add_option("paths", paths_file, "Path dump file")->required()->check(CLI::ExistingFile);
  verify->add_option("--dt", verify_dt, "Sampling step in seconds")->check(CLI::PositiveNumber);
  verify->add_option("--tolerance", tolerance, "Allowed penetration in meters");

  std::string family = "small";
  WarehouseParams params;
  std::uint64_t map_seed = 1;
  std::string map_out;
  auto* gen_map = app.add_subcommand("gen-map", "Generate a warehouse map");
  gen_map->add_option("--family", family, "small or large")->check(CLI::IsMember({"small", "large"}));
  gen_map->add_option("--agents", params.num_agents, "Number of start cells to draw");
  gen_map->add_option("--start-columns", params.start_columns_per_side, "Start columns per side");
  gen_map->add_option("--blocks-x", params.blocks_x, "Blocks per row");
  gen_map->add_option("--blocks-y", params.blocks_y, "Blocks per column");
  gen_map->add_option("--block-width", params.block_width, "Block width in cells");
  gen_map->add_option("--block-height", params.block_height, "Block height in cells (1 or 2)");
  gen_map->add_option("--seed", map_seed, "Start cell draw seed");
  gen_map->add_option("-o,--out", map_out, "Output map file (default: stdout)");

  std::string task_map;
  std::size_t task_count = 1000;
  double task_rate = 2.0;
  std::uint64_t gen_task_seed = 0;
  std::string tasks_out;
  auto* gen_tasks = app.add_subcommand("gen-tasks", "Generate a task stream for a map");
  gen_tasks->add_option("--map", task_map, "Map file")->required()->check(CLI::ExistingFile);
  gen_tasks->add_option("--n", task_count, "Number of tasks");
  gen_tasks->add_option("--rate", task_rate, "Tasks inserted per second")->check(CLI::PositiveNumber);
  gen_tasks->add_option("--seed", gen_task_seed, "Random seed");
  gen_tasks->add_option("-o,--out", tasks_out, "Output task file (default: stdout)");

  std::vector<std::string> bench_scenarios;
  unsigned threads = 1;
  std::string bench_out;
  bool bench_check = false;
  auto* bench = app.add_subcommand("bench", "Run several scenarios and summarize their metrics");
  bench->add_option("scenarios", bench_scenarios, "Scenario files")->required()->check(CLI::ExistingFile);
  bench->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  bench->add_option("-o,--out", bench_out, "Output directory (default: $MAPD_OUT_DIR or ./out)");
  bench->add_flag("--check", bench_check, "Assert token invariants and run the collision oracle");

  CLI11_PARSE(app, argc, argv);
  if (run->count("--task-seed") + run_discrete->count("--task-seed") > 0) run_opts.task_seed = task_seed;

  try {
    if (*run) return cmd_run(run_opts);
    if (*run_discrete) return cmd_run_discrete(run_opts);
    if (*verify) return cmd_verify(paths_file, verify_dt, tolerance);
    if (*gen_map) {
      const WarehouseFamily fam = family == "large" ? WarehouseFamily::Large : WarehouseFamily::Small;
      WarehouseParams p = WarehouseParams::defaults(fam);
      auto override_int = [&](const char* flag, int& dst, int src) {
        if (gen_map->count(flag) > 0) dst = src;
      };
      override_int("--agents", p.num_agents, params.num_agents);
      override_int("--start-columns", p.start_columns_per_side, params.start_columns_per_side);
      override_int("--blocks-x", p.blocks_x, params.blocks_x);
      override_int("--blocks-y", p.blocks_y, params.blocks_y);
      override_int("--block-width", p.block_width, params.block_width);
      override_int("--block-height", p.block_height, params.block_height);
      const Warehouse w = generate_warehouse(fam, p, map_seed);
      if (map_out.empty()) {
        std::cout << serialize_map(w.map);
      } else {
        write_file(map_out, serialize_map(w.map));
      }
      return 0;
    }
    if (*gen_tasks) {
      const GridMap map = load_map(read_file(task_map));
      const std::string text = serialize_tasks(map, generate_tasks(map, task_count, task_rate, gen_task_seed));
      if (tasks_out.empty()) {
        std::cout << text;
      } else {
        write_file(tasks_out, text);
      }
      return 0;
    }
    if (*bench) return cmd_bench(bench_scenarios, threads, bench_out, bench_check);
  } catch (const GenerationError& e) {
    std::cerr << "generation error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
