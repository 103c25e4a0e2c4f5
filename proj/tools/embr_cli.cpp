// Command-line front end for the toolkit: runs mission scenarios, plans
// paths on saved maps, benchmarks the planners, and recomputes run reports
// from previously written logs.
#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "embr/planner.hpp"
#include "embr/sim/scenario.hpp"
#include "embr/sim/simulator.hpp"
#include "embr/voxel_grid.hpp"

namespace {

embr::Vec3 parse_xyz(const std::string& text) {
  double x = 0, y = 0, z = 0;
  char trailing = 0;
  if (std::sscanf(text.c_str(), "%lf,%lf,%lf%c", &x, &y, &z, &trailing) != 3)
    throw CLI::ValidationError("expected x,y,z but got '" + text + "'");
  return {x, y, z};
}

// First and last free-cell centers in storage order: a deterministic
// endpoint pair that tends to span the map diagonally.
std::pair<embr::Vec3, embr::Vec3> endpoint_pair(const embr::VoxelGrid& map) {
  std::optional<embr::Vec3> first, last;
  const embr::Idx3 d = map.dims();
  for (int z = 0; z < d.z(); ++z)
    for (int y = 0; y < d.y(); ++y)
      for (int x = 0; x < d.x(); ++x) {
        const embr::Idx3 c(x, y, z);
        if (map.occupied(c)) continue;
        if (!first) first = map.index_to_center(c);
        last = map.index_to_center(c);
      }
  if (!first) throw std::runtime_error("map has no free cells");
  return {*first, *last};
}

int cmd_run(const std::string& scenario_file, std::optional<std::uint64_t> seed,
            const std::string& out_dir, std::optional<long> ticks, const std::string& level) {
  embr::Scenario sc = embr::load_scenario(scenario_file);
  if (seed) sc.seed = *seed;
  if (ticks) {
    if (*ticks <= 0) throw CLI::ValidationError("--ticks must be positive");
    sc.duration_ticks = *ticks;
  }
  std::filesystem::create_directories(out_dir);
  embr::Simulator sim(sc);
  const embr::RunReport rep = sim.run(out_dir);
  if (level == "debug") {
    std::cout << embr::report_to_json(rep).dump(2) << "\n";
  } else if (level == "info") {
    std::cout << "ran " << rep.ticks << " ticks in " << rep.wall_clock_seconds << " s; fires "
              << rep.fires_extinguished << "/" << rep.fires_total << " extinguished; "
              << rep.coordination_violations << " coordination violations\n";
    for (const embr::RobotReport& r : rep.robots)
      std::cout << "  " << r.id << ": pos_rmse " << r.pos_rmse << " m, yaw_rmse " << r.yaw_rmse
                << " rad, path " << r.path_length << " m, " << r.mcl_updates
                << " filter updates\n";
    std::cout << "logs written to " << out_dir << "\n";
  }
  return 0;
}

int cmd_plan(const std::string& map_file, const std::string& start, const std::string& goal,
             const std::string& algo, const std::string& mode, double inflate_radius,
             const std::string& out_file) {
  const embr::VoxelGrid map = embr::load_map(map_file);
  embr::PlanRequest req;
  req.start = parse_xyz(start);
  req.goal = parse_xyz(goal);
  req.map = &map;
  req.inflation_radius = inflate_radius;
  req.mode = mode == "2d" ? embr::PlanMode::TwoD : embr::PlanMode::ThreeD;
  embr::Path path;
  try {
    if (algo == "astar")
      path = embr::plan_a_star(req);
    else if (algo == "theta")
      path = embr::plan_theta_star(req);
    else
      path = embr::plan_lazy_theta_star(req);
  } catch (const embr::UnreachableError& e) {
    std::cerr << "no path: " << e.what() << "\n";
    return 1;
  }
  embr::write_path_csv(out_file, path);
  std::cout << "path of " << path.waypoints.size() << " waypoints, length " << path.total_length
            << " m (" << path.expansions << " expansions, " << path.los_checks_performed
            << " line-of-sight checks) written to " << out_file << "\n";
  return 0;
}

int cmd_bench(const std::string& maps_dir, const std::string& out_file) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(maps_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".map")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw std::runtime_error("no .map files in " + maps_dir);

  nlohmann::json out;
  out["maps"] = nlohmann::json::array();
  for (const auto& file : files) {
    const embr::VoxelGrid map = embr::load_map(file.string());
    const auto [start, goal] = endpoint_pair(map);
    nlohmann::json entry;
    entry["file"] = file.filename().string();
    entry["start"] = {start.x(), start.y(), start.z()};
    entry["goal"] = {goal.x(), goal.y(), goal.z()};
    embr::PlanRequest req;
    req.start = start;
    req.goal = goal;
    req.map = &map;
    const struct {
      const char* name;
      embr::Path (*plan)(const embr::PlanRequest&);
    } algos[] = {{"astar", embr::plan_a_star},
                 {"theta", embr::plan_theta_star},
                 {"lazytheta", embr::plan_lazy_theta_star}};
    for (const auto& algo : algos) {
      nlohmann::json r;
      const auto t0 = std::chrono::steady_clock::now();
      try {
        const embr::Path path = algo.plan(req);
        r["reachable"] = true;
        r["path_length"] = path.total_length;
        r["waypoints"] = path.waypoints.size();
        r["expansions"] = path.expansions;
        r["los_checks"] = path.los_checks_performed;
      } catch (const embr::UnreachableError&) {
        r["reachable"] = false;
      }
      const auto t1 = std::chrono::steady_clock::now();
      r["wall_ms"] = std::chrono::duration<double, std::milli>(t1 - t0).count();
      entry["results"][algo.name] = std::move(r);
    }
    out["maps"].push_back(std::move(entry));
  }
  std::ofstream os(out_file, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + out_file + " for writing");
  os << out.dump(2) << "\n";
  std::cout << "benchmarked " << files.size() << " maps; report written to " << out_file << "\n";
  return 0;
}

int cmd_report(const std::string& logs_dir) {
  const embr::RunReport rep = embr::recompute_report(logs_dir);
  std::cout << embr::report_to_json(rep).dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"embr: multi-robot firefighting autonomy toolkit"};
  app.require_subcommand(1);

  std::string scenario_file, out_dir, log_level = "info";
  std::optional<std::uint64_t> seed_override;
  std::optional<long> ticks_override;
  CLI::App* run = app.add_subcommand("run", "simulate a scenario and write its logs");
  run->add_option("--scenario", scenario_file, "scenario description file")
      ->required()
      ->check(CLI::ExistingFile);
  run->add_option("--seed", seed_override, "override the scenario seed");
  run->add_option("--out", out_dir, "directory to write logs into")->required();
  run->add_option("--ticks", ticks_override, "override the scenario duration");
  run->add_option("--log-level", log_level, "quiet, info, or debug")
      ->check(CLI::IsMember({"quiet", "info", "debug"}));

  std::string map_file, start_text, goal_text, algo = "lazytheta", mode = "3d",
                                               path_out = "path.csv";
  double inflate_radius = 0.0;
  CLI::App* plan = app.add_subcommand("plan", "plan a path on a saved map");
  plan->add_option("--map", map_file, "voxel map file")->required()->check(CLI::ExistingFile);
  plan->add_option("--start", start_text, "start position x,y,z")->required();
  plan->add_option("--goal", goal_text, "goal position x,y,z")->required();
  plan->add_option("--algo", algo, "planning algorithm")
      ->check(CLI::IsMember({"astar", "theta", "lazytheta"}));
  plan->add_option("--mode", mode, "search in a single layer (2d) or the full volume (3d)")
      ->check(CLI::IsMember({"2d", "3d"}));
  plan->add_option("--inflate", inflate_radius, "obstacle inflation radius in meters")
      ->check(CLI::NonNegativeNumber);
  plan->add_option("--out", path_out, "waypoint CSV output file");

  std::string maps_dir, bench_out;
  CLI::App* bench = app.add_subcommand("bench-planner", "compare planners across saved maps");
  bench->add_option("--maps", maps_dir, "directory of .map files")
      ->required()
      ->check(CLI::ExistingDirectory);
  bench->add_option("--out", bench_out, "JSON report output file")->required();

  std::string logs_dir;
  CLI::App* report = app.add_subcommand("report", "recompute a run report from its logs");
  report->add_option("--logs", logs_dir, "log directory from a previous run")
      ->required()
      ->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);
  try {
    if (run->parsed())
      return cmd_run(scenario_file, seed_override, out_dir, ticks_override, log_level);
    if (plan->parsed())
      return cmd_plan(map_file, start_text, goal_text, algo, mode, inflate_radius, path_out);
    if (bench->parsed()) return cmd_bench(maps_dir, bench_out);
    if (report->parsed()) return cmd_report(logs_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
