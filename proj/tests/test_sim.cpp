#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "embr/sim/building.hpp"
#include "embr/sim/scenario.hpp"
#include "embr/sim/sensors.hpp"
#include "embr/sim/simulator.hpp"

using namespace embr;

namespace {

Scenario parse_text(const std::string& text) {
  std::istringstream in(text);
  return parse_scenario(in);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// filename -> bytes for every regular file in a directory.
std::map<std::string, std::string> dir_contents(const std::string& dir) {
  std::map<std::string, std::string> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file()) out[entry.path().filename().string()] = slurp(entry.path());
  return out;
}

std::string fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "embr_sim_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

std::string map_bytes(const VoxelGrid& g) {
  std::ostringstream os;
  save_map(g, os);
  return os.str();
}

// Independent connectivity oracle: 6-neighbor flood fill over free cells.
bool flood_fill_connected(const VoxelGrid& g, const Vec3& from, const Vec3& to) {
  const Idx3 start = g.world_to_index(from);
  const Idx3 goal = g.world_to_index(to);
  REQUIRE(g.in_bounds(start));
  REQUIRE(g.in_bounds(goal));
  REQUIRE_FALSE(g.occupied(start));
  REQUIRE_FALSE(g.occupied(goal));
  const Idx3 d = g.dims();
  std::vector<char> seen(static_cast<std::size_t>(d.x()) * d.y() * d.z(), 0);
  const auto key = [&](const Idx3& i) {
    return static_cast<std::size_t>((i.z() * d.y() + i.y()) * d.x() + i.x());
  };
  std::queue<Idx3> frontier;
  frontier.push(start);
  seen[key(start)] = 1;
  const Idx3 steps[6] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  while (!frontier.empty()) {
    const Idx3 cur = frontier.front();
    frontier.pop();
    if (cur == goal) return true;
    for (const Idx3& s : steps) {
      const Idx3 nxt = cur + s;
      if (!g.in_bounds(nxt) || g.occupied(nxt) || seen[key(nxt)]) continue;
      seen[key(nxt)] = 1;
      frontier.push(nxt);
    }
  }
  return false;
}

// Scenario reused by the log-oriented tests: one patrol drone, one outdoor
// fire along its route, mild noise.
constexpr const char* kPatrolScenario = R"(
# single-drone patrol with one ground fire on the route
sim.duration_ticks = 400
sim.seed = 11
building.size_x = 8
building.size_y = 8
building.margin = 4
mcl.n_particles = 200
mcl.init_spread_xy = 0.1
mcl.init_spread_z = 0.05
mcl.init_spread_yaw = 0.02
robot.u1.kind = uav
robot.u1.start = 2,2,2,0
robot.u1.waypoints = 14,2,2
fire.f1.position = 10,2,1.5
fire.f1.temperature = 300
fire.f1.type = outdoor
noise.lidar_sigma = 0.01
noise.odom_frac = 0.005
)";

struct CachedRun {
  std::string dir;
  RunReport report;
};

const CachedRun& patrol_run() {
  static const CachedRun cached = [] {
    CachedRun r;
    r.dir = fresh_dir("patrol");
    Simulator sim(parse_text(kPatrolScenario));
    r.report = sim.run(r.dir);
    return r;
  }();
  return cached;
}

}  // namespace

TEST_CASE("scenario text parses into a complete description", "[sim]") {
  const Scenario sc = parse_text(R"(
# comment lines and blanks are ignored

sim.tick_rate = 20
sim.duration_ticks = 500
sim.seed = 99
building.floors = 2
building.size_x = 12
mcl.n_particles = 250
mcl.alpha = 0.7
mcl.init_spread_xy = 0.2
robot.alpha.kind = uav
robot.alpha.priority = 1
robot.alpha.start = 1,2,3,0.5
robot.alpha.waypoints = 4,5,6 ; 7,8,9
robot.alpha.mcl.alpha = 0.25
robot.beta.kind = ugv
robot.beta.priority = 2
robot.beta.start = 2,2,0.4,0
robot.beta.home = 3,3,0.4,1
fire.kitchen.position = 5,5,1
fire.kitchen.temperature = 420
fire.kitchen.type = indoor
zone.east.min = 10,0,0
zone.east.max = 14,8,6
zone.east.overlap = true
noise.gps_sigma_xy = 0.7
lidar.max_range = 25
thermal.focal = 150
mission.dwell_ticks = 30
)");
  CHECK(sc.tick_rate == 20);
  CHECK(sc.duration_ticks == 500);
  CHECK(sc.seed == 99);
  CHECK(sc.building.floors == 2);
  CHECK(sc.building.size_x == 12.0);
  CHECK(sc.building.size_y == 8.0);  // untouched default
  CHECK(sc.noise.gps_sigma_xy == 0.7);
  CHECK(sc.lidar.max_range == 25.0);
  CHECK(sc.thermal.focal == 150.0);
  CHECK(sc.mission.dwell_ticks == 30);

  REQUIRE(sc.robots.size() == 2);
  const RobotSpec& a = sc.robots[0];
  CHECK(a.id == "alpha");
  CHECK(a.kind == RobotKind::Uav);
  CHECK(a.priority == 1);
  CHECK(a.start.x == 1.0);
  CHECK(a.start.yaw == 0.5);
  REQUIRE(a.waypoints.size() == 2);
  CHECK(a.waypoints[1] == Vec3(7, 8, 9));
  // defaults declared above the robot are snapshotted, then overridden
  CHECK(a.mcl.config.n_particles == 250);
  CHECK(a.mcl.config.alpha == 0.25);
  CHECK(a.mcl.init_spread_xy == 0.2);
  CHECK(a.home.x == a.start.x);  // home defaults to start
  CHECK(a.max_speed == 2.0);

  const RobotSpec& b = sc.robots[1];
  CHECK(b.kind == RobotKind::Ugv);
  CHECK(b.max_speed == 0.7);
  CHECK(b.mcl.config.platform == Platform::Ugv);
  CHECK(b.home.yaw == 1.0);

  REQUIRE(sc.fires.size() == 1);
  CHECK(sc.fires[0].id == "kitchen");
  CHECK(sc.fires[0].type == FireType::Indoor);
  CHECK(sc.fires[0].temperature == 420.0);

  REQUIRE(sc.zones.size() == 1);
  CHECK(sc.zones[0].id == "east");
  CHECK(sc.zones[0].may_overlap);
  CHECK(sc.zones[0].max == Vec3(14, 8, 6));
}

TEST_CASE("malformed scenario text is rejected with its line number", "[sim]") {
  const auto expect_error = [](const std::string& text, int line, const std::string& what) {
    std::istringstream in(text);
    try {
      parse_scenario(in);
      FAIL("expected a scenario error for: " << what);
    } catch (const ScenarioError& e) {
      CHECK(e.line == line);
      CHECK_THAT(e.what(), Catch::Matchers::ContainsSubstring(what));
    }
  };
  expect_error("sim.duration_ticks = 10\nweather.wind = 3\n", 2, "unknown section");
  expect_error("sim.duration = 10\n", 1, "unknown key sim.duration");
  expect_error("\n\nsim.tick_rate == 10\n", 3, "expected a");
  expect_error("just some words\n", 1, "expected 'section.key = value'");
  expect_error("robot.x.kind = boat\n", 1, "ugv or uav");
  expect_error("robot.x.start = 1,2\n", 1, "expected x,y,z,yaw");
  expect_error("fire.f.position = 1,2,three\n", 1, "expected a number");
  expect_error("zone.z.overlap = maybe\n", 1, "expected a boolean");
  expect_error("mcl.warp_factor = 2\n", 1, "unknown key mcl.warp_factor");
  // cross-field checks report without a line number
  expect_error("sim.tick_rate = 10\n", 0, "duration_ticks");
  expect_error("sim.duration_ticks = 10\nrobot.g.kind = ugv\nrobot.g.max_speed = 1.2\n", 0,
               "limited to 0.7");
  expect_error(
      "sim.duration_ticks = 10\n"
      "robot.a.kind = uav\nrobot.b.kind = uav\n",
      0, "share priority");
  expect_error("sim.duration_ticks = 10\nfire.f.position = 1,1,1\n", 0, "type not set");
  expect_error(
      "sim.duration_ticks = 10\n"
      "fire.f.position = 1,1,1\nfire.f.type = indoor\nfire.f.temperature = 15\n",
      0, "below ambient");
  expect_error("sim.duration_ticks = 10\nzone.z.min = 0,0,0\n", 0, "needs both min and max");
}

TEST_CASE("scenario files load from disk", "[sim]") {
  const std::string dir = fresh_dir("scenario_io");
  const std::string path = dir + "/t.scn";
  {
    std::ofstream out(path);
    out << "sim.duration_ticks = 42\nsim.seed = 5\n";
  }
  const Scenario sc = load_scenario(path);
  CHECK(sc.duration_ticks == 42);
  CHECK(sc.seed == 5);
  CHECK_THROWS_AS(load_scenario(dir + "/missing.scn"), std::runtime_error);
}

TEST_CASE("building occupancy matches the analytic shell volume", "[sim]") {
  // All dimensions are exact multiples of the resolution, so the cell count
  // must match the continuous-volume formula exactly; the 5% tolerance is
  // the contract, the equality is the bonus of exact arithmetic.
  BuildingParams p;  // 10 x 8 footprint, 1 floor, 0.25 walls, 2 windows/facade
  for (int floors : {1, 2}) {
    p.floors = floors;
    const Building b = generate_building(p, 7);
    const double r = p.resolution;
    const double site_x = p.size_x + 2 * p.margin;
    const double site_y = p.size_y + 2 * p.margin;
    const double slab = site_x * site_y * r;
    const double walls_per_storey =
        (p.size_x * p.size_y -
         (p.size_x - 2 * p.wall_thickness) * (p.size_y - 2 * p.wall_thickness)) *
        (p.floor_height - p.wall_thickness);
    const double ceiling_per_storey = p.size_x * p.size_y * p.wall_thickness;
    const double door = p.door_width * p.door_height * p.wall_thickness;
    const double windows_per_storey =
        4.0 * p.window_count * p.window_width * p.window_height * p.wall_thickness;
    const double volume = slab + floors * (walls_per_storey + ceiling_per_storey) - door -
                          floors * windows_per_storey;
    const double cells = volume / (r * r * r);
    CHECK_THAT(static_cast<double>(b.map.occupied_count()),
               Catch::Matchers::WithinRel(cells, 0.05));
    CHECK(static_cast<double>(b.map.occupied_count()) == cells);
  }
}

TEST_CASE("the shell is watertight except through declared openings", "[sim]") {
  BuildingParams p;
  const Vec3 outside(1.0, 1.0, 1.0);

  SECTION("door and windows connect inside to outside") {
    const Building b = generate_building(p, 3);
    const Vec3 inside = 0.5 * (b.interior.min + b.interior.max);
    CHECK(flood_fill_connected(b.map, outside, inside));
  }
  SECTION("door alone connects inside to outside") {
    p.window_count = 0;
    const Building b = generate_building(p, 3);
    const Vec3 inside = 0.5 * (b.interior.min + b.interior.max);
    CHECK(flood_fill_connected(b.map, outside, inside));
  }
  SECTION("sealed shell is impenetrable") {
    p.window_count = 0;
    p.door_width = 0.0;
    p.door_height = 0.0;
    const Building b = generate_building(p, 3);
    const Vec3 inside = 0.5 * (b.interior.min + b.interior.max);
    CHECK_FALSE(flood_fill_connected(b.map, outside, inside));
  }
}

TEST_CASE("building generation is a pure function of parameters and seed", "[sim]") {
  const BuildingParams p;
  const std::string once = map_bytes(generate_building(p, 1).map);
  const std::string again = map_bytes(generate_building(p, 1).map);
  CHECK(once == again);
  // window jitter differs across these seeds
  CHECK(once != map_bytes(generate_building(p, 2).map));
  CHECK(once != map_bytes(generate_building(p, 3).map));
}

TEST_CASE("degenerate building parameters are rejected", "[sim]") {
  const auto reject = [](auto mutate) {
    BuildingParams p;
    mutate(p);
    CHECK_THROWS_AS(generate_building(p, 1), std::invalid_argument);
  };
  reject([](BuildingParams& p) { p.floors = 0; });
  reject([](BuildingParams& p) { p.resolution = 0.0; });
  reject([](BuildingParams& p) { p.size_x = 0.5; });          // no interior left
  reject([](BuildingParams& p) { p.size_x = 10.1; });         // not a multiple of 0.25
  reject([](BuildingParams& p) { p.wall_thickness = 0.0; });
  reject([](BuildingParams& p) { p.margin = 0.0; });
  reject([](BuildingParams& p) { p.floor_height = 0.5; });    // no air under the ceiling
  reject([](BuildingParams& p) { p.door_height = 3.0; });     // taller than the storey air
  reject([](BuildingParams& p) { p.window_width = 12.0; });   // wider than the facade
  reject([](BuildingParams& p) { p.window_count = -1; });
}

TEST_CASE("noise-free lidar returns lie on occupied voxel surfaces", "[sim]") {
  const Building b = generate_building(BuildingParams{}, 5);
  Pose pose;
  pose.x = 3.0;
  pose.y = 3.0;
  pose.z = 2.0;
  pose.yaw = 0.7;
  LidarParams lp;
  lp.azimuth_count = 64;
  lp.elevation_count = 9;
  Rng rng(1);
  const std::vector<Vec3> cloud = synth_lidar(pose, b.map, lp, 0.0, rng);
  REQUIRE(!cloud.empty());
  // upward beams into open sky never return
  CHECK(cloud.size() < static_cast<std::size_t>(lp.azimuth_count) * lp.elevation_count);
  const double res = b.map.resolution();
  const Mat3 rot = pose.rotation();
  for (const Vec3& p : cloud) {
    CHECK(p.norm() <= lp.max_range + 1e-9);
    const Vec3 w = rot * p + pose.position();
    // within one voxel of an occupied cell center (half space diagonal)
    const Idx3 idx = b.map.world_to_index(w);
    REQUIRE(b.map.in_bounds(idx));
    double nearest = std::numeric_limits<double>::infinity();
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const Idx3 n = idx + Idx3(dx, dy, dz);
          if (!b.map.in_bounds(n) || !b.map.occupied(n)) continue;
          nearest = std::min(nearest, (b.map.index_to_center(n) - w).norm());
        }
    CHECK(nearest <= res * std::sqrt(3.0) / 2.0 + 1e-9);
  }
}

TEST_CASE("lidar range noise matches the requested deviation", "[sim]") {
  BuildingParams bp;  // sealed shell: every beam hits a wall, floor, or ceiling
  bp.window_count = 0;
  bp.door_width = 0.0;
  bp.door_height = 0.0;
  const Building b = generate_building(bp, 5);
  Pose pose;
  pose.x = 11.0;
  pose.y = 10.0;
  pose.z = 1.5;
  LidarParams lp;
  lp.azimuth_count = 128;
  lp.elevation_count = 80;
  const double sigma = 0.05;
  Rng clean_rng(2), noisy_rng(2);
  const std::vector<Vec3> clean = synth_lidar(pose, b.map, lp, 0.0, clean_rng);
  const std::vector<Vec3> noisy = synth_lidar(pose, b.map, lp, sigma, noisy_rng);
  REQUIRE(clean.size() == noisy.size());
  REQUIRE(clean.size() >= 10000);
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const double d = noisy[i].norm() - clean[i].norm();
    sum += d;
    sum_sq += d * d;
  }
  const double n = static_cast<double>(clean.size());
  const double mean = sum / n;
  const double std_dev = std::sqrt(sum_sq / n - mean * mean);
  CHECK_THAT(std_dev, Catch::Matchers::WithinRel(sigma, 0.05));
  CHECK(std::abs(mean) < 3.0 * sigma / std::sqrt(n) + 1e-12);
}

TEST_CASE("gps drops out inside the shadow volume", "[sim]") {
  NoiseParams noise;
  noise.gps_sigma_xy = 0.0;
  noise.gps_sigma_z = 0.0;
  const Aabb shadow{Vec3(0, 0, 0), Vec3(10, 10, 5)};
  Rng rng(3);
  Pose inside;
  inside.x = 5;
  inside.y = 5;
  inside.z = 2;
  CHECK_FALSE(synth_gps(inside, noise, shadow, rng).has_value());
  Pose outside;
  outside.x = 15;
  outside.y = 5;
  outside.z = 2;
  const auto fix = synth_gps(outside, noise, shadow, rng);
  REQUIRE(fix);
  CHECK(*fix == outside.position());  // zero noise reports the exact truth
  noise.gps_sigma_xy = 0.5;
  const auto noisy = synth_gps(outside, noise, shadow, rng);
  REQUIRE(noisy);
  CHECK(*noisy != outside.position());
}

TEST_CASE("odometry is exact without noise and drift scales translation", "[sim]") {
  NoiseParams clean;
  clean.odom_frac = 0.0;
  clean.odom_drift = 0.0;
  Rng rng(4);
  Rng pose_rng(40);

  SECTION("noise-free deltas recompose the next pose exactly") {
    for (int trial = 0; trial < 50; ++trial) {
      Pose prev;
      prev.x = pose_rng.uniform(-20, 20);
      prev.y = pose_rng.uniform(-20, 20);
      prev.z = pose_rng.uniform(0, 5);
      prev.yaw = pose_rng.uniform(-kPi, kPi);
      Pose cur = prev;
      cur.x += pose_rng.uniform(-0.5, 0.5);
      cur.y += pose_rng.uniform(-0.5, 0.5);
      cur.z += pose_rng.uniform(-0.2, 0.2);
      cur.yaw = wrap_angle(cur.yaw + pose_rng.uniform(-0.3, 0.3));
      const OdomDelta d = synth_odometry(prev, cur, clean, rng);
      const Vec3 rebuilt = prev.position() + rot_z(prev.yaw) * Vec3(d.dx, d.dy, d.dz);
      CHECK((rebuilt - cur.position()).norm() < 1e-12);
      CHECK(std::abs(wrap_angle(prev.yaw + d.dyaw - cur.yaw)) < 1e-12);
    }
  }

  SECTION("one percent drift over a straight 100 m leaves a 1 m error") {
    NoiseParams drift = clean;
    drift.odom_drift = 0.01;
    Pose prev;
    Vec3 dead_reckoned = prev.position();
    for (int step = 0; step < 1000; ++step) {
      Pose cur = prev;
      cur.x += 0.1;
      const OdomDelta d = synth_odometry(prev, cur, drift, rng);
      dead_reckoned += rot_z(prev.yaw) * Vec3(d.dx, d.dy, d.dz);
      prev = cur;
    }
    CHECK_THAT(dead_reckoned.x() - prev.x, Catch::Matchers::WithinAbs(1.0, 1e-9));
  }
}

TEST_CASE("thermal rendering follows the pinhole camera model", "[sim]") {
  // Empty space: occlusion rays find nothing.
  VoxelGrid space(Vec3(-5, -15, -15), 0.5, Idx3(70, 60, 60));
  space.set_occupied(Idx3(0, 0, 0));  // keep the grid non-trivial
  ThermalParams tp;                   // 128 x 96, f = 200, ambient 20 C
  const double fire_temp = 300.0;
  Pose cam;  // at origin looking along +x

  SECTION("a centered fire peaks at the principal point and shrinks as 1/range") {
    std::map<double, double> measured_radius;
    for (double range : {5.0, 10.0, 20.0}) {
      const ThermalImage img =
          synth_thermal(cam, {{Vec3(range, 0, 0), fire_temp}}, space, tp);
      int hot_u = -1, hot_v = -1;
      double hot = -1e9;
      long above_ambient = 0;
      for (int v = 0; v < img.height; ++v)
        for (int u = 0; u < img.width; ++u) {
          if (img.at(u, v) > tp.ambient_c + 1e-9) ++above_ambient;
          if (img.at(u, v) > hot) {
            hot = img.at(u, v);
            hot_u = u;
            hot_v = v;
          }
        }
      CHECK(std::abs(hot_u - img.cx) <= 1.0);
      CHECK(std::abs(hot_v - img.cy) <= 1.0);
      CHECK(hot > 0.95 * fire_temp);
      measured_radius[range] = std::sqrt(static_cast<double>(above_ambient) / kPi);
    }
    for (const auto& [range, radius] : measured_radius) {
      const double predicted = tp.focal * tp.fire_radius / range;
      CHECK_THAT(radius, Catch::Matchers::WithinRel(predicted, 0.05));
    }
  }

  SECTION("temperature falls quadratically toward ambient at the rim") {
    const double range = 5.0;
    const ThermalImage img = synth_thermal(cam, {{Vec3(range, 0, 0), fire_temp}}, space, tp);
    const double radius = tp.focal * tp.fire_radius / range;
    const int u = static_cast<int>(std::lround(img.cx + radius / 2.0));
    const int v = static_cast<int>(std::lround(img.cy));
    const double du = u - img.cx, dv = v - img.cy;
    const double q = (du * du + dv * dv) / (radius * radius);
    const double expected = fire_temp + (tp.ambient_c - fire_temp) * q;
    CHECK_THAT(img.at(u, v), Catch::Matchers::WithinAbs(expected, 1e-9));
  }

  SECTION("a wall between camera and fire suppresses the disc entirely") {
    VoxelGrid walled = space;
    for (int y = 0; y < walled.dims().y(); ++y)
      for (int z = 0; z < walled.dims().z(); ++z) walled.set_occupied(Idx3(14, y, z));  // x = 2
    const ThermalImage img = synth_thermal(cam, {{Vec3(8, 0, 0), fire_temp}}, walled, tp);
    for (int v = 0; v < img.height; ++v)
      for (int u = 0; u < img.width; ++u) REQUIRE(img.at(u, v) == tp.ambient_c);
  }

  SECTION("fires behind the camera render nothing") {
    const ThermalImage img = synth_thermal(cam, {{Vec3(-8, 0, 0), fire_temp}}, space, tp);
    for (int v = 0; v < img.height; ++v)
      for (int u = 0; u < img.width; ++u) REQUIRE(img.at(u, v) == tp.ambient_c);
  }
}

TEST_CASE("a null scenario reports zero error and zero motion", "[sim]") {
  const std::string dir = fresh_dir("null");
  Simulator sim(parse_text(R"(
sim.duration_ticks = 50
sim.seed = 1
noise.lidar_sigma = 0
noise.gps_sigma_xy = 0
noise.gps_sigma_z = 0
noise.imu_rp_sigma = 0
noise.imu_yaw_sigma = 0
noise.altimeter_sigma = 0
noise.odom_frac = 0
mcl.init_spread_xy = 0
mcl.init_spread_z = 0
mcl.init_spread_yaw = 0
robot.idle.kind = uav
robot.idle.start = 3,3,2,0
)"));
  const RunReport rep = sim.run(dir);
  CHECK(rep.ticks == 50);
  REQUIRE(rep.robots.size() == 1);
  CHECK(rep.robots[0].pos_rmse == 0.0);
  CHECK(rep.robots[0].yaw_rmse == 0.0);
  CHECK(rep.robots[0].path_length == 0.0);
  CHECK(rep.robots[0].mcl_updates == 0);  // no motion, no update cycles
  CHECK(rep.fires_total == 0);
  CHECK(rep.coordination_violations == 0);
  // one pose row per tick plus the final state, plus the header
  std::istringstream gt(slurp(dir + "/ground_truth.csv"));
  std::string line;
  long rows = 0;
  while (std::getline(gt, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 52);
}

TEST_CASE("identical seeds write byte-identical logs", "[sim]") {
  const CachedRun& first = patrol_run();
  const std::string dir_b = fresh_dir("patrol_again");
  Simulator again(parse_text(kPatrolScenario));
  RunReport rep_b = again.run(dir_b);

  const auto logs_a = dir_contents(first.dir);
  const auto logs_b = dir_contents(dir_b);
  REQUIRE(logs_a.size() == logs_b.size());
  for (const auto& [name, bytes] : logs_a) {
    INFO("log file " << name);
    REQUIRE(logs_b.count(name) == 1);
    CHECK(bytes == logs_b.at(name));
  }
  RunReport rep_a = first.report;
  rep_a.wall_clock_seconds = rep_b.wall_clock_seconds = 0.0;
  CHECK(rep_a == rep_b);

  std::string reseeded = kPatrolScenario;
  const auto pos = reseeded.find("sim.seed = 11");
  REQUIRE(pos != std::string::npos);
  reseeded.replace(pos, 13, "sim.seed = 12");
  const std::string dir_c = fresh_dir("patrol_reseeded");
  Simulator other(parse_text(reseeded));
  other.run(dir_c);
  CHECK(slurp(dir_c + "/mcl_u1.csv") != slurp(first.dir + "/mcl_u1.csv"));
}

TEST_CASE("the run report is recomputed from the logs alone", "[sim]") {
  const CachedRun& run = patrol_run();
  RunReport expected = run.report;
  expected.wall_clock_seconds = 0.0;
  CHECK(recompute_report(run.dir) == expected);

  // and the serialized report parses back with matching fields
  const nlohmann::json j = nlohmann::json::parse(slurp(run.dir + "/report.json"));
  CHECK(j.at("ticks").get<long>() == expected.ticks);
  CHECK(j.at("fires_total").get<int>() == expected.fires_total);
  CHECK(j.at("fires_extinguished").get<int>() == expected.fires_extinguished);
  CHECK(j.at("coordination_violations").get<long>() == expected.coordination_violations);
  REQUIRE(j.at("robots").size() == expected.robots.size());
  CHECK(j.at("robots")[0].at("pos_rmse").get<double>() == expected.robots[0].pos_rmse);
}

TEST_CASE("true motion never exceeds the speed limit", "[sim]") {
  const CachedRun& run = patrol_run();
  const Scenario sc = parse_text(kPatrolScenario);
  std::map<std::string, double> limits;
  for (const RobotSpec& r : sc.robots) limits[r.id] = r.max_speed;
  std::map<std::string, Vec3> prev;
  std::istringstream gt(slurp(run.dir + "/ground_truth.csv"));
  std::string line;
  std::getline(gt, line);  // header
  long checked = 0;
  while (std::getline(gt, line)) {
    std::istringstream row(line);
    std::string tick, robot, xs, ys, zs;
    std::getline(row, tick, ',');
    std::getline(row, robot, ',');
    std::getline(row, xs, ',');
    std::getline(row, ys, ',');
    std::getline(row, zs, ',');
    const Vec3 p(std::stod(xs), std::stod(ys), std::stod(zs));
    const auto it = prev.find(robot);
    if (it != prev.end()) {
      CHECK((p - it->second).norm() * static_cast<double>(sc.tick_rate) <=
            limits.at(robot) + 1e-9);
      ++checked;
    }
    prev[robot] = p;
  }
  CHECK(checked == sc.duration_ticks);
}

TEST_CASE("a patrolling drone finds and extinguishes the fire on its route", "[sim]") {
  const CachedRun& run = patrol_run();
  CHECK(run.report.fires_total == 1);
  CHECK(run.report.fires_extinguished == 1);
  REQUIRE(run.report.extinguish_ticks.count("f1") == 1);
  const long out_tick = run.report.extinguish_ticks.at("f1");
  CHECK(out_tick > 0);
  CHECK(out_tick < run.report.ticks);
  CHECK_THAT(slurp(run.dir + "/fires.csv"),
             Catch::Matchers::ContainsSubstring(std::to_string(out_tick) +
                                                ",f1,extinguished,"));
  const std::string bt = slurp(run.dir + "/bt_u1.csv");
  CHECK_THAT(bt, Catch::Matchers::ContainsSubstring("Leaf(detect_fire)[1],SUCCESS"));
  CHECK_THAT(bt, Catch::Matchers::ContainsSubstring("Leaf(extinguish_fire)[2],SUCCESS"));
  CHECK_THAT(bt, Catch::Matchers::ContainsSubstring("Leaf(nav_home)[1],SUCCESS"));
  // the fire report tracked the burning object close to its true position
  const std::string report = slurp(run.dir + "/fire_report_u1.csv");
  std::istringstream rows(report);
  std::string header, first;
  std::getline(rows, header);
  REQUIRE(std::getline(rows, first));
  double x = 0, y = 0, z = 0;
  std::sscanf(first.c_str(), "%*d,%lf,%lf,%lf", &x, &y, &z);
  CHECK((Vec3(x, y, z) - Vec3(10, 2, 1.5)).norm() < 0.3);
}

TEST_CASE("a ground robot clears an indoor fire through the door", "[sim]") {
  const std::string dir = fresh_dir("indoor");
  Simulator sim(parse_text(R"(
sim.duration_ticks = 450
sim.seed = 3
building.size_x = 8
building.size_y = 8
building.margin = 4
mcl.n_particles = 300
mcl.init_spread_xy = 0.1
mcl.init_spread_z = 0.02
mcl.init_spread_yaw = 0.02
robot.g1.kind = ugv
robot.g1.start = 8,1.5,0.375,1.5708
robot.g1.waypoints = 8,8,0.375
fire.f1.position = 8,10,0.875
fire.f1.temperature = 350
fire.f1.type = indoor
zone.indoor.min = 4.25,4.25,0.25
zone.indoor.max = 11.75,11.75,3.0
noise.lidar_sigma = 0.01
noise.odom_frac = 0.01
mission.standoff = 1.6
)"));
  const RunReport rep = sim.run(dir);
  CHECK(rep.fires_extinguished == 1);
  CHECK(rep.coordination_violations == 0);
  REQUIRE(rep.robots.size() == 1);
  // indoors there is no GPS: localization leaned on the sweep alone
  CHECK(rep.robots[0].pos_rmse < 0.25);
  CHECK(rep.robots[0].mcl_updates > 100);

  // the zone was negotiated: requested and granted on entry, released on exit
  const auto rows = simdetail::read_csv(dir + "/coordination.csv");
  REQUIRE(rows.size() >= 3);
  CHECK(rows[0].at(1) == "g1");
  CHECK(rows[0].at(2) == "indoor");
  CHECK(rows[0].at(3) == "request");
  CHECK(rows[1].at(3) == "grant");
  CHECK(rows[0].at(0) == rows[1].at(0));
  bool released = false;
  for (const auto& row : rows) released |= row.at(3) == "release";
  CHECK(released);
  // the extinguish happened while holding the zone
  const long grant = std::stol(rows[1].at(0));
  CHECK(rep.extinguish_ticks.at("f1") > grant);
}

TEST_CASE("zone contention makes the later robot wait its turn", "[sim]") {
  const std::string dir = fresh_dir("contention");
  Simulator sim(parse_text(R"(
sim.duration_ticks = 220
sim.seed = 8
mcl.n_particles = 150
mcl.init_spread_xy = 0.05
mcl.init_spread_z = 0.02
mcl.init_spread_yaw = 0.01
noise.lidar_sigma = 0.005
noise.odom_frac = 0.002
robot.u1.kind = uav
robot.u1.priority = 0
robot.u1.start = 6.5,3.5,2,3.14
robot.u1.waypoints = 4.5,3.5,2 ; 2.5,3.5,2.8 ; 4,4.5,3.2
robot.u2.kind = uav
robot.u2.priority = 1
robot.u2.altitude_band = 1
robot.u2.start = 3.5,8,5.2,-1.57
robot.u2.waypoints = 3.5,3.5,5.2
zone.southwest.min = 1,1,0.5
zone.southwest.max = 5.5,5.5,6.5
)"));
  const RunReport rep = sim.run(dir);
  CHECK(rep.coordination_violations == 0);

  const auto rows = simdetail::read_csv(dir + "/coordination.csv");
  long u1_first_release = -1, u2_first_grant = -1, u2_waits = 0;
  long last_release_before_grant = -1;
  for (const auto& row : rows) {
    const long tick = std::stol(row.at(0));
    const std::string& robot = row.at(1);
    const std::string& event = row.at(3);
    if (robot == "u1" && event == "release" && u1_first_release < 0) u1_first_release = tick;
    if (robot == "u2" && event == "wait" && u2_first_grant < 0) ++u2_waits;
    if (robot == "u2" && event == "grant" && u2_first_grant < 0) {
      u2_first_grant = tick;
      last_release_before_grant = u1_first_release;
    }
  }
  REQUIRE(u1_first_release > 0);
  REQUIRE(u2_first_grant > 0);
  // the second drone reached the boundary earlier, waited, and was admitted
  // within a tick of the zone being freed
  CHECK(u2_waits > 10);
  CHECK(u2_first_grant >= last_release_before_grant);
  CHECK(u2_first_grant - last_release_before_grant <= 1);
}
