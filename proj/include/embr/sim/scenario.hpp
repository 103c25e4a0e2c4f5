#pragma once

// Scenario files: line-oriented `section.key = value` text.
//
// Blank lines and lines starting with '#' are ignored. Every other line must
// be `key = value` where the key is a dotted path. Unknown keys are rejected
// with the offending line number — a typo never silently becomes a default.
//
// Schema (defaults in parentheses):
//   sim.tick_rate          ticks per second (10)
//   sim.duration_ticks     run length, required
//   sim.seed               master seed (0); the CLI --seed flag overrides it
//   map.file               load an existing map instead of generating one
//   building.floors            storeys (1)
//   building.size_x/size_y     footprint in meters (10 / 8)
//   building.floor_height      per-storey height (3)
//   building.wall_thickness    wall depth in meters (0.25)
//   building.resolution        voxel edge (0.25)
//   building.margin            free apron around the building (6)
//   building.door_width/door_height    ground-floor door cutout (1 / 2)
//   building.window_width/window_height  per-window cutout (1 / 1)
//   building.window_count      windows per facade per storey (2)
//   noise.lidar_sigma      range noise std dev (0.02)
//   noise.gps_sigma_xy     horizontal GPS noise (0.5)
//   noise.gps_sigma_z      vertical GPS noise (1.0)
//   noise.imu_rp_sigma     roll/pitch noise (0.005)
//   noise.imu_yaw_sigma    yaw noise (0.01)
//   noise.imu_yaw_bias     constant yaw offset (0)
//   noise.altimeter_sigma  height noise (0.05)
//   noise.odom_frac        proportional odometry noise (0.02)
//   noise.odom_drift       systematic translation scale error (0)
//   lidar.azimuth_count / elevation_count   beam pattern (256 / 16)
//   lidar.elevation_span_deg                total vertical fan (30)
//   lidar.max_range                         meters (40)
//   thermal.width/height   image size (128 / 96)
//   thermal.focal          pixels (200)
//   thermal.ambient_c      background temperature (20)
//   thermal.fire_radius    rendered fire disc radius in meters (0.4)
//   mcl.<field>            filter defaults, snapshotted by every robot
//                          declared below them: n_particles,
//                          alpha, sigma_gps, trans_threshold, rot_threshold,
//                          k_x, k_y, k_z, k_yaw, yaw_resample_sigma,
//                          z_resample_sigma, use_cloud, use_gps, plus the
//                          seeding spreads init_spread_xy/init_spread_z/
//                          init_spread_yaw and max_cloud_points
//   mission.budget_ticks       mission-body time budget (6000)
//   mission.confirm_count      measurements to confirm a fire (3)
//   mission.detect_recent_ticks  staleness window for confirmations (10)
//   mission.attack_range       extinguish reach in meters (2.5)
//   mission.dwell_ticks        ticks on target to put a fire out (20)
//   mission.standoff           approach vantage distance (1.8)
//   mission.lookahead          pure-pursuit lookahead (0.8)
//   mission.arrive_tolerance   waypoint arrival radius (0.35)
//   mission.replan_deviation   distance off the path that forces a replan (1.5)
//   robot.<id>.kind        ugv | uav, required per robot
//   robot.<id>.priority    unique fleet-wide, lower = more important (0)
//   robot.<id>.altitude_band  cruise band index (0)
//   robot.<id>.start       x,y,z,yaw pose, required
//   robot.<id>.home        x,y,z,yaw pose (defaults to start)
//   robot.<id>.waypoints   semicolon-separated x,y,z triples (empty = idle)
//   robot.<id>.max_speed   m/s (uav 2.0, ugv 0.7; ugv may not exceed 0.7)
//   robot.<id>.radius      inflation radius for planning (0)
//   robot.<id>.mcl.<field> per-robot override of any mcl.<field>
//   fire.<id>.position     x,y,z, required per fire
//   fire.<id>.temperature  degrees C (300)
//   fire.<id>.type         indoor | facade | outdoor, required
//   zone.<id>.min / max    volume corners x,y,z, both required
//   zone.<id>.overlap      allow volume overlap (false)

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "embr/geometry.hpp"
#include "embr/mcl.hpp"
#include "embr/mission.hpp"

namespace embr {

struct BuildingParams {
  int floors = 1;
  double size_x = 10.0;
  double size_y = 8.0;
  double floor_height = 3.0;
  double wall_thickness = 0.25;
  double resolution = 0.25;
  double margin = 6.0;
  double door_width = 1.0;
  double door_height = 2.0;
  double window_width = 1.0;
  double window_height = 1.0;
  int window_count = 2;
};

struct NoiseParams {
  double lidar_sigma = 0.02;
  double gps_sigma_xy = 0.5;
  double gps_sigma_z = 1.0;
  double imu_rp_sigma = 0.005;
  double imu_yaw_sigma = 0.01;
  double imu_yaw_bias = 0.0;
  double altimeter_sigma = 0.05;
  double odom_frac = 0.02;
  double odom_drift = 0.0;
};

struct LidarParams {
  // Dense enough that a surface point is never more than ~1.2 degrees from
  // the nearest beam; fire-range association uses a 1.5-degree cone.
  int azimuth_count = 256;
  int elevation_count = 16;
  double elevation_span_deg = 30.0;
  double max_range = 40.0;
};

struct ThermalParams {
  int width = 128;
  int height = 96;
  double focal = 200.0;
  double ambient_c = 20.0;
  double fire_radius = 0.4;
};

// The filter configuration plus the particle-cloud seeding spreads and the
// cap on how many sweep points are handed to the filter per update (the full
// sweep goes to perception; localization only needs a thin subsample).
struct MclSetup {
  MclConfig config;
  double init_spread_xy = 0.5;
  double init_spread_z = 0.3;
  double init_spread_yaw = 0.1;
  int max_cloud_points = 128;
};

struct MissionParams {
  long budget_ticks = 6000;
  int confirm_count = 3;
  long detect_recent_ticks = 10;
  double attack_range = 2.5;
  long dwell_ticks = 20;
  double standoff = 1.8;
  double lookahead = 0.8;
  double arrive_tolerance = 0.35;
  double replan_deviation = 1.5;
};

struct RobotSpec {
  std::string id;
  RobotKind kind = RobotKind::Uav;
  int priority = 0;
  int altitude_band = 0;
  Pose start;
  Pose home;
  bool home_set = false;
  std::vector<Vec3> waypoints;
  double max_speed = 2.0;
  bool max_speed_set = false;
  double radius = 0.0;
  MclSetup mcl;
};

enum class FireType { Indoor, Facade, Outdoor };

struct FireSpec {
  std::string id;
  Vec3 position = Vec3::Zero();
  double temperature = 300.0;
  FireType type = FireType::Outdoor;
  bool position_set = false;
  bool type_set = false;
};

struct ZoneSpec {
  std::string id;
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();
  bool may_overlap = false;
  bool min_set = false;
  bool max_set = false;
};

struct Scenario {
  long tick_rate = 10;
  long duration_ticks = 0;
  uint64_t seed = 0;
  std::optional<std::string> map_file;
  BuildingParams building;
  NoiseParams noise;
  LidarParams lidar;
  ThermalParams thermal;
  MclSetup mcl_defaults;
  MissionParams mission;
  std::vector<RobotSpec> robots;
  std::vector<FireSpec> fires;
  std::vector<ZoneSpec> zones;

  const RobotSpec* find_robot(const std::string& id) const {
    for (const RobotSpec& r : robots)
      if (r.id == id) return &r;
    return nullptr;
  }
};

// Raised on malformed scenario text, with the 1-based line number.
struct ScenarioError : std::runtime_error {
  ScenarioError(int line_number, const std::string& what)
      : std::runtime_error("line " + std::to_string(line_number) + ": " + what),
        line(line_number) {}
  int line;
};

namespace simdetail {

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.push_back(trim(s.substr(start, i - start)));
      start = i + 1;
    }
  }
  return out;
}

inline double parse_double(const std::string& v, int line) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("");
    return d;
  } catch (...) {
    throw ScenarioError(line, "expected a number, got '" + v + "'");
  }
}

inline long parse_long(const std::string& v, int line) {
  try {
    std::size_t used = 0;
    const long d = std::stol(v, &used);
    if (used != v.size()) throw std::invalid_argument("");
    return d;
  } catch (...) {
    throw ScenarioError(line, "expected an integer, got '" + v + "'");
  }
}

inline uint64_t parse_u64(const std::string& v, int line) {
  try {
    std::size_t used = 0;
    const unsigned long long d = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument("");
    return d;
  } catch (...) {
    throw ScenarioError(line, "expected an unsigned integer, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& v, int line) {
  if (v == "1" || v == "true" || v == "on") return true;
  if (v == "0" || v == "false" || v == "off") return false;
  throw ScenarioError(line, "expected a boolean (0/1/true/false), got '" + v + "'");
}

inline Vec3 parse_vec3(const std::string& v, int line) {
  const auto parts = split(v, ',');
  if (parts.size() != 3) throw ScenarioError(line, "expected x,y,z, got '" + v + "'");
  return {parse_double(parts[0], line), parse_double(parts[1], line),
          parse_double(parts[2], line)};
}

inline Pose parse_pose(const std::string& v, int line) {
  const auto parts = split(v, ',');
  if (parts.size() != 4) throw ScenarioError(line, "expected x,y,z,yaw, got '" + v + "'");
  Pose p;
  p.x = parse_double(parts[0], line);
  p.y = parse_double(parts[1], line);
  p.z = parse_double(parts[2], line);
  p.yaw = parse_double(parts[3], line);
  return p;
}

inline std::vector<Vec3> parse_waypoints(const std::string& v, int line) {
  std::vector<Vec3> out;
  if (trim(v).empty()) return out;
  for (const std::string& part : split(v, ';')) out.push_back(parse_vec3(part, line));
  return out;
}

// Shared by the global mcl.* section and per-robot overrides.
inline void apply_mcl_field(MclSetup& m, const std::string& field, const std::string& value,
                            int line) {
  if (field == "n_particles") m.config.n_particles = static_cast<int>(parse_long(value, line));
  else if (field == "alpha") m.config.alpha = parse_double(value, line);
  else if (field == "sigma_gps") m.config.sigma_gps = parse_double(value, line);
  else if (field == "trans_threshold") m.config.trans_threshold = parse_double(value, line);
  else if (field == "rot_threshold") m.config.rot_threshold = parse_double(value, line);
  else if (field == "k_x") m.config.k_x = parse_double(value, line);
  else if (field == "k_y") m.config.k_y = parse_double(value, line);
  else if (field == "k_z") m.config.k_z = parse_double(value, line);
  else if (field == "k_yaw") m.config.k_yaw = parse_double(value, line);
  else if (field == "yaw_resample_sigma") m.config.yaw_resample_sigma = parse_double(value, line);
  else if (field == "z_resample_sigma") m.config.z_resample_sigma = parse_double(value, line);
  else if (field == "use_cloud") m.config.use_cloud = parse_bool(value, line);
  else if (field == "use_gps") m.config.use_gps = parse_bool(value, line);
  else if (field == "init_spread_xy") m.init_spread_xy = parse_double(value, line);
  else if (field == "init_spread_z") m.init_spread_z = parse_double(value, line);
  else if (field == "init_spread_yaw") m.init_spread_yaw = parse_double(value, line);
  else if (field == "max_cloud_points")
    m.max_cloud_points = static_cast<int>(parse_long(value, line));
  else throw ScenarioError(line, "unknown key mcl." + field);
}

}  // namespace simdetail

// Parses scenario text. Throws ScenarioError (with line number) on unknown
// keys, malformed values, or inconsistent declarations.
inline Scenario parse_scenario(std::istream& in) {
  using namespace simdetail;
  Scenario sc;
  bool duration_set = false;
  std::map<std::string, std::size_t> robot_index, fire_index, zone_index;

  const auto robot_ref = [&](const std::string& id) -> RobotSpec& {
    const auto it = robot_index.find(id);
    if (it != robot_index.end()) return sc.robots[it->second];
    robot_index[id] = sc.robots.size();
    RobotSpec r;
    r.id = id;
    // Robots snapshot the mcl.* defaults declared above them; later
    // robot.<id>.mcl.* keys override individual fields.
    r.mcl = sc.mcl_defaults;
    sc.robots.push_back(std::move(r));
    return sc.robots.back();
  };
  const auto fire_ref = [&](const std::string& id) -> FireSpec& {
    const auto it = fire_index.find(id);
    if (it != fire_index.end()) return sc.fires[it->second];
    fire_index[id] = sc.fires.size();
    FireSpec f;
    f.id = id;
    sc.fires.push_back(std::move(f));
    return sc.fires.back();
  };
  const auto zone_ref = [&](const std::string& id) -> ZoneSpec& {
    const auto it = zone_index.find(id);
    if (it != zone_index.end()) return sc.zones[it->second];
    zone_index[id] = sc.zones.size();
    ZoneSpec z;
    z.id = id;
    sc.zones.push_back(std::move(z));
    return sc.zones.back();
  };

  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string text = trim(raw);
    if (text.empty() || text[0] == '#') continue;
    const std::size_t eq = text.find('=');
    if (eq == std::string::npos)
      throw ScenarioError(line, "expected 'section.key = value', got '" + text + "'");
    const std::string key = trim(text.substr(0, eq));
    const std::string value = trim(text.substr(eq + 1));
    const std::size_t dot = key.find('.');
    if (dot == std::string::npos || dot == 0 || dot + 1 >= key.size())
      throw ScenarioError(line, "key must be 'section.key', got '" + key + "'");
    const std::string section = key.substr(0, dot);
    const std::string rest = key.substr(dot + 1);

    if (section == "sim") {
      if (rest == "tick_rate") sc.tick_rate = parse_long(value, line);
      else if (rest == "duration_ticks") {
        sc.duration_ticks = parse_long(value, line);
        duration_set = true;
      } else if (rest == "seed") sc.seed = parse_u64(value, line);
      else throw ScenarioError(line, "unknown key sim." + rest);
    } else if (section == "map") {
      if (rest == "file") sc.map_file = value;
      else throw ScenarioError(line, "unknown key map." + rest);
    } else if (section == "building") {
      BuildingParams& b = sc.building;
      if (rest == "floors") b.floors = static_cast<int>(parse_long(value, line));
      else if (rest == "size_x") b.size_x = parse_double(value, line);
      else if (rest == "size_y") b.size_y = parse_double(value, line);
      else if (rest == "floor_height") b.floor_height = parse_double(value, line);
      else if (rest == "wall_thickness") b.wall_thickness = parse_double(value, line);
      else if (rest == "resolution") b.resolution = parse_double(value, line);
      else if (rest == "margin") b.margin = parse_double(value, line);
      else if (rest == "door_width") b.door_width = parse_double(value, line);
      else if (rest == "door_height") b.door_height = parse_double(value, line);
      else if (rest == "window_width") b.window_width = parse_double(value, line);
      else if (rest == "window_height") b.window_height = parse_double(value, line);
      else if (rest == "window_count") b.window_count = static_cast<int>(parse_long(value, line));
      else throw ScenarioError(line, "unknown key building." + rest);
    } else if (section == "noise") {
      NoiseParams& n = sc.noise;
      if (rest == "lidar_sigma") n.lidar_sigma = parse_double(value, line);
      else if (rest == "gps_sigma_xy") n.gps_sigma_xy = parse_double(value, line);
      else if (rest == "gps_sigma_z") n.gps_sigma_z = parse_double(value, line);
      else if (rest == "imu_rp_sigma") n.imu_rp_sigma = parse_double(value, line);
      else if (rest == "imu_yaw_sigma") n.imu_yaw_sigma = parse_double(value, line);
      else if (rest == "imu_yaw_bias") n.imu_yaw_bias = parse_double(value, line);
      else if (rest == "altimeter_sigma") n.altimeter_sigma = parse_double(value, line);
      else if (rest == "odom_frac") n.odom_frac = parse_double(value, line);
      else if (rest == "odom_drift") n.odom_drift = parse_double(value, line);
      else throw ScenarioError(line, "unknown key noise." + rest);
    } else if (section == "lidar") {
      LidarParams& l = sc.lidar;
      if (rest == "azimuth_count") l.azimuth_count = static_cast<int>(parse_long(value, line));
      else if (rest == "elevation_count")
        l.elevation_count = static_cast<int>(parse_long(value, line));
      else if (rest == "elevation_span_deg") l.elevation_span_deg = parse_double(value, line);
      else if (rest == "max_range") l.max_range = parse_double(value, line);
      else throw ScenarioError(line, "unknown key lidar." + rest);
    } else if (section == "thermal") {
      ThermalParams& t = sc.thermal;
      if (rest == "width") t.width = static_cast<int>(parse_long(value, line));
      else if (rest == "height") t.height = static_cast<int>(parse_long(value, line));
      else if (rest == "focal") t.focal = parse_double(value, line);
      else if (rest == "ambient_c") t.ambient_c = parse_double(value, line);
      else if (rest == "fire_radius") t.fire_radius = parse_double(value, line);
      else throw ScenarioError(line, "unknown key thermal." + rest);
    } else if (section == "mcl") {
      apply_mcl_field(sc.mcl_defaults, rest, value, line);
    } else if (section == "mission") {
      MissionParams& m = sc.mission;
      if (rest == "budget_ticks") m.budget_ticks = parse_long(value, line);
      else if (rest == "confirm_count") m.confirm_count = static_cast<int>(parse_long(value, line));
      else if (rest == "detect_recent_ticks") m.detect_recent_ticks = parse_long(value, line);
      else if (rest == "attack_range") m.attack_range = parse_double(value, line);
      else if (rest == "dwell_ticks") m.dwell_ticks = parse_long(value, line);
      else if (rest == "standoff") m.standoff = parse_double(value, line);
      else if (rest == "lookahead") m.lookahead = parse_double(value, line);
      else if (rest == "arrive_tolerance") m.arrive_tolerance = parse_double(value, line);
      else if (rest == "replan_deviation") m.replan_deviation = parse_double(value, line);
      else throw ScenarioError(line, "unknown key mission." + rest);
    } else if (section == "robot") {
      const std::size_t d2 = rest.find('.');
      if (d2 == std::string::npos || d2 == 0 || d2 + 1 >= rest.size())
        throw ScenarioError(line, "robot keys are robot.<id>.<field>");
      RobotSpec& r = robot_ref(rest.substr(0, d2));
      const std::string field = rest.substr(d2 + 1);
      if (field == "kind") {
        if (value == "ugv") r.kind = RobotKind::Ugv;
        else if (value == "uav") r.kind = RobotKind::Uav;
        else throw ScenarioError(line, "robot kind must be ugv or uav, got '" + value + "'");
        if (!r.max_speed_set) r.max_speed = r.kind == RobotKind::Ugv ? 0.7 : 2.0;
        r.mcl.config.platform = r.kind == RobotKind::Ugv ? Platform::Ugv : Platform::Uav;
      } else if (field == "priority") r.priority = static_cast<int>(parse_long(value, line));
      else if (field == "altitude_band")
        r.altitude_band = static_cast<int>(parse_long(value, line));
      else if (field == "start") r.start = parse_pose(value, line);
      else if (field == "home") {
        r.home = parse_pose(value, line);
        r.home_set = true;
      } else if (field == "waypoints") r.waypoints = parse_waypoints(value, line);
      else if (field == "max_speed") {
        r.max_speed = parse_double(value, line);
        r.max_speed_set = true;
      } else if (field == "radius") r.radius = parse_double(value, line);
      else if (field.rfind("mcl.", 0) == 0) {
        apply_mcl_field(r.mcl, field.substr(4), value, line);
        r.mcl.config.platform = r.kind == RobotKind::Ugv ? Platform::Ugv : Platform::Uav;
      } else throw ScenarioError(line, "unknown key robot.<id>." + field);
    } else if (section == "fire") {
      const std::size_t d2 = rest.find('.');
      if (d2 == std::string::npos || d2 == 0 || d2 + 1 >= rest.size())
        throw ScenarioError(line, "fire keys are fire.<id>.<field>");
      FireSpec& f = fire_ref(rest.substr(0, d2));
      const std::string field = rest.substr(d2 + 1);
      if (field == "position") {
        f.position = parse_vec3(value, line);
        f.position_set = true;
      } else if (field == "temperature") f.temperature = parse_double(value, line);
      else if (field == "type") {
        if (value == "indoor") f.type = FireType::Indoor;
        else if (value == "facade") f.type = FireType::Facade;
        else if (value == "outdoor") f.type = FireType::Outdoor;
        else
          throw ScenarioError(line, "fire type must be indoor, facade, or outdoor, got '" +
                                        value + "'");
        f.type_set = true;
      } else throw ScenarioError(line, "unknown key fire.<id>." + field);
    } else if (section == "zone") {
      const std::size_t d2 = rest.find('.');
      if (d2 == std::string::npos || d2 == 0 || d2 + 1 >= rest.size())
        throw ScenarioError(line, "zone keys are zone.<id>.<field>");
      ZoneSpec& z = zone_ref(rest.substr(0, d2));
      const std::string field = rest.substr(d2 + 1);
      if (field == "min") {
        z.min = parse_vec3(value, line);
        z.min_set = true;
      } else if (field == "max") {
        z.max = parse_vec3(value, line);
        z.max_set = true;
      } else if (field == "overlap") z.may_overlap = parse_bool(value, line);
      else throw ScenarioError(line, "unknown key zone.<id>." + field);
    } else {
      throw ScenarioError(line, "unknown section '" + section + "'");
    }
  }

  // Cross-field validation. Line numbers are gone by now, so these report 0.
  const auto fail = [](const std::string& what) { throw ScenarioError(0, what); };
  if (!duration_set || sc.duration_ticks < 1) fail("sim.duration_ticks must be set and positive");
  if (sc.tick_rate < 1) fail("sim.tick_rate must be positive");
  if (sc.thermal.width < 2 || sc.thermal.height < 2) fail("thermal image too small");
  if (sc.lidar.azimuth_count < 1 || sc.lidar.elevation_count < 1) fail("empty lidar pattern");
  for (RobotSpec& r : sc.robots) {
    if (!r.home_set) r.home = r.start;
    if (r.kind == RobotKind::Ugv && r.max_speed > 0.7)
      fail("robot " + r.id + ": ground robots are limited to 0.7 m/s");
    if (r.max_speed <= 0.0) fail("robot " + r.id + ": max_speed must be positive");
    for (const RobotSpec& other : sc.robots) {
      if (&other != &r && other.priority == r.priority)
        fail("robots " + r.id + " and " + other.id + " share priority " +
             std::to_string(r.priority));
    }
  }
  for (const FireSpec& f : sc.fires) {
    if (!f.position_set) fail("fire " + f.id + ": position not set");
    if (!f.type_set) fail("fire " + f.id + ": type not set");
    if (f.temperature <= sc.thermal.ambient_c)
      fail("fire " + f.id + ": temperature below ambient");
  }
  for (const ZoneSpec& z : sc.zones) {
    if (!z.min_set || !z.max_set) fail("zone " + z.id + ": needs both min and max");
    for (int i = 0; i < 3; ++i)
      if (z.max[i] < z.min[i]) fail("zone " + z.id + ": max below min");
  }
  return sc;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario " + path);
  return parse_scenario(in);
}

}  // namespace embr
