#pragma once

// Closed-loop mission simulator.
//
// Each tick runs four phases, for every robot in declaration order:
//   1. log     — the true state entering the tick is appended to the log.
//   2. sense   — sensors are synthesized from the true state and fed to the
//                particle filter; everything downstream runs on its estimate.
//   3. decide  — the robot's behavior tree is ticked; task implementations
//                plan paths and leave a velocity command for this tick.
//   4. move    — airspace-zone entry is negotiated, then the command is
//                integrated into the true state (speed-clamped).
//
// The estimation side never touches the true state: it sees measurements,
// the map, and its own pose belief. Conversely, physical outcomes (motion,
// reaching a fire, line of sight to it) are judged on the true state.
//
// Noise streams derive statelessly from the master seed per (sensor, robot,
// tick), so a run is a pure function of the scenario: repeated runs write
// byte-identical logs, and the run report is recomputed from those logs
// alone — `recompute_report` on a log directory reproduces it exactly.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "embr/bt.hpp"
#include "embr/coordination.hpp"
#include "embr/csv.hpp"
#include "embr/fire.hpp"
#include "embr/geometry.hpp"
#include "embr/likelihood_grid.hpp"
#include "embr/mcl.hpp"
#include "embr/mission.hpp"
#include "embr/planner.hpp"
#include "embr/raycast.hpp"
#include "embr/rng.hpp"
#include "embr/sim/building.hpp"
#include "embr/sim/scenario.hpp"
#include "embr/sim/sensors.hpp"
#include "embr/voxel_grid.hpp"

namespace embr {

// Vertical clearance two airborne robots must keep while both hold the same
// zone during a priority handover.
inline constexpr double kMinVerticalSeparation = 1.5;

// How fast a robot can turn in place.
inline constexpr double kYawRate = 2.0;  // rad/s

struct RobotReport {
  std::string id;
  double pos_rmse = 0.0;       // meters, over ticks with a filter estimate
  double yaw_rmse = 0.0;       // radians, same ticks
  double path_length = 0.0;    // meters of true motion
  long mcl_updates = 0;        // filter update cycles that ran
  bool operator==(const RobotReport&) const = default;
};

struct RunReport {
  long ticks = 0;
  std::vector<RobotReport> robots;
  int fires_total = 0;
  int fires_extinguished = 0;
  std::map<std::string, long> extinguish_ticks;
  long coordination_violations = 0;
  // Measured by run(); recomputation leaves it zero and it is not serialized,
  // so logs and reports stay reproducible.
  double wall_clock_seconds = 0.0;
  bool operator==(const RunReport&) const = default;
};

namespace simdetail {

inline std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open log " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (header) {
      header = false;
      continue;
    }
    if (line.empty()) continue;
    rows.push_back(split(line, ','));
  }
  return rows;
}

inline double field_d(const std::vector<std::string>& row, std::size_t i) {
  return std::stod(row.at(i));
}
inline long field_l(const std::vector<std::string>& row, std::size_t i) {
  return std::stol(row.at(i));
}

}  // namespace simdetail

// Rebuilds the run report from a log directory, using nothing but the files
// in it. `Simulator::run` reports through this same function, so the report
// it returns is by construction recoverable from the persisted logs.
inline RunReport recompute_report(const std::string& dir) {
  namespace sd = simdetail;
  RunReport rep;

  struct RobotMeta {
    std::string id;
    RobotKind kind = RobotKind::Uav;
    int priority = 0;
  };
  std::vector<RobotMeta> robots;
  for (const auto& row : sd::read_csv(dir + "/robots.csv"))
    robots.push_back({row.at(0), row.at(1) == "ugv" ? RobotKind::Ugv : RobotKind::Uav,
                      static_cast<int>(sd::field_l(row, 2))});

  struct ZoneMeta {
    std::string id;
    Aabb volume;
  };
  std::vector<ZoneMeta> zones;
  for (const auto& row : sd::read_csv(dir + "/zones.csv")) {
    ZoneMeta z{row.at(0), {}};
    z.volume.min = Vec3(sd::field_d(row, 1), sd::field_d(row, 2), sd::field_d(row, 3));
    z.volume.max = Vec3(sd::field_d(row, 4), sd::field_d(row, 5), sd::field_d(row, 6));
    zones.push_back(std::move(z));
  }

  // tick -> per-robot pose, dense in tick order.
  std::map<std::string, std::vector<std::pair<long, Pose>>> truth;
  long last_tick = 0;
  for (const auto& row : sd::read_csv(dir + "/ground_truth.csv")) {
    Pose p;
    p.x = sd::field_d(row, 2);
    p.y = sd::field_d(row, 3);
    p.z = sd::field_d(row, 4);
    p.yaw = sd::field_d(row, 5);
    const long tick = sd::field_l(row, 0);
    truth[row.at(1)].push_back({tick, p});
    last_tick = std::max(last_tick, tick);
  }
  rep.ticks = last_tick;

  for (const RobotMeta& rm : robots) {
    RobotReport rr;
    rr.id = rm.id;
    const auto& rows = truth[rm.id];
    for (std::size_t i = 1; i < rows.size(); ++i)
      rr.path_length += (rows[i].second.position() - rows[i - 1].second.position()).norm();
    std::map<long, Pose> by_tick;
    for (const auto& [t, p] : rows) by_tick[t] = p;
    double pos_sq = 0.0, yaw_sq = 0.0;
    long n = 0;
    for (const auto& row : sd::read_csv(dir + "/mcl_" + rm.id + ".csv")) {
      const auto it = by_tick.find(sd::field_l(row, 0));
      if (it == by_tick.end()) continue;
      const Vec3 est(sd::field_d(row, 1), sd::field_d(row, 2), sd::field_d(row, 3));
      pos_sq += (est - it->second.position()).squaredNorm();
      const double dyaw = wrap_angle(sd::field_d(row, 4) - it->second.yaw);
      yaw_sq += dyaw * dyaw;
      ++n;
    }
    rr.mcl_updates = n;
    if (n > 0) {
      rr.pos_rmse = std::sqrt(pos_sq / n);
      rr.yaw_rmse = std::sqrt(yaw_sq / n);
    }
    rep.robots.push_back(std::move(rr));
  }

  for (const auto& row : sd::read_csv(dir + "/fires.csv")) {
    if (row.at(2) == "active") ++rep.fires_total;
    else if (row.at(2) == "extinguished") {
      ++rep.fires_extinguished;
      rep.extinguish_ticks[row.at(1)] = sd::field_l(row, 0);
    }
  }

  // Replay the coordination log against the true trajectories. A robot
  // physically inside a zone volume must hold that zone's grant at the time,
  // and airborne robots sharing a volume during a handover must keep
  // vertical separation. Events at tick t precede the pose rows at t + 1.
  struct CoordRow {
    long tick;
    std::string robot, zone, event;
  };
  std::vector<CoordRow> events;
  for (const auto& row : sd::read_csv(dir + "/coordination.csv"))
    events.push_back({sd::field_l(row, 0), row.at(1), row.at(2), row.at(3)});
  std::map<std::string, std::string> holder;  // robot -> zone
  std::size_t next_event = 0;
  for (long t = -1; t < rep.ticks; ++t) {
    while (next_event < events.size() && events[next_event].tick <= t) {
      const CoordRow& e = events[next_event++];
      if (e.event == "grant") holder[e.robot] = e.zone;
      else if (e.event == "release") holder.erase(e.robot);
    }
    const long row_tick = t + 1;
    for (const RobotMeta& rm : robots) {
      const auto& rows = truth[rm.id];
      if (row_tick >= static_cast<long>(rows.size())) continue;
      const Vec3 p = rows[static_cast<std::size_t>(row_tick)].second.position();
      for (const ZoneMeta& z : zones) {
        if (!z.volume.contains(p)) continue;
        const auto it = holder.find(rm.id);
        if (it == holder.end() || it->second != z.id) ++rep.coordination_violations;
      }
    }
    for (std::size_t i = 0; i < robots.size(); ++i) {
      if (robots[i].kind != RobotKind::Uav) continue;
      const auto& ri = truth[robots[i].id];
      if (row_tick >= static_cast<long>(ri.size())) continue;
      const Vec3 pi = ri[static_cast<std::size_t>(row_tick)].second.position();
      for (std::size_t j = i + 1; j < robots.size(); ++j) {
        if (robots[j].kind != RobotKind::Uav) continue;
        const auto& rj = truth[robots[j].id];
        if (row_tick >= static_cast<long>(rj.size())) continue;
        const Vec3 pj = rj[static_cast<std::size_t>(row_tick)].second.position();
        for (const ZoneMeta& z : zones) {
          if (z.volume.contains(pi) && z.volume.contains(pj) &&
              std::abs(pi.z() - pj.z()) < kMinVerticalSeparation) {
            ++rep.coordination_violations;
          }
        }
      }
    }
  }
  return rep;
}

inline nlohmann::json report_to_json(const RunReport& rep) {
  nlohmann::json j;
  j["ticks"] = rep.ticks;
  j["fires_total"] = rep.fires_total;
  j["fires_extinguished"] = rep.fires_extinguished;
  j["extinguish_ticks"] = rep.extinguish_ticks;
  j["coordination_violations"] = rep.coordination_violations;
  j["robots"] = nlohmann::json::array();
  for (const RobotReport& r : rep.robots) {
    nlohmann::json jr;
    jr["id"] = r.id;
    jr["pos_rmse"] = r.pos_rmse;
    jr["yaw_rmse"] = r.yaw_rmse;
    jr["path_length"] = r.path_length;
    jr["mcl_updates"] = r.mcl_updates;
    j["robots"].push_back(std::move(jr));
  }
  return j;
}

class Simulator {
 public:
  explicit Simulator(Scenario scenario) : sc_(std::move(scenario)) {
    if (sc_.map_file) {
      base_map_.emplace(load_map(*sc_.map_file));
      // External maps carry no building metadata: GPS works everywhere and
      // the map origin plane serves as the ground reference.
      gps_shadow_ = Aabb{Vec3::Zero(), Vec3::Zero()};
      ground_z_ = base_map_->origin().z();
    } else {
      Building b = generate_building(sc_.building, sc_.seed);
      gps_shadow_ = b.shell;
      ground_z_ = b.ground_z;
      base_map_.emplace(std::move(b.map));
    }
    likelihood_.emplace(
        build_likelihood_grid(*base_map_, 2.0 * base_map_->resolution()));

    for (const ZoneSpec& z : sc_.zones) {
      registry_.add_zone(Zone{z.id, Aabb{z.min, z.max}, z.may_overlap});
      zone_volume_[z.id] = Aabb{z.min, z.max};
    }
    for (const RobotSpec& r : sc_.robots) {
      registry_.register_robot(r.id, r.kind, r.priority, r.altitude_band);
      priority_[r.id] = r.priority;
    }

    // Each fire is a burning object: it occupies a ball of voxels matching
    // the radius its thermal signature renders at, so LIDAR beams aimed
    // anywhere on the visible disc return from the object instead of from
    // whatever lies behind it. The prior map used for planning,
    // localization, and occlusion stays free of it — the robots have never
    // mapped it.
    world_map_.emplace(*base_map_);
    const double fire_r = std::max(sc_.thermal.fire_radius, base_map_->resolution() / 2.0);
    const int reach = static_cast<int>(std::ceil(fire_r / base_map_->resolution()));
    for (const FireSpec& f : sc_.fires) {
      if (base_map_->state_at(f.position) != CellState::Free)
        throw std::invalid_argument("fire " + f.id + " is not in free space");
      const Idx3 center = base_map_->world_to_index(f.position);
      for (int dz = -reach; dz <= reach; ++dz)
        for (int dy = -reach; dy <= reach; ++dy)
          for (int dx = -reach; dx <= reach; ++dx) {
            const Idx3 cell = center + Idx3(dx, dy, dz);
            if (!world_map_->in_bounds(cell) || world_map_->occupied(cell)) continue;
            if ((world_map_->index_to_center(cell) - f.position).norm() <= fire_r)
              world_map_->set_occupied(cell);
          }
      fires_.push_back({f, true, -1});
    }

    robots_.reserve(sc_.robots.size());
    for (std::size_t i = 0; i < sc_.robots.size(); ++i) {
      const RobotSpec& spec = sc_.robots[i];
      if (base_map_->state_at(spec.start.position()) != CellState::Free)
        throw std::invalid_argument("robot " + spec.id + " does not start in free space");
      for (const ZoneSpec& z : sc_.zones) {
        const Aabb vol{z.min, z.max};
        if (vol.contains(spec.start.position()) || vol.contains(spec.home.position()))
          throw std::invalid_argument("robot " + spec.id +
                                      " starts or homes inside zone " + z.id);
      }
      auto ctx = std::make_unique<RobotCtx>();
      ctx->spec = spec;
      ctx->truth = spec.start;
      ctx->prev_truth = spec.start;
      ctx->nav_map = inflated_map(spec.radius);
      ctx->filter = std::make_unique<MclFilter>(
          spec.mcl.config, &*likelihood_,
          derive_rng(sc_.seed, "mcl", i).next_u64());
      ctx->filter->reset(spec.start,
                         Vec3(spec.mcl.init_spread_xy, spec.mcl.init_spread_xy,
                              spec.mcl.init_spread_z),
                         spec.mcl.init_spread_yaw);
      ctx->est = ctx->filter->last_estimate();
      if (!spec.waypoints.empty()) {
        ctx->runtime = std::make_unique<MissionRuntime>(*this, i);
        ctx->runner = std::make_unique<TreeRunner>(
            build_fire_mission_tree(spec.kind, spec.waypoints, spec.home,
                                    sc_.mission.budget_ticks),
            *ctx->runtime);
        seed_mission_blackboard(ctx->bb, spec.waypoints, spec.home);
      }
      robots_.push_back(std::move(ctx));
    }
  }

  Simulator(const Simulator&) = delete;
  Simulator& operator=(const Simulator&) = delete;

  const VoxelGrid& map() const { return *base_map_; }
  const Scenario& scenario() const { return sc_; }

  // Executes the scenario and writes all logs plus report.json into out_dir.
  // One-shot: the simulator state is consumed by the run.
  RunReport run(const std::string& out_dir) {
    if (ran_) throw std::logic_error("Simulator::run may only be called once");
    ran_ = true;
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const auto t0 = std::chrono::steady_clock::now();
    const double dt = 1.0 / static_cast<double>(sc_.tick_rate);

    std::ostringstream gt;
    gt << "tick,robot,x,y,z,yaw\n";
    const auto log_truth = [&](long tick) {
      for (const auto& c : robots_) {
        gt << tick << ',' << c->spec.id << ',' << g17(c->truth.x) << ',' << g17(c->truth.y)
           << ',' << g17(c->truth.z) << ',' << g17(c->truth.yaw) << '\n';
      }
    };

    for (tick_ = 0; tick_ < sc_.duration_ticks; ++tick_) {
      log_truth(tick_);
      for (std::size_t i = 0; i < robots_.size(); ++i) sense(i);
      for (const auto& c : robots_) {
        c->cmd = Vec3::Zero();
        c->cmd_yaw = c->truth.yaw;
        if (c->runner) c->runner->tick(c->bb);
      }
      for (const auto& c : robots_) move(*c, dt);
    }
    log_truth(sc_.duration_ticks);

    write_file(out_dir + "/ground_truth.csv", gt.str());
    {
      std::ostringstream os;
      os << "id,kind,priority,altitude_band\n";
      for (const auto& c : robots_)
        os << c->spec.id << ',' << (c->spec.kind == RobotKind::Ugv ? "ugv" : "uav") << ','
           << c->spec.priority << ',' << c->spec.altitude_band << '\n';
      write_file(out_dir + "/robots.csv", os.str());
    }
    {
      std::ostringstream os;
      os << "id,min_x,min_y,min_z,max_x,max_y,max_z\n";
      for (const ZoneSpec& z : sc_.zones)
        os << z.id << ',' << g17(z.min.x()) << ',' << g17(z.min.y()) << ',' << g17(z.min.z())
           << ',' << g17(z.max.x()) << ',' << g17(z.max.y()) << ',' << g17(z.max.z()) << '\n';
      write_file(out_dir + "/zones.csv", os.str());
    }
    {
      std::ostringstream os;
      os << "tick,fire,event,x,y,z\n";
      for (const FireState& f : fires_)
        os << 0 << ',' << f.spec.id << ",active," << g17(f.spec.position.x()) << ','
           << g17(f.spec.position.y()) << ',' << g17(f.spec.position.z()) << '\n';
      for (const FireState& f : fires_) {
        if (f.active) continue;
        os << f.out_tick << ',' << f.spec.id << ",extinguished," << g17(f.spec.position.x())
           << ',' << g17(f.spec.position.y()) << ',' << g17(f.spec.position.z()) << '\n';
      }
      write_file(out_dir + "/fires.csv", os.str());
    }
    write_coordination_log(out_dir + "/coordination.csv", registry_.events());
    for (const auto& c : robots_) {
      write_mcl_trace(out_dir + "/mcl_" + c->spec.id + ".csv", c->filter->trace());
      if (c->runner) write_bt_events(out_dir + "/bt_" + c->spec.id + ".csv", c->runner->events());
      else write_bt_events(out_dir + "/bt_" + c->spec.id + ".csv", {});
      write_fire_report(out_dir + "/fire_report_" + c->spec.id + ".csv", c->tracker);
    }

    RunReport rep = recompute_report(out_dir);
    write_file(out_dir + "/report.json", report_to_json(rep).dump(2) + "\n");
    rep.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
  }

 private:
  struct NavState {
    std::vector<Vec3> path;
    std::size_t target = 0;
    Vec3 goal = Vec3::Zero();
    bool active = false;
  };

  struct RobotCtx;

  class MissionRuntime : public TaskRuntime {
   public:
    MissionRuntime(Simulator& sim, std::size_t robot) : sim_(sim), robot_(robot) {}
    void start(TaskHandle& h, Blackboard& bb) override { sim_.task_start(robot_, h, bb); }
    Status poll(TaskHandle& h, Blackboard& bb) override { return sim_.task_poll(robot_, h, bb); }
    void cancel(TaskHandle& h, Blackboard& bb) override { sim_.task_cancel(robot_, h, bb); }

   private:
    Simulator& sim_;
    std::size_t robot_;
  };

  struct RobotCtx {
    RobotSpec spec;
    Pose truth;
    Pose prev_truth;
    std::unique_ptr<MclFilter> filter;
    PoseEstimate est;
    std::vector<Vec3> last_cloud;  // body frame, from this tick's sweep
    Blackboard bb;
    std::unique_ptr<MissionRuntime> runtime;
    std::unique_ptr<TreeRunner> runner;
    FireTracker tracker;
    const VoxelGrid* nav_map = nullptr;
    NavState nav;
    std::size_t explore_idx = 0;
    std::optional<Vec3> approach_goal;
    long dwell = 0;
    int extinguish_target = -1;
    Vec3 cmd = Vec3::Zero();
    double cmd_yaw = 0.0;
  };

  struct FireState {
    FireSpec spec;
    bool active = true;
    long out_tick = -1;
  };

  enum class NavResult { Running, Arrived, Failed };

  static void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
  }

  const VoxelGrid* inflated_map(double radius) {
    if (radius <= 0.0) return &*base_map_;
    const long key = std::lround(radius * 1000.0);
    auto it = inflated_.find(key);
    if (it == inflated_.end())
      it = inflated_.emplace(key, inflate(*base_map_, radius)).first;
    return &it->second;
  }

  // --- phase 2: sensing + state estimation -------------------------------

  void sense(std::size_t i) {
    RobotCtx& c = *robots_[i];
    Rng odom_rng = derive_rng(sc_.seed, "odom", i, static_cast<uint64_t>(tick_));
    Rng lidar_rng = derive_rng(sc_.seed, "lidar", i, static_cast<uint64_t>(tick_));
    Rng gps_rng = derive_rng(sc_.seed, "gps", i, static_cast<uint64_t>(tick_));
    Rng imu_rng = derive_rng(sc_.seed, "imu", i, static_cast<uint64_t>(tick_));
    Rng alt_rng = derive_rng(sc_.seed, "alt", i, static_cast<uint64_t>(tick_));

    c.filter->add_odometry(synth_odometry(c.prev_truth, c.truth, sc_.noise, odom_rng));
    c.last_cloud = synth_lidar(c.truth, *world_map_, sc_.lidar, sc_.noise.lidar_sigma, lidar_rng);

    SensorFrame frame;
    const std::size_t cap = static_cast<std::size_t>(std::max(1, c.spec.mcl.max_cloud_points));
    const std::size_t stride = std::max<std::size_t>(1, c.last_cloud.size() / cap);
    for (std::size_t k = 0; k < c.last_cloud.size(); k += stride)
      frame.cloud.push_back(c.last_cloud[k]);
    frame.gps = synth_gps(c.truth, sc_.noise, gps_shadow_, gps_rng);
    const ImuReading imu = synth_imu(c.truth, sc_.noise, imu_rng);
    frame.imu_roll = imu.roll;
    frame.imu_pitch = imu.pitch;
    frame.imu_yaw = imu.yaw;
    if (c.spec.kind == RobotKind::Uav)
      frame.altimeter = synth_altimeter(c.truth, ground_z_, sc_.noise, alt_rng);
    c.filter->update(frame, tick_);
    c.est = c.filter->last_estimate();
    c.prev_truth = c.truth;
  }

  // --- phase 3: task implementations backing the behavior tree -----------

  void task_start(std::size_t i, TaskHandle& h, Blackboard&) {
    RobotCtx& c = *robots_[i];
    if (h.task_id == tasks::kExplore) {
      c.explore_idx = 0;
      c.nav.active = false;
    } else if (h.task_id == tasks::kApproachFire) {
      c.approach_goal.reset();
      c.nav.active = false;
    } else if (h.task_id == tasks::kNavHome) {
      c.nav.active = false;
    } else if (h.task_id == tasks::kExtinguishFire) {
      c.dwell = 0;
      c.extinguish_target = -1;
    }
  }

  Status task_poll(std::size_t i, TaskHandle& h, Blackboard& bb) {
    RobotCtx& c = *robots_[i];
    if (h.task_id == tasks::kExplore) return poll_explore(c);
    if (h.task_id == tasks::kDetectFire) return poll_detect(c, bb);
    if (h.task_id == tasks::kApproachFire) return poll_approach(c, bb);
    if (h.task_id == tasks::kExtinguishFire) return poll_extinguish(c, bb);
    if (h.task_id == tasks::kNavHome) return poll_home(c);
    throw std::logic_error("unknown task " + h.task_id);
  }

  void task_cancel(std::size_t i, TaskHandle& h, Blackboard&) {
    RobotCtx& c = *robots_[i];
    if (h.task_id == tasks::kExplore || h.task_id == tasks::kApproachFire ||
        h.task_id == tasks::kNavHome) {
      c.nav.active = false;
      c.cmd = Vec3::Zero();
    }
    if (h.task_id == tasks::kExtinguishFire) c.dwell = 0;
  }

  Status poll_explore(RobotCtx& c) {
    const auto& wps = c.spec.waypoints;
    while (c.explore_idx < wps.size()) {
      switch (step_nav(c, wps[c.explore_idx])) {
        case NavResult::Running: return Status::Running;
        case NavResult::Failed: return Status::Failure;
        case NavResult::Arrived: ++c.explore_idx; break;
      }
    }
    return Status::Success;
  }

  Status poll_detect(RobotCtx& c, Blackboard& bb) {
    // Sensor side: render what the camera physically sees.
    std::vector<ThermalSource> sources;
    for (const FireState& f : fires_)
      if (f.active) sources.push_back({f.spec.position, f.spec.temperature});
    ThermalImage img = synth_thermal(c.truth, sources, *base_map_, sc_.thermal);
    // Estimation side: from here on only the image, the point cloud, and the
    // pose belief are available.
    img.camera_pose = c.est.pose;
    const auto detections = segment_fire(img, fire_cfg_.threshold_c, fire_cfg_.min_pixels);
    if (!detections.empty()) {
      const Mat3 rot = c.est.pose.rotation();
      const Vec3 origin = c.est.pose.position();
      std::vector<Vec3> cloud;
      cloud.reserve(c.last_cloud.size());
      for (const Vec3& p : c.last_cloud) cloud.push_back(rot * p + origin);
      for (const FireDetection& det : detections) {
        const FireRay ray = pixel_to_ray(det, img);
        const RangeEstimate range = associate_range(ray, cloud, fire_cfg_.angular_window,
                                                    *base_map_, sc_.lidar.max_range, fire_cfg_);
        // A fallback range that also missed the map is a sentinel, not
        // evidence; repeating it every tick would build a confident track at
        // a fictitious point, so wait for a tick with real range support.
        if (range.source == RangeSource::MapFallback &&
            range.range >= sc_.lidar.max_range - 1e-9)
          continue;
        c.tracker.observe(make_measurement(ray, range, fire_cfg_), tick_);
      }
    }
    for (const FireTracker::Track& t : c.tracker.tracks()) {
      if (t.belief.measurement_count >= sc_.mission.confirm_count &&
          t.last_update_tick + sc_.mission.detect_recent_ticks >= tick_ &&
          t.belief.has_estimate()) {
        bb.set(bbkeys::kFireConfirmed, true);
        bb.set(bbkeys::kFirePosition, Vec3(t.belief.estimate()));
        return Status::Success;
      }
    }
    return Status::Running;
  }

  Status poll_approach(RobotCtx& c, Blackboard& bb) {
    const bool* confirmed = bb.get_if<bool>(bbkeys::kFireConfirmed);
    const Vec3* fire = bb.get_if<Vec3>(bbkeys::kFirePosition);
    if (!confirmed || !*confirmed || !fire) return Status::Failure;
    const Vec3 est_p = c.est.pose.position();
    if ((est_p - *fire).norm() <= sc_.mission.attack_range) {
      c.nav.active = false;
      c.cmd = Vec3::Zero();
      c.cmd_yaw = std::atan2(fire->y() - est_p.y(), fire->x() - est_p.x());
      return Status::Success;
    }
    if (!c.approach_goal) {
      Vec3 away = est_p - *fire;
      away.z() = 0.0;
      if (away.norm() < 1e-6) away = Vec3(1, 0, 0);
      else away.normalize();
      Vec3 vantage = *fire + away * sc_.mission.standoff;
      vantage.z() = c.spec.kind == RobotKind::Ugv ? c.spec.start.z : fire->z() + 0.8;
      c.approach_goal = vantage;
    }
    switch (step_nav(c, *c.approach_goal)) {
      case NavResult::Running: return Status::Running;
      case NavResult::Failed: return Status::Failure;
      case NavResult::Arrived:
        return (c.est.pose.position() - *fire).norm() <= sc_.mission.attack_range
                   ? Status::Success
                   : Status::Failure;
    }
    return Status::Failure;
  }

  Status poll_extinguish(RobotCtx& c, Blackboard& bb) {
    const Vec3* fire_est = bb.get_if<Vec3>(bbkeys::kFirePosition);
    if (!fire_est) return Status::Failure;
    if (c.extinguish_target < 0) {
      double best = 2.0;  // association gate between belief and true fire
      for (std::size_t k = 0; k < fires_.size(); ++k) {
        if (!fires_[k].active) continue;
        const double d = (fires_[k].spec.position - *fire_est).norm();
        if (d < best) {
          best = d;
          c.extinguish_target = static_cast<int>(k);
        }
      }
      if (c.extinguish_target < 0) return Status::Failure;
    }
    FireState& f = fires_[static_cast<std::size_t>(c.extinguish_target)];
    if (!f.active) {  // another robot already put it out
      bb.erase(bbkeys::kFireConfirmed);
      bb.erase(bbkeys::kFirePosition);
      return Status::Success;
    }
    // The agent decided from its belief; whether water reaches the flames is
    // physics, so range and line of sight are judged on the true state.
    const Vec3 true_p = c.truth.position();
    const double true_dist = (true_p - f.spec.position).norm();
    const bool in_range = true_dist <= sc_.mission.attack_range + 0.5;
    // Sight the near face of the burning object rather than its center.
    const Vec3 sight = true_dist > 0.5
                           ? Vec3(f.spec.position + (true_p - f.spec.position) * (0.5 / true_dist))
                           : true_p;
    const bool visible = line_of_sight(true_p, sight, *base_map_);
    const Vec3 est_p = c.est.pose.position();
    c.cmd = Vec3::Zero();
    c.cmd_yaw = std::atan2(fire_est->y() - est_p.y(), fire_est->x() - est_p.x());
    if (in_range && visible) {
      if (++c.dwell >= sc_.mission.dwell_ticks) {
        f.active = false;
        f.out_tick = tick_;
        bb.erase(bbkeys::kFireConfirmed);
        bb.erase(bbkeys::kFirePosition);
        return Status::Success;
      }
    } else {
      // Drifted off station: close back in on the belief position.
      step_nav(c, *fire_est + Vec3(0, 0, c.spec.kind == RobotKind::Ugv ? 0.0 : 0.8));
    }
    return Status::Running;
  }

  Status poll_home(RobotCtx& c) {
    Vec3 home = c.spec.home.position();
    switch (step_nav(c, home)) {
      case NavResult::Running: return Status::Running;
      case NavResult::Failed: return Status::Failure;
      case NavResult::Arrived:
        c.cmd_yaw = c.spec.home.yaw;
        return Status::Success;
    }
    return Status::Failure;
  }

  // Nudges a position to the nearest free cell center when it has drifted
  // into an occupied voxel; planning would otherwise reject it. lock_z keeps
  // ground robots on their driving plane.
  Vec3 snap_free(const VoxelGrid& m, Vec3 p, bool lock_z) const {
    const Aabb b = m.bounds();
    const double eps = m.resolution() * 1e-3;
    for (int k = 0; k < 3; ++k) p[k] = std::clamp(p[k], b.min[k] + eps, b.max[k] - eps);
    if (m.state_at(p) == CellState::Free) return p;
    const int reach = 4;  // cells
    std::optional<Idx3> center = m.world_to_index(p);
    if (!center) return p;
    double best_d = std::numeric_limits<double>::infinity();
    Vec3 best = p;
    for (int dz = lock_z ? 0 : -reach; dz <= (lock_z ? 0 : reach); ++dz) {
      for (int dy = -reach; dy <= reach; ++dy) {
        for (int dx = -reach; dx <= reach; ++dx) {
          const Idx3 idx = *center + Idx3(dx, dy, dz);
          if (!m.in_bounds(idx) || m.occupied(idx)) continue;
          const Vec3 q = m.index_to_center(idx);
          const double d = (q - p).norm();
          if (d < best_d) {
            best_d = d;
            best = q;
          }
        }
      }
    }
    return best;
  }

  NavResult step_nav(RobotCtx& c, Vec3 goal) {
    const double dt = 1.0 / static_cast<double>(sc_.tick_rate);
    const bool ground = c.spec.kind == RobotKind::Ugv;
    Vec3 est_p = c.est.pose.position();
    if (ground) {
      est_p.z() = c.spec.start.z;
      goal.z() = c.spec.start.z;
    }
    if (c.nav.active && (c.nav.goal - goal).norm() > 1e-9) c.nav.active = false;
    if (c.nav.active && distance_to_path(c.nav.path, est_p) > sc_.mission.replan_deviation)
      c.nav.active = false;
    if (!c.nav.active) {
      PlanRequest req;
      req.start = snap_free(*c.nav_map, est_p, ground);
      req.goal = snap_free(*c.nav_map, goal, ground);
      req.map = c.nav_map;
      req.inflation_radius = 0.0;  // the map is pre-inflated per robot
      req.mode = ground ? PlanMode::TwoD : PlanMode::ThreeD;
      try {
        c.nav.path = plan_lazy_theta_star(req).waypoints;
      } catch (const UnreachableError&) {
        return NavResult::Failed;
      } catch (const std::invalid_argument&) {
        return NavResult::Failed;
      }
      c.nav.target = 0;
      c.nav.goal = goal;
      c.nav.active = true;
    }
    if ((est_p - goal).norm() <= sc_.mission.arrive_tolerance) {
      c.nav.active = false;
      c.cmd = Vec3::Zero();
      return NavResult::Arrived;
    }
    while (c.nav.target + 1 < c.nav.path.size() &&
           (c.nav.path[c.nav.target] - est_p).norm() < sc_.mission.lookahead)
      ++c.nav.target;
    Vec3 dir = c.nav.path[c.nav.target] - est_p;
    if (ground) dir.z() = 0.0;
    const double d = dir.norm();
    if (d < 1e-9) {
      if (c.nav.target + 1 < c.nav.path.size()) ++c.nav.target;
      return NavResult::Running;
    }
    double speed = c.spec.max_speed;
    if (c.nav.target + 1 == c.nav.path.size()) speed = std::min(speed, d / dt);
    c.cmd = dir / d * speed;
    if (std::hypot(dir.x(), dir.y()) > 1e-6) c.cmd_yaw = std::atan2(dir.y(), dir.x());
    return NavResult::Running;
  }

  static double distance_to_path(const std::vector<Vec3>& path, const Vec3& p) {
    if (path.empty()) return 0.0;
    double best = (path.front() - p).norm();
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
      const Vec3 a = path[i], b = path[i + 1];
      const Vec3 ab = b - a;
      const double len2 = ab.squaredNorm();
      const double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
      best = std::min(best, (a + t * ab - p).norm());
    }
    return best;
  }

  // --- phase 4: coordination gate + motion integration -------------------

  void move(RobotCtx& c, double dt) {
    if (c.spec.kind == RobotKind::Ugv) c.cmd.z() = 0.0;
    const double n = c.cmd.norm();
    if (n > c.spec.max_speed) c.cmd *= c.spec.max_speed / n;
    const Vec3 pos = c.truth.position();
    Vec3 next = pos + c.cmd * dt;

    std::optional<std::string> held;
    {
      const FleetState fleet = registry_.fleet();
      if (const RobotState* rs = fleet.find(c.spec.id)) held = rs->zone;
    }

    // Yield: a more important robot was granted the zone we hold, so clear
    // out toward home until we are outside the volume.
    if (held) {
      for (const std::string& other : registry_.occupants(*held)) {
        if (other == c.spec.id || priority_.at(other) > c.spec.priority) continue;
        Vec3 out = c.spec.home.position() - pos;
        if (c.spec.kind == RobotKind::Ugv) out.z() = 0.0;
        if (out.norm() < 1e-6) out = Vec3(1, 0, 0);
        else out.normalize();
        next = pos + out * c.spec.max_speed * dt;
        c.nav.active = false;
        break;
      }
    }

    if (held) {
      const Aabb& vol = zone_volume_.at(*held);
      if (!vol.contains(pos) && !vol.contains(next)) {
        registry_.release(c.spec.id, *held, tick_);
        held.reset();
      }
    }

    std::string entering;
    for (const std::string& z : registry_.zones_containing(next)) {
      if (!held || *held != z) {
        entering = z;
        break;
      }
    }
    if (!entering.empty()) {
      if (held) {
        // Still inside another zone: hold position, exit it first.
        next = pos;
        c.cmd = Vec3::Zero();
      } else if (registry_.request_enter(c.spec.id, entering, tick_) == EnterDecision::Wait) {
        next = pos;
        c.cmd = Vec3::Zero();
      }
    }

    c.truth.x = next.x();
    c.truth.y = next.y();
    c.truth.z = next.z();
    const double dyaw = wrap_angle(c.cmd_yaw - c.truth.yaw);
    c.truth.yaw = wrap_angle(c.truth.yaw + std::clamp(dyaw, -kYawRate * dt, kYawRate * dt));
  }

  Scenario sc_;
  std::optional<VoxelGrid> base_map_;   // prior map: planning, localization
  std::optional<VoxelGrid> world_map_;  // prior map plus burning objects
  std::optional<LikelihoodGrid> likelihood_;
  Aabb gps_shadow_;
  double ground_z_ = 0.0;
  ZoneRegistry registry_;
  std::map<std::string, Aabb> zone_volume_;
  std::map<std::string, int> priority_;
  std::map<long, VoxelGrid> inflated_;
  std::vector<std::unique_ptr<RobotCtx>> robots_;
  std::vector<FireState> fires_;
  FireConfig fire_cfg_;
  long tick_ = 0;
  bool ran_ = false;
};

}  // namespace embr
