#pragma once

// Fleet-level spatial deconfliction.
//
// Airspace is carved into declared zones (facade volumes, indoor floors,
// the outdoor apron). Each robot carries a unique priority — lower number
// means higher priority — and must be granted a zone before entering it.
// A request is granted only when no strictly-higher-priority robot occupies
// the zone and no strictly-higher-priority robot is waiting for it, so a
// freed zone always goes to the most important waiter first. A higher-
// priority robot may be granted a zone a lower-priority one still holds
// (the holder is expected to leave; the simulator monitors separation until
// it does), but never the other way around.
//
// The registry is the single authority: the occupancy check and the
// occupancy record happen under one lock, so interleaved requests can never
// double-grant a zone. Robots that were told to wait simply ask again on
// their next tick. Every request, grant, wait, and release is logged.

#include <algorithm>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "embr/geometry.hpp"
#include "embr/mission.hpp"

namespace embr {

// A declared airspace volume. Overlapping declarations are rejected unless
// both zones are explicitly flagged as allowed to overlap.
struct Zone {
  std::string id;
  Aabb volume;
  bool may_overlap = false;
};

struct RobotState {
  std::string id;
  RobotKind kind = RobotKind::Uav;
  int priority = 0;       // lower number = higher priority; unique fleet-wide
  int altitude_band = 0;  // index of the robot's assigned cruise-height band
  std::optional<std::string> zone;  // zone currently held, if any

  bool operator==(const RobotState&) const = default;
};

struct FleetState {
  std::vector<RobotState> robots;

  const RobotState* find(const std::string& id) const {
    for (const RobotState& r : robots)
      if (r.id == id) return &r;
    return nullptr;
  }

  bool operator==(const FleetState&) const = default;
};

enum class EnterDecision { Granted, Wait };

enum class CoordEventKind { Request, Grant, Wait, Release };

inline const char* to_string(CoordEventKind k) {
  switch (k) {
    case CoordEventKind::Request: return "request";
    case CoordEventKind::Grant: return "grant";
    case CoordEventKind::Wait: return "wait";
    default: return "release";
  }
}

struct CoordEvent {
  long tick = 0;
  std::string robot;
  std::string zone;
  CoordEventKind kind = CoordEventKind::Request;

  bool operator==(const CoordEvent&) const = default;
};

class ZoneRegistry {
 public:
  // Declares a zone. Throws on duplicate ids and on volume overlap with an
  // existing zone unless both carry the may_overlap flag.
  void add_zone(Zone zone) {
    std::lock_guard<std::mutex> lock(mutex_);
    for (const Zone& z : zones_) {
      if (z.id == zone.id) throw std::invalid_argument("duplicate zone id: " + zone.id);
      if (volumes_overlap(z.volume, zone.volume) && !(z.may_overlap && zone.may_overlap))
        throw std::invalid_argument("zone " + zone.id + " overlaps " + z.id +
                                    " without the overlap flag");
    }
    zones_.push_back(std::move(zone));
  }

  // Registers a robot. Priorities must be unique fleet-wide.
  void register_robot(std::string id, RobotKind kind, int priority, int altitude_band = 0) {
    std::lock_guard<std::mutex> lock(mutex_);
    for (const RobotState& r : fleet_.robots) {
      if (r.id == id) throw std::invalid_argument("duplicate robot id: " + id);
      if (r.priority == priority)
        throw std::invalid_argument("priority " + std::to_string(priority) +
                                    " already taken by " + r.id);
    }
    RobotState r;
    r.id = std::move(id);
    r.kind = kind;
    r.priority = priority;
    r.altitude_band = altitude_band;
    fleet_.robots.push_back(std::move(r));
  }

  // Asks to enter a zone. The occupancy/waiter check and the occupancy
  // record are atomic. A robot may hold only one zone at a time.
  EnterDecision request_enter(const std::string& robot, const std::string& zone, long tick) {
    std::lock_guard<std::mutex> lock(mutex_);
    RobotState& r = robot_ref(robot);
    require_zone(zone);
    if (r.zone && *r.zone != zone)
      throw std::logic_error(robot + " still holds zone " + *r.zone);
    events_.push_back({tick, robot, zone, CoordEventKind::Request});
    if (r.zone == zone) {  // already holds it
      events_.push_back({tick, robot, zone, CoordEventKind::Grant});
      return EnterDecision::Granted;
    }
    // A fresh request supersedes any earlier wait by the same robot.
    for (auto& [_, set] : waiting_) set.erase(robot);

    const bool blocked = blocking_occupant(zone, r.priority) || blocking_waiter(zone, r.priority);
    if (blocked) {
      waiting_[zone].insert(robot);
      events_.push_back({tick, robot, zone, CoordEventKind::Wait});
      return EnterDecision::Wait;
    }
    r.zone = zone;
    events_.push_back({tick, robot, zone, CoordEventKind::Grant});
    return EnterDecision::Granted;
  }

  // Gives a zone back. Throws unless the robot currently holds it.
  void release(const std::string& robot, const std::string& zone, long tick) {
    std::lock_guard<std::mutex> lock(mutex_);
    RobotState& r = robot_ref(robot);
    require_zone(zone);
    if (r.zone != zone) throw std::logic_error(robot + " does not hold zone " + zone);
    r.zone.reset();
    events_.push_back({tick, robot, zone, CoordEventKind::Release});
  }

  std::vector<std::string> occupants(const std::string& zone) const {
    std::lock_guard<std::mutex> lock(mutex_);
    std::vector<std::string> out;
    for (const RobotState& r : fleet_.robots)
      if (r.zone == zone) out.push_back(r.id);
    return out;
  }

  std::vector<std::string> waiting(const std::string& zone) const {
    std::lock_guard<std::mutex> lock(mutex_);
    const auto it = waiting_.find(zone);
    if (it == waiting_.end()) return {};
    return {it->second.begin(), it->second.end()};
  }

  FleetState fleet() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return fleet_;
  }

  std::vector<Zone> zones() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return zones_;
  }

  // Zone ids whose volume contains the position, in declaration order.
  std::vector<std::string> zones_containing(const Vec3& position) const {
    std::lock_guard<std::mutex> lock(mutex_);
    std::vector<std::string> out;
    for (const Zone& z : zones_)
      if (z.volume.contains(position)) out.push_back(z.id);
    return out;
  }

  std::vector<CoordEvent> events() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return events_;
  }

 private:
  static bool volumes_overlap(const Aabb& a, const Aabb& b) {
    for (int i = 0; i < 3; ++i)
      if (a.max[i] < b.min[i] || b.max[i] < a.min[i]) return false;
    return true;
  }

  RobotState& robot_ref(const std::string& id) {
    for (RobotState& r : fleet_.robots)
      if (r.id == id) return r;
    throw std::invalid_argument("unknown robot: " + id);
  }

  void require_zone(const std::string& id) const {
    for (const Zone& z : zones_)
      if (z.id == id) return;
    throw std::invalid_argument("unknown zone: " + id);
  }

  bool blocking_occupant(const std::string& zone, int priority) const {
    for (const RobotState& r : fleet_.robots)
      if (r.zone == zone && r.priority < priority) return true;
    return false;
  }

  bool blocking_waiter(const std::string& zone, int priority) const {
    const auto it = waiting_.find(zone);
    if (it == waiting_.end()) return false;
    for (const std::string& id : it->second) {
      for (const RobotState& r : fleet_.robots)
        if (r.id == id && r.priority < priority) return true;
    }
    return false;
  }

  mutable std::mutex mutex_;
  std::vector<Zone> zones_;
  FleetState fleet_;
  std::map<std::string, std::set<std::string>> waiting_;
  std::vector<CoordEvent> events_;
};

// Writes the coordination log: one row per request, grant, wait, or release.
inline void write_coordination_log(const std::string& path,
                                   const std::vector<CoordEvent>& events) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "tick,robot,zone,event\n";
  for (const CoordEvent& e : events)
    out << e.tick << ',' << e.robot << ',' << e.zone << ',' << to_string(e.kind) << '\n';
}

struct RobotAssignment {
  std::string robot_id;
  std::vector<std::string> duties;  // zone ids the robot is responsible for

  bool operator==(const RobotAssignment&) const = default;
};

struct TaskAllocation {
  std::vector<RobotAssignment> assignments;  // sorted by robot id
  std::vector<std::string> unassigned;       // duties no robot covers

  bool operator==(const TaskAllocation&) const = default;
};

// Static role-based allocation for a building with `floors` storeys:
// the ground robot takes the indoor ground floor; the highest-priority UAV
// takes the outdoor fires plus the ground-floor facade; each further UAV in
// priority order takes the next facade up. Leftover duties are reported,
// never dropped. Depends only on robot ids/kinds/priorities, so permuting
// registration order cannot change the result.
inline TaskAllocation assign_tasks(int floors, const FleetState& fleet) {
  if (floors < 1) throw std::invalid_argument("building needs at least one floor");

  std::vector<const RobotState*> uavs, ugvs;
  for (const RobotState& r : fleet.robots)
    (r.kind == RobotKind::Uav ? uavs : ugvs).push_back(&r);
  std::sort(uavs.begin(), uavs.end(),
            [](const RobotState* a, const RobotState* b) { return a->priority < b->priority; });
  std::sort(ugvs.begin(), ugvs.end(),
            [](const RobotState* a, const RobotState* b) { return a->id < b->id; });

  TaskAllocation out;
  std::map<std::string, std::vector<std::string>> duties;
  for (const RobotState& r : fleet.robots) duties[r.id];  // every robot listed

  if (!ugvs.empty()) duties[ugvs.front()->id].push_back("indoor-floor-0");
  else out.unassigned.push_back("indoor-floor-0");

  for (int k = 0; k < floors; ++k) {
    const std::string facade = "facade-" + std::to_string(k);
    if (k < static_cast<int>(uavs.size())) {
      if (k == 0) duties[uavs[0]->id].push_back("outdoor");
      duties[uavs[k]->id].push_back(facade);
    } else {
      out.unassigned.push_back(facade);
    }
  }
  if (uavs.empty()) out.unassigned.push_back("outdoor");

  for (auto& [id, list] : duties) out.assignments.push_back({id, std::move(list)});
  return out;
}

}  // namespace embr
