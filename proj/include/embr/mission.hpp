#pragma once

// The firefighting mission tree.
//
// Every robot runs the same mission shape; the task runtime binds the task
// ids to role-specific behaviors (e.g. the ground robot explores the ground
// floor while a UAV sweeps a facade). The mission body explores while
// watching for a fire, then approaches and extinguishes one if found.
// Whatever the body's outcome — no fire seen, navigation failure, or time
// budget exhausted — the robot always navigates back home:
//
//   Sequence {
//     ForceSuccess {
//       Timeout(budget) {
//         Sequence {
//           Parallel(1) { Leaf(explore), Leaf(detect_fire) }
//           Leaf(approach_fire)
//           Leaf(extinguish_fire)
//         }
//       }
//     }
//     Leaf(nav_home)
//   }
//
// The Parallel(1) gate resolves as soon as either branch finishes. A
// confirmed detection succeeds it (exploration is canceled and the robot
// moves in to attack). Exploration completing with nothing found also
// succeeds it, but the approach task then fails for lack of a confirmed
// fire; a navigation failure fails the gate outright. Either way the body
// fails, ForceSuccess absorbs it, and the go-home leaf still runs.
//
// Exploration waypoints and the home pose travel on the blackboard under the
// keys below; the detection task publishes the confirmed fire position the
// same way for the approach and extinguish tasks.

#include <stdexcept>
#include <string>
#include <vector>

#include "embr/bt.hpp"
#include "embr/geometry.hpp"

namespace embr {

enum class RobotKind { Ugv, Uav };

namespace tasks {
inline constexpr const char* kExplore = "explore";
inline constexpr const char* kDetectFire = "detect_fire";
inline constexpr const char* kApproachFire = "approach_fire";
inline constexpr const char* kExtinguishFire = "extinguish_fire";
inline constexpr const char* kNavHome = "nav_home";
}  // namespace tasks

namespace bbkeys {
inline constexpr const char* kExploreWaypointCount = "explore_waypoint_count";
inline constexpr const char* kExploreWaypointPrefix = "explore_waypoint_";
inline constexpr const char* kHomePosition = "home_position";
inline constexpr const char* kHomeYaw = "home_yaw";
inline constexpr const char* kFireConfirmed = "fire_confirmed";
inline constexpr const char* kFirePosition = "fire_position";
}  // namespace bbkeys

// Builds the mission above. `mission_tick_budget` bounds the body via the
// Timeout decorator (the fail-safe time check); the go-home leaf is outside
// the budget and always reached.
inline BtNode build_fire_mission_tree(RobotKind role, const std::vector<Vec3>& waypoints,
                                      const Pose& home, long mission_tick_budget = 6000) {
  if (role != RobotKind::Ugv && role != RobotKind::Uav)
    throw std::invalid_argument("unknown robot kind");
  if (waypoints.empty())
    throw std::invalid_argument("mission requires at least one exploration waypoint");
  if (mission_tick_budget < 1)
    throw std::invalid_argument("mission tick budget must be positive");
  (void)home;  // carried on the blackboard; see seed_mission_blackboard
  return sequence({
      force_success(timeout(
          mission_tick_budget,
          sequence({
              parallel(1, {leaf(tasks::kExplore), leaf(tasks::kDetectFire)}),
              leaf(tasks::kApproachFire),
              leaf(tasks::kExtinguishFire),
          }))),
      leaf(tasks::kNavHome),
  });
}

// Publishes the mission parameters the leaf tasks read.
inline void seed_mission_blackboard(Blackboard& blackboard, const std::vector<Vec3>& waypoints,
                                    const Pose& home) {
  blackboard.set(bbkeys::kExploreWaypointCount, static_cast<long>(waypoints.size()));
  for (std::size_t i = 0; i < waypoints.size(); ++i)
    blackboard.set(bbkeys::kExploreWaypointPrefix + std::to_string(i), waypoints[i]);
  blackboard.set(bbkeys::kHomePosition, home.position());
  blackboard.set(bbkeys::kHomeYaw, home.yaw);
}

}  // namespace embr
