#pragma once

// Sensor synthesis: everything the estimation stack consumes is produced
// here from the true state plus a noise stream. Estimation code never sees
// the true state itself — only these measurements.

#include <cmath>
#include <optional>
#include <vector>

#include "embr/fire.hpp"
#include "embr/geometry.hpp"
#include "embr/mcl.hpp"
#include "embr/raycast.hpp"
#include "embr/rng.hpp"
#include "embr/sim/scenario.hpp"
#include "embr/voxel_grid.hpp"

namespace embr {

// One LIDAR sweep: evenly spaced azimuths times evenly spaced elevation
// rings, each beam cast against the map. Hits get Gaussian range noise and
// come back as body-frame points; beams that exit the map are dropped.
inline std::vector<Vec3> synth_lidar(const Pose& true_pose, const VoxelGrid& map,
                                     const LidarParams& lp, double sigma, Rng& rng) {
  std::vector<Vec3> cloud;
  cloud.reserve(static_cast<std::size_t>(lp.azimuth_count) * lp.elevation_count);
  const Mat3 rot = true_pose.rotation();
  const Vec3 origin = true_pose.position();
  const double span = lp.elevation_span_deg * kPi / 180.0;
  for (int e = 0; e < lp.elevation_count; ++e) {
    const double elevation =
        lp.elevation_count == 1 ? 0.0 : -span / 2.0 + span * e / (lp.elevation_count - 1);
    const double ce = std::cos(elevation), se = std::sin(elevation);
    for (int a = 0; a < lp.azimuth_count; ++a) {
      const double azimuth = 2.0 * kPi * a / lp.azimuth_count;
      const Vec3 dir_body(ce * std::cos(azimuth), ce * std::sin(azimuth), se);
      const std::optional<double> hit = raycast(origin, rot * dir_body, lp.max_range, map);
      if (!hit) continue;
      const double range = std::max(0.0, *hit + (sigma > 0.0 ? rng.gauss(0.0, sigma) : 0.0));
      cloud.push_back(dir_body * range);
    }
  }
  return cloud;
}

// GPS fix, or nothing while the receiver is shadowed inside the given volume.
inline std::optional<Vec3> synth_gps(const Pose& true_pose, const NoiseParams& n,
                                     const Aabb& gps_shadow, Rng& rng) {
  const Vec3 p = true_pose.position();
  if (gps_shadow.contains(p)) return std::nullopt;
  return Vec3(p.x() + rng.gauss(0.0, n.gps_sigma_xy), p.y() + rng.gauss(0.0, n.gps_sigma_xy),
              p.z() + rng.gauss(0.0, n.gps_sigma_z));
}

struct ImuReading {
  double roll = 0.0;
  double pitch = 0.0;
  double yaw = 0.0;
};

// Attitude with near-truth roll/pitch and a biased, noisier yaw.
inline ImuReading synth_imu(const Pose& true_pose, const NoiseParams& n, Rng& rng) {
  ImuReading imu;
  imu.roll = true_pose.roll + rng.gauss(0.0, n.imu_rp_sigma);
  imu.pitch = true_pose.pitch + rng.gauss(0.0, n.imu_rp_sigma);
  imu.yaw = wrap_angle(true_pose.yaw + n.imu_yaw_bias + rng.gauss(0.0, n.imu_yaw_sigma));
  return imu;
}

// Height above the ground slab.
inline double synth_altimeter(const Pose& true_pose, double ground_z, const NoiseParams& n,
                              Rng& rng) {
  return true_pose.z - ground_z + rng.gauss(0.0, n.altimeter_sigma);
}

// Body-frame motion since the previous tick: the true delta scaled by a
// systematic drift factor, plus noise proportional to how far the robot
// moved. With zero noise and zero drift the output equals the truth exactly.
inline OdomDelta synth_odometry(const Pose& prev, const Pose& cur, const NoiseParams& n,
                                Rng& rng) {
  const double dxw = cur.x - prev.x;
  const double dyw = cur.y - prev.y;
  const double c = std::cos(prev.yaw), s = std::sin(prev.yaw);
  OdomDelta d;
  d.dx = c * dxw + s * dyw;
  d.dy = -s * dxw + c * dyw;
  d.dz = cur.z - prev.z;
  d.dyaw = wrap_angle(cur.yaw - prev.yaw);
  const double dist = d.translation_norm();
  if (n.odom_drift != 0.0) {
    d.dx *= 1.0 + n.odom_drift;
    d.dy *= 1.0 + n.odom_drift;
    d.dz *= 1.0 + n.odom_drift;
  }
  if (n.odom_frac > 0.0 && dist > 0.0) {
    const double sigma = n.odom_frac * dist;
    d.dx += rng.gauss(0.0, sigma);
    d.dy += rng.gauss(0.0, sigma);
    d.dz += rng.gauss(0.0, sigma);
    d.dyaw = wrap_angle(d.dyaw + rng.gauss(0.0, n.odom_frac * std::abs(d.dyaw)));
  }
  return d;
}

// A fire as the thermal camera sees it: map position and core temperature.
struct ThermalSource {
  Vec3 position = Vec3::Zero();
  double temperature = 0.0;
};

// Renders the forward-mounted thermal camera. Each unoccluded source paints
// a filled disc whose pixel radius follows the pinhole model (focal *
// fire_radius / depth), with temperature falling quadratically from the
// source temperature at the center to ambient at the rim. Occlusion is one
// raycast per source: anything solid strictly between camera and source
// suppresses the disc entirely.
inline ThermalImage synth_thermal(const Pose& true_pose, const std::vector<ThermalSource>& fires,
                                  const VoxelGrid& map, const ThermalParams& tp) {
  ThermalImage img =
      make_thermal_image(tp.width, tp.height, tp.focal, tp.ambient_c, true_pose);
  const Vec3 origin = true_pose.position();
  const Mat3 cam_rot = true_pose.rotation() * camera_mount_rotation();
  for (const ThermalSource& f : fires) {
    const Vec3 to = f.position - origin;
    const double dist = to.norm();
    if (dist < 1e-6) continue;
    const std::optional<double> hit = raycast(origin, to / dist, dist, map);
    if (hit && *hit < dist - 0.75 * map.resolution()) continue;
    const std::optional<Eigen::Vector2d> center = project_point(f.position, img);
    if (!center) continue;
    const double depth = (cam_rot.transpose() * to).z();
    const double radius = tp.focal * tp.fire_radius / depth;
    if (radius <= 0.0) continue;
    const int u0 = std::max(0, static_cast<int>(std::floor(center->x() - radius)));
    const int u1 = std::min(tp.width - 1, static_cast<int>(std::ceil(center->x() + radius)));
    const int v0 = std::max(0, static_cast<int>(std::floor(center->y() - radius)));
    const int v1 = std::min(tp.height - 1, static_cast<int>(std::ceil(center->y() + radius)));
    for (int v = v0; v <= v1; ++v) {
      for (int u = u0; u <= u1; ++u) {
        const double du = u - center->x(), dv = v - center->y();
        const double q = (du * du + dv * dv) / (radius * radius);
        if (q > 1.0) continue;
        const double t = f.temperature + (tp.ambient_c - f.temperature) * q;
        if (t > img.at(u, v)) img.at(u, v) = t;
      }
    }
  }
  return img;
}

}  // namespace embr
