#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "embr/csv.hpp"
#include "embr/geometry.hpp"
#include "embr/raycast.hpp"
#include "embr/voxel_grid.hpp"

namespace embr {

// Thermal sensor limits in degrees Celsius.
inline constexpr double kThermalMinC = -40.0;
inline constexpr double kThermalMaxC = 330.0;

// Fixed mounting of the thermal camera on a robot body: the optical axis
// looks along the body's +x (forward), image u grows to the robot's right
// (-y) and image v grows downward (-z). Columns map camera axes (x right,
// y down, z forward) into the body frame.
inline Mat3 camera_mount_rotation() {
  Mat3 r;
  r << 0, 0, 1,
      -1, 0, 0,
      0, -1, 0;
  return r;
}

// Calibrated thermal image with pinhole intrinsics and the pose of the body
// carrying the camera, in the map frame.
struct ThermalImage {
  int width = 0;
  int height = 0;
  std::vector<double> temperatures;  // row-major, degrees Celsius
  double focal = 0.0;                // pixels
  double cx = 0.0;                   // principal point
  double cy = 0.0;
  Pose camera_pose;

  double& at(int u, int v) { return temperatures[static_cast<std::size_t>(v) * width + u]; }
  double at(int u, int v) const { return temperatures[static_cast<std::size_t>(v) * width + u]; }
};

// Creates an image filled with a uniform ambient temperature.
inline ThermalImage make_thermal_image(int width, int height, double focal, double ambient_c,
                                       const Pose& camera_pose) {
  if (width <= 0 || height <= 0 || focal <= 0.0) {
    throw std::invalid_argument("make_thermal_image: invalid dimensions or focal length");
  }
  ThermalImage img;
  img.width = width;
  img.height = height;
  img.temperatures.assign(static_cast<std::size_t>(width) * height, ambient_c);
  img.focal = focal;
  img.cx = (width - 1) / 2.0;
  img.cy = (height - 1) / 2.0;
  img.camera_pose = camera_pose;
  return img;
}

// One connected hot region of a thermal image.
struct FireDetection {
  double u = 0.0;  // centroid pixel coordinates
  double v = 0.0;
  int pixel_count = 0;
  double max_temp = 0.0;
};

enum class RangeSource : uint8_t { Lidar, MapFallback };

// A single fire sighting: a map-frame ray with an estimated range and an
// axis-canonical covariance, diag(range variance, lateral, lateral), that is
// rotated onto the ray when fused.
struct FireMeasurement {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitX();
  double range = 0.0;
  RangeSource range_source = RangeSource::Lidar;
  Mat3 covariance = Mat3::Identity();
};

// Accumulated evidence about one fire's 3D position in information form;
// fusing independent measurements is additive, so beliefs are cheap value
// objects that can be shipped between robots and merged.
struct FireBelief {
  Mat3 Y = Mat3::Zero();
  Vec3 y = Vec3::Zero();
  int measurement_count = 0;

  bool has_estimate() const {
    return measurement_count > 0 && std::abs(Y.determinant()) > 1e-12;
  }
  Vec3 estimate() const { return Y.ldlt().solve(y); }
  Mat3 covariance() const { return Y.inverse(); }
};

struct FireConfig {
  double threshold_c = 100.0;       // segmentation threshold
  int min_pixels = 4;               // smallest reported component
  double angular_window = 1.5 * kPi / 180.0;   // LIDAR association cone half-angle
  double sigma_lidar = 0.1;         // range sigma at the reference range, meters
  double r0 = 5.0;                  // reference range for sigma_lidar, meters
  double bearing_sigma = 0.5 * kPi / 180.0;    // angular sigma of a detection ray
};

// Connected components (8-connectivity) of pixels at or above the threshold,
// keeping those with at least min_pixels pixels. Centroid is the unweighted
// pixel mean. Components are reported in row-major order of their first
// pixel, so the result is deterministic.
inline std::vector<FireDetection> segment_fire(const ThermalImage& img, double threshold,
                                               int min_pixels) {
  if (threshold < kThermalMinC || threshold > kThermalMaxC) {
    throw std::invalid_argument("segment_fire: threshold outside sensor range");
  }
  const int w = img.width, h = img.height;
  std::vector<int> label(static_cast<std::size_t>(w) * h, -1);
  std::vector<FireDetection> out;
  std::vector<int> stack;
  for (int v0 = 0; v0 < h; ++v0) {
    for (int u0 = 0; u0 < w; ++u0) {
      const int idx0 = v0 * w + u0;
      if (label[idx0] != -1 || img.temperatures[idx0] < threshold) continue;
      // Flood the component from its row-major first pixel.
      double sum_u = 0.0, sum_v = 0.0, max_t = -std::numeric_limits<double>::infinity();
      int count = 0;
      stack.assign(1, idx0);
      label[idx0] = 1;
      while (!stack.empty()) {
        const int idx = stack.back();
        stack.pop_back();
        const int u = idx % w, v = idx / w;
        sum_u += u;
        sum_v += v;
        max_t = std::max(max_t, img.temperatures[idx]);
        ++count;
        for (int dv = -1; dv <= 1; ++dv) {
          for (int du = -1; du <= 1; ++du) {
            if (du == 0 && dv == 0) continue;
            const int nu = u + du, nv = v + dv;
            if (nu < 0 || nv < 0 || nu >= w || nv >= h) continue;
            const int nidx = nv * w + nu;
            if (label[nidx] != -1 || img.temperatures[nidx] < threshold) continue;
            label[nidx] = 1;
            stack.push_back(nidx);
          }
        }
      }
      if (count >= min_pixels) {
        out.push_back({sum_u / count, sum_v / count, count, max_t});
      }
    }
  }
  return out;
}

struct FireRay {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitX();
};

// Map-frame rotation of the camera's optical frame.
inline Mat3 camera_rotation(const ThermalImage& img) {
  return img.camera_pose.rotation() * camera_mount_rotation();
}

// Back-projects a detection centroid through the pinhole model: the
// camera-frame ray ((u-cx)/f, (v-cy)/f, 1), normalized and rotated into the
// map frame, anchored at the camera position.
inline FireRay pixel_to_ray(const FireDetection& det, const ThermalImage& img) {
  if (img.focal <= 0.0) throw std::invalid_argument("pixel_to_ray: invalid focal length");
  const Vec3 cam_ray((det.u - img.cx) / img.focal, (det.v - img.cy) / img.focal, 1.0);
  FireRay ray;
  ray.origin = img.camera_pose.position();
  ray.direction = (camera_rotation(img) * cam_ray).normalized();
  return ray;
}

// Projects a map-frame point into pixel coordinates, or nothing when the
// point is not in front of the camera.
inline std::optional<Eigen::Vector2d> project_point(const Vec3& p, const ThermalImage& img) {
  const Vec3 cam = camera_rotation(img).transpose() * (p - img.camera_pose.position());
  if (cam.z() <= 1e-9) return std::nullopt;
  return Eigen::Vector2d(img.cx + img.focal * cam.x() / cam.z(),
                         img.cy + img.focal * cam.y() / cam.z());
}

struct RangeEstimate {
  double range = 0.0;
  RangeSource source = RangeSource::MapFallback;
  double variance = 0.0;
};

// Range variance of a LIDAR-associated measurement grows quadratically with
// range from the configured reference point.
inline double lidar_range_variance(double range, const FireConfig& cfg) {
  const double scaled = cfg.sigma_lidar * (range / cfg.r0);
  return scaled * scaled;
}

// Fallback variance when no LIDAR return supports the detection: at least
// 100x the LIDAR variance at any range, reflecting that the map-derived
// distance only bounds where the fire could be.
inline double fallback_range_variance(double range, const FireConfig& cfg) {
  return 100.0 * std::max(cfg.sigma_lidar * cfg.sigma_lidar, lidar_range_variance(range, cfg));
}

// Attaches a range to a detection ray: the median along-ray distance of the
// LIDAR points inside the angular window when any exist, otherwise the map
// raycast distance (or max_range on a miss) with a large uncertainty.
inline RangeEstimate associate_range(const FireRay& ray, const std::vector<Vec3>& cloud,
                                     double angular_window, const VoxelGrid& map,
                                     double max_range, const FireConfig& cfg = {}) {
  std::vector<double> along;
  for (const Vec3& p : cloud) {
    const Vec3 rel = p - ray.origin;
    const double dot = rel.dot(ray.direction);
    const double angle = std::atan2(rel.cross(ray.direction).norm(), dot);
    if (angle <= angular_window && dot > 0.0) along.push_back(dot);
  }
  RangeEstimate est;
  if (!along.empty()) {
    std::sort(along.begin(), along.end());
    const std::size_t n = along.size();
    est.range = (n % 2 == 1) ? along[n / 2] : 0.5 * (along[n / 2 - 1] + along[n / 2]);
    est.source = RangeSource::Lidar;
    est.variance = lidar_range_variance(est.range, cfg);
  } else {
    const std::optional<double> hit = raycast(ray.origin, ray.direction, max_range, map);
    est.range = hit.value_or(max_range);
    est.source = RangeSource::MapFallback;
    est.variance = fallback_range_variance(est.range, cfg);
  }
  return est;
}

// Bundles a ray and its range estimate into a measurement whose canonical
// covariance is diag(range variance, lateral, lateral); the lateral terms
// grow with range through the bearing sigma.
inline FireMeasurement make_measurement(const FireRay& ray, const RangeEstimate& est,
                                        const FireConfig& cfg = {}) {
  FireMeasurement m;
  m.origin = ray.origin;
  m.direction = ray.direction;
  m.range = est.range;
  m.range_source = est.source;
  const double lateral = est.range * cfg.bearing_sigma;
  m.covariance = Vec3(est.variance, lateral * lateral, lateral * lateral).asDiagonal();
  return m;
}

namespace detail {

// Deterministic orthonormal basis whose first column is the given unit
// vector; used to rotate canonical measurement covariances onto the ray.
inline Mat3 ray_basis(const Vec3& direction) {
  const Vec3 d = direction.normalized();
  int smallest = 0;
  for (int i = 1; i < 3; ++i) {
    if (std::abs(d[i]) < std::abs(d[smallest])) smallest = i;
  }
  const Vec3 t1 = (Vec3::Unit(smallest) - Vec3::Unit(smallest).dot(d) * d).normalized();
  const Vec3 t2 = d.cross(t1);
  Mat3 b;
  b.col(0) = d;
  b.col(1) = t1;
  b.col(2) = t2;
  return b;
}

}  // namespace detail

// Fuses one measurement into a belief. The measurement is linearized as a
// pseudo-position z = origin + range * direction with covariance R equal to
// the measurement's canonical covariance rotated so its first (large) axis
// lies along the ray; the information update is then Y += R^-1, y += R^-1 z.
inline FireBelief if_update(const FireBelief& belief, const FireMeasurement& m) {
  if (std::abs(m.covariance.determinant()) < 1e-30) {
    throw std::invalid_argument("if_update: singular measurement covariance");
  }
  const Mat3 basis = detail::ray_basis(m.direction);
  const Mat3 r_inv = basis * m.covariance.inverse() * basis.transpose();
  const Vec3 z = m.origin + m.range * m.direction;
  FireBelief out = belief;
  out.Y += r_inv;
  out.y += r_inv * z;
  out.measurement_count += 1;
  return out;
}

// Combines evidence gathered independently (for example by two robots):
// information adds, so the merge is exact and order-independent.
inline FireBelief merge_beliefs(const FireBelief& a, const FireBelief& b) {
  FireBelief out;
  out.Y = a.Y + b.Y;
  out.y = a.y + b.y;
  out.measurement_count = a.measurement_count + b.measurement_count;
  return out;
}

// Associates measurements with known fires and spawns new ones. A measurement
// joins the track with the smallest Mahalanobis distance between the track
// estimate and the measurement's pseudo-position (using the innovation
// covariance, track + measurement), when that distance is within the gate.
class FireTracker {
 public:
  struct Track {
    int id = 0;
    FireBelief belief;
    long last_update_tick = 0;
  };

  explicit FireTracker(double gate_sigma = 3.0) : gate_sigma_(gate_sigma) {}

  // Returns the id of the track the measurement was fused into.
  int observe(const FireMeasurement& m, long tick) {
    const Vec3 z = m.origin + m.range * m.direction;
    const Mat3 basis = detail::ray_basis(m.direction);
    const Mat3 r = basis * m.covariance * basis.transpose();
    int best = -1;
    double best_d2 = gate_sigma_ * gate_sigma_;
    for (std::size_t i = 0; i < tracks_.size(); ++i) {
      if (!tracks_[i].belief.has_estimate()) continue;
      const Vec3 innovation = z - tracks_[i].belief.estimate();
      const Mat3 s = tracks_[i].belief.covariance() + r;
      const double d2 = innovation.dot(s.ldlt().solve(innovation));
      if (d2 < best_d2) {
        best_d2 = d2;
        best = static_cast<int>(i);
      }
    }
    if (best < 0) {
      tracks_.push_back({next_id_++, if_update(FireBelief{}, m), tick});
      return tracks_.back().id;
    }
    tracks_[best].belief = if_update(tracks_[best].belief, m);
    tracks_[best].last_update_tick = tick;
    return tracks_[best].id;
  }

  const std::vector<Track>& tracks() const { return tracks_; }

 private:
  double gate_sigma_;
  std::vector<Track> tracks_;
  int next_id_ = 0;
};

// One record per belief: id, position, the six unique covariance entries,
// measurement count, and the tick of the last update.
inline void write_fire_report(const std::string& file, const FireTracker& tracker) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open fire report for writing: " + file);
  out << "id,x,y,z,cov_xx,cov_xy,cov_xz,cov_yy,cov_yz,cov_zz,measurement_count,last_update_tick\n";
  for (const FireTracker::Track& t : tracker.tracks()) {
    const Vec3 p = t.belief.estimate();
    const Mat3 c = t.belief.covariance();
    out << t.id << ',' << g17(p.x()) << ',' << g17(p.y()) << ',' << g17(p.z()) << ','
        << g17(c(0, 0)) << ',' << g17(c(0, 1)) << ',' << g17(c(0, 2)) << ',' << g17(c(1, 1))
        << ',' << g17(c(1, 2)) << ',' << g17(c(2, 2)) << ',' << t.belief.measurement_count << ','
        << t.last_update_tick << '\n';
  }
}

}  // namespace embr
