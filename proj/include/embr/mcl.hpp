#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "embr/csv.hpp"
#include "embr/geometry.hpp"
#include "embr/likelihood_grid.hpp"
#include "embr/rng.hpp"

namespace embr {

// One localization hypothesis: position, heading, and importance weight.
struct Particle {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double yaw = 0.0;
  double weight = 0.0;
};

using ParticleSet = std::vector<Particle>;

// Body-frame odometry increment accumulated between two filter updates.
struct OdomDelta {
  double dx = 0.0;
  double dy = 0.0;
  double dz = 0.0;
  double dyaw = 0.0;

  double translation_norm() const { return std::hypot(dx, dy, dz); }
};

// Composes two successive body-frame increments into one; `b` is expressed in
// the frame reached after applying `a`.
inline OdomDelta compose(const OdomDelta& a, const OdomDelta& b) {
  const double c = std::cos(a.dyaw);
  const double s = std::sin(a.dyaw);
  OdomDelta out;
  out.dx = a.dx + c * b.dx - s * b.dy;
  out.dy = a.dy + s * b.dx + c * b.dy;
  out.dz = a.dz + b.dz;
  out.dyaw = a.dyaw + b.dyaw;
  return out;
}

// One synchronized batch of sensor data consumed by a filter update.
struct SensorFrame {
  std::vector<Vec3> cloud;          // body-frame range points
  std::optional<Vec3> gps;          // map-frame position fix, if any
  double imu_roll = 0.0;
  double imu_pitch = 0.0;
  double imu_yaw = 0.0;
  std::optional<double> altimeter;  // height above ground, if equipped
};

enum class Platform { Uav, Ugv };

struct MclConfig {
  int n_particles = 500;
  double alpha = 0.5;            // blend: alpha * map + (1 - alpha) * gps
  double sigma_gps = 1.0;        // std dev of the GPS position weight, meters
  double trans_threshold = 0.1;  // meters of motion that trigger an update
  double rot_threshold = 0.1;    // radians of rotation that trigger an update
  double k_x = 0.1;              // motion noise std dev per unit of increment
  double k_y = 0.1;
  double k_z = 0.05;
  double k_yaw = 0.05;
  Platform platform = Platform::Uav;
  double yaw_resample_sigma = 0.05;  // radians, heading redraw during resample
  double z_resample_sigma = 0.1;     // meters, altitude redraw during resample
  bool use_cloud = true;
  bool use_gps = true;

  // Ground vehicles carry no height sensing and barely move vertically, so
  // their vertical dispersion is pinned to zero regardless of k_z.
  double effective_k_z() const { return platform == Platform::Ugv ? 0.0 : k_z; }
};

// Raised when every hypothesis has lost all weight and the filter can no
// longer discriminate; callers respond by re-seeding the particle cloud.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// True when the accumulated motion is large enough to justify an update.
inline bool should_update(const OdomDelta& accumulated, const MclConfig& cfg) {
  return accumulated.translation_norm() >= cfg.trans_threshold ||
         std::abs(accumulated.dyaw) >= cfg.rot_threshold;
}

// Advances every particle by the body-frame increment, rotated into the map
// frame through the particle's own heading. Each component of the increment
// is perturbed with zero-mean Gaussian noise whose standard deviation is
// proportional to the magnitude of that component, so standing still adds no
// noise. Weights are left untouched.
inline ParticleSet predict(ParticleSet set, const OdomDelta& d, const MclConfig& cfg,
                           Rng& rng) {
  const double sx = cfg.k_x * std::abs(d.dx);
  const double sy = cfg.k_y * std::abs(d.dy);
  const double sz = cfg.effective_k_z() * std::abs(d.dz);
  const double syaw = cfg.k_yaw * std::abs(d.dyaw);
  for (Particle& p : set) {
    const double ndx = rng.gauss(d.dx, sx);
    const double ndy = rng.gauss(d.dy, sy);
    const double ndz = rng.gauss(d.dz, sz);
    const double ndyaw = rng.gauss(d.dyaw, syaw);
    const double c = std::cos(p.yaw);
    const double s = std::sin(p.yaw);
    p.x += ndx * c - ndy * s;
    p.y += ndx * s + ndy * c;
    p.z += ndz;
    p.yaw = wrap_angle(p.yaw + ndyaw);
  }
  return set;
}

// Applies the roll/pitch attitude to a body-frame cloud. Done once per sensor
// frame and shared by all particles, which only differ in yaw and position.
inline std::vector<Vec3> rotate_cloud(const std::vector<Vec3>& cloud, double roll,
                                      double pitch) {
  const Mat3 r = rot_y(pitch) * rot_x(roll);
  std::vector<Vec3> out(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) out[i] = r * cloud[i];
  return out;
}

// Mean likelihood-grid value over a roll/pitch-corrected cloud placed at the
// particle's pose. Points that leave the grid contribute zero.
inline double weight_map_prerotated(const Particle& p, const std::vector<Vec3>& cloud_rp,
                                    const LikelihoodGrid& grid) {
  if (cloud_rp.empty()) {
    throw std::invalid_argument("weight_map: empty cloud (skip the map update instead)");
  }
  const double c = std::cos(p.yaw);
  const double s = std::sin(p.yaw);
  double sum = 0.0;
  for (const Vec3& q : cloud_rp) {
    const Vec3 w(p.x + c * q.x() - s * q.y(), p.y + s * q.x() + c * q.y(),
                 p.z + q.z());
    sum += grid.value_at(w);
  }
  return sum / static_cast<double>(cloud_rp.size());
}

// Convenience overload that applies the roll/pitch correction itself. Prefer
// rotate_cloud + weight_map_prerotated when scoring many particles.
inline double weight_map(const Particle& p, const std::vector<Vec3>& cloud, double roll,
                         double pitch, const LikelihoodGrid& grid) {
  return weight_map_prerotated(p, rotate_cloud(cloud, roll, pitch), grid);
}

// Gaussian weight of the horizontal distance between particle and GPS fix.
// The altitude component is deliberately ignored: consumer GPS height is far
// noisier than the horizontal solution.
inline double weight_gps(const Particle& p, const Vec3& gps, double sigma_gps) {
  const double dx = p.x - gps.x();
  const double dy = p.y - gps.y();
  const double norm = 1.0 / std::sqrt(2.0 * kPi * sigma_gps * sigma_gps);
  return norm * std::exp(-(dx * dx + dy * dy) / (2.0 * sigma_gps * sigma_gps));
}

// Blends the two weight sources as alpha * map + (1 - alpha) * gps and
// normalizes the result to sum to one. A null source is dropped and the other
// used alone. Throws DivergenceError when every fused weight is zero.
inline ParticleSet fuse_and_normalize(ParticleSet set, const std::vector<double>* map_w,
                                      const std::vector<double>* gps_w, double alpha) {
  if (map_w == nullptr && gps_w == nullptr) {
    throw std::invalid_argument("fuse_and_normalize: no weight source");
  }
  if ((map_w != nullptr && map_w->size() != set.size()) ||
      (gps_w != nullptr && gps_w->size() != set.size())) {
    throw std::invalid_argument("fuse_and_normalize: weight vector size mismatch");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    double w = 0.0;
    if (map_w != nullptr && gps_w != nullptr) {
      w = alpha * (*map_w)[i] + (1.0 - alpha) * (*gps_w)[i];
    } else if (map_w != nullptr) {
      w = (*map_w)[i];
    } else {
      w = (*gps_w)[i];
    }
    set[i].weight = w;
    total += w;
  }
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw DivergenceError("fuse_and_normalize: all fused weights are zero");
  }
  for (Particle& p : set) p.weight /= total;
  return set;
}

// Reciprocal of the sum of squared weights; equals N for uniform weights and
// approaches 1 as the mass concentrates on a single particle.
inline double effective_sample_size(const ParticleSet& set) {
  double sum_sq = 0.0;
  for (const Particle& p : set) sum_sq += p.weight * p.weight;
  if (sum_sq <= 0.0) return 0.0;
  return 1.0 / sum_sq;
}

// Low-variance systematic resampling: one random offset, then N equally
// spaced picks through the cumulative weights. Afterwards, aerial platforms
// redraw every particle's altitude around the altimeter reading and every
// heading around the IMU yaw; ground platforms integrate neither sensor.
// Output weights are uniform.
inline ParticleSet resample(const ParticleSet& set, std::optional<double> altimeter,
                            std::optional<double> imu_yaw, const MclConfig& cfg,
                            Rng& rng) {
  const std::size_t n = set.size();
  if (n == 0) throw std::invalid_argument("resample: empty particle set");
  double total = 0.0;
  for (const Particle& p : set) total += p.weight;
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw DivergenceError("resample: degenerate weights");
  }
  const double step = total / static_cast<double>(n);
  ParticleSet out;
  out.reserve(n);
  const double r = rng.uniform() * step;
  double cum = set[0].weight;
  std::size_t i = 0;
  for (std::size_t m = 0; m < n; ++m) {
    const double u = r + static_cast<double>(m) * step;
    while (u > cum && i + 1 < n) {
      ++i;
      cum += set[i].weight;
    }
    out.push_back(set[i]);
  }
  const double uniform_w = 1.0 / static_cast<double>(n);
  for (Particle& p : out) p.weight = uniform_w;
  if (cfg.platform == Platform::Uav) {
    if (altimeter.has_value()) {
      for (Particle& p : out) p.z = rng.gauss(*altimeter, cfg.z_resample_sigma);
    }
    if (imu_yaw.has_value()) {
      for (Particle& p : out) p.yaw = wrap_angle(rng.gauss(*imu_yaw, cfg.yaw_resample_sigma));
    }
  }
  return out;
}

struct PoseEstimate {
  Pose pose;  // roll and pitch stay zero; yaw is the circular weighted mean
  Eigen::Matrix4d covariance = Eigen::Matrix4d::Zero();  // over (x, y, z, yaw)
};

// Weighted mean pose and covariance of the particle cloud. Yaw is averaged on
// the unit circle, and yaw residuals are wrapped before entering the
// covariance so estimates near the +/- pi seam stay sane.
inline PoseEstimate estimate(const ParticleSet& set) {
  if (set.empty()) throw std::invalid_argument("estimate: empty particle set");
  double mx = 0.0, my = 0.0, mz = 0.0, sin_sum = 0.0, cos_sum = 0.0;
  for (const Particle& p : set) {
    mx += p.weight * p.x;
    my += p.weight * p.y;
    mz += p.weight * p.z;
    sin_sum += p.weight * std::sin(p.yaw);
    cos_sum += p.weight * std::cos(p.yaw);
  }
  const double myaw = std::atan2(sin_sum, cos_sum);
  PoseEstimate est;
  est.pose.x = mx;
  est.pose.y = my;
  est.pose.z = mz;
  est.pose.yaw = myaw;
  for (const Particle& p : set) {
    Eigen::Vector4d d(p.x - mx, p.y - my, p.z - mz, wrap_angle(p.yaw - myaw));
    est.covariance += p.weight * (d * d.transpose());
  }
  return est;
}

// Seeds N particles with Gaussian scatter about a pose, uniform weights.
inline ParticleSet initialize(const Pose& pose, const Vec3& spread_xyz, double spread_yaw,
                              const MclConfig& cfg, Rng& rng) {
  if (cfg.n_particles < 1) throw std::invalid_argument("initialize: n_particles < 1");
  if (spread_xyz.minCoeff() < 0.0 || spread_yaw < 0.0) {
    throw std::invalid_argument("initialize: negative spread");
  }
  const double sz = cfg.platform == Platform::Ugv ? 0.0 : spread_xyz.z();
  ParticleSet set(static_cast<std::size_t>(cfg.n_particles));
  const double w = 1.0 / static_cast<double>(cfg.n_particles);
  for (Particle& p : set) {
    p.x = rng.gauss(pose.x, spread_xyz.x());
    p.y = rng.gauss(pose.y, spread_xyz.y());
    p.z = rng.gauss(pose.z, sz);
    p.yaw = wrap_angle(rng.gauss(pose.yaw, spread_yaw));
    p.weight = w;
  }
  return set;
}

// One line of the filter's diagnostic trace, appended per update cycle.
struct MclTraceRow {
  long tick = 0;
  double est_x = 0.0;
  double est_y = 0.0;
  double est_z = 0.0;
  double est_yaw = 0.0;
  double cov_trace = 0.0;
  double n_eff = 0.0;
  bool used_gps = false;
  bool used_cloud = false;
};

inline void write_mcl_trace(const std::string& path, const std::vector<MclTraceRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open trace file for writing: " + path);
  out << "tick,est_x,est_y,est_z,est_yaw,cov_trace,n_eff,used_gps,used_cloud\n";
  for (const MclTraceRow& r : rows) {
    out << r.tick << ',' << g17(r.est_x) << ',' << g17(r.est_y) << ',' << g17(r.est_z)
        << ',' << g17(r.est_yaw) << ',' << g17(r.cov_trace) << ',' << g17(r.n_eff) << ','
        << (r.used_gps ? 1 : 0) << ',' << (r.used_cloud ? 1 : 0) << '\n';
  }
}

// Threshold-gated particle filter. Odometry increments accumulate between
// cycles; once the platform has moved or turned far enough, one cycle runs:
// predict with the accumulated increment, score against the likelihood grid
// and/or GPS, fuse, and resample when the effective sample size drops below
// half the particle count. A weight source only participates when its data is
// present, its use_* switch is on, and its blend coefficient is non-zero, so
// runs at the blend endpoints are bit-identical to single-source runs.
class MclFilter {
 public:
  MclFilter(const MclConfig& cfg, const LikelihoodGrid* grid, uint64_t seed)
      : cfg_(cfg), grid_(grid), rng_(seed) {
    if (cfg_.n_particles < 1) throw std::invalid_argument("MclFilter: n_particles < 1");
    if (cfg_.alpha < 0.0 || cfg_.alpha > 1.0) {
      throw std::invalid_argument("MclFilter: alpha outside [0, 1]");
    }
    if (cfg_.trans_threshold <= 0.0 || cfg_.rot_threshold <= 0.0) {
      throw std::invalid_argument("MclFilter: update thresholds must be positive");
    }
    if (cfg_.sigma_gps <= 0.0) throw std::invalid_argument("MclFilter: sigma_gps <= 0");
  }

  void reset(const Pose& pose, const Vec3& spread_xyz, double spread_yaw) {
    init_spread_xyz_ = spread_xyz;
    init_spread_yaw_ = spread_yaw;
    set_ = initialize(pose, spread_xyz, spread_yaw, cfg_, rng_);
    last_estimate_ = estimate(set_);
    accum_ = OdomDelta{};
  }

  void add_odometry(const OdomDelta& d) { accum_ = compose(accum_, d); }

  // Runs one update cycle if the accumulated motion crosses a threshold.
  // Returns whether a cycle ran (and a trace row was appended).
  bool update(const SensorFrame& frame, long tick) {
    if (set_.empty()) throw std::logic_error("MclFilter: call reset() before update()");
    if (!should_update(accum_, cfg_)) return false;
    set_ = predict(std::move(set_), accum_, cfg_, rng_);
    accum_ = OdomDelta{};

    const bool used_cloud = cfg_.use_cloud && cfg_.alpha > 0.0 && grid_ != nullptr &&
                            !frame.cloud.empty();
    const bool used_gps = cfg_.use_gps && cfg_.alpha < 1.0 && frame.gps.has_value();
    if (used_cloud || used_gps) {
      std::vector<double> map_w;
      std::vector<double> gps_w;
      if (used_cloud) {
        const std::vector<Vec3> cloud_rp =
            rotate_cloud(frame.cloud, frame.imu_roll, frame.imu_pitch);
        map_w.resize(set_.size());
        for (std::size_t i = 0; i < set_.size(); ++i) {
          map_w[i] = weight_map_prerotated(set_[i], cloud_rp, *grid_);
        }
      }
      if (used_gps) {
        gps_w.resize(set_.size());
        for (std::size_t i = 0; i < set_.size(); ++i) {
          gps_w[i] = weight_gps(set_[i], *frame.gps, cfg_.sigma_gps);
        }
      }
      // Importance weights accumulate multiplicatively across cycles and only
      // reset to uniform when a resample runs; without accumulation the
      // effective sample size would never decay and no selection would occur.
      std::vector<double> prior(set_.size());
      for (std::size_t i = 0; i < set_.size(); ++i) prior[i] = set_[i].weight;
      try {
        set_ = fuse_and_normalize(std::move(set_), used_cloud ? &map_w : nullptr,
                                  used_gps ? &gps_w : nullptr, cfg_.alpha);
        double total = 0.0;
        for (std::size_t i = 0; i < set_.size(); ++i) {
          set_[i].weight *= prior[i];
          total += set_[i].weight;
        }
        if (!(total > 0.0) || !std::isfinite(total)) {
          throw DivergenceError("update: posterior weights collapsed");
        }
        for (Particle& p : set_) p.weight /= total;
      } catch (const DivergenceError&) {
        // Every hypothesis lost all weight: re-seed the cloud around the last
        // good estimate with widened spreads and carry on.
        set_ = initialize(last_estimate_.pose, 3.0 * init_spread_xyz_,
                          3.0 * init_spread_yaw_, cfg_, rng_);
      }
    }

    const double n_eff = effective_sample_size(set_);
    if (n_eff < 0.5 * static_cast<double>(set_.size())) {
      set_ = resample(set_, frame.altimeter, frame.imu_yaw, cfg_, rng_);
    }

    last_estimate_ = estimate(set_);
    trace_.push_back({tick, last_estimate_.pose.x, last_estimate_.pose.y,
                      last_estimate_.pose.z, last_estimate_.pose.yaw,
                      last_estimate_.covariance.trace(), n_eff, used_gps, used_cloud});
    return true;
  }

  const ParticleSet& particles() const { return set_; }
  const PoseEstimate& last_estimate() const { return last_estimate_; }
  const std::vector<MclTraceRow>& trace() const { return trace_; }
  const MclConfig& config() const { return cfg_; }

 private:
  MclConfig cfg_;
  const LikelihoodGrid* grid_ = nullptr;
  Rng rng_;
  ParticleSet set_;
  OdomDelta accum_;
  PoseEstimate last_estimate_;
  Vec3 init_spread_xyz_ = Vec3::Zero();
  double init_spread_yaw_ = 0.0;
  std::vector<MclTraceRow> trace_;
};

}  // namespace embr
