#pragma once

#include <Eigen/Dense>
#include <cmath>

namespace embr {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Idx3 = Eigen::Vector3i;

inline constexpr double kPi = 3.14159265358979323846;

// Normalizes an angle to (-pi, pi]. Values already in range pass through
// unchanged (bit-exact), so repeated normalization is idempotent.
inline double wrap_angle(double a) {
  if (a > -kPi && a <= kPi) return a;
  double r = std::fmod(a + kPi, 2.0 * kPi);
  if (r <= 0.0) r += 2.0 * kPi;
  return r - kPi;
}

inline Mat3 rot_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r << 1, 0, 0,
       0, c, -s,
       0, s, c;
  return r;
}

inline Mat3 rot_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r << c, 0, s,
       0, 1, 0,
       -s, 0, c;
  return r;
}

inline Mat3 rot_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r << c, -s, 0,
       s, c, 0,
       0, 0, 1;
  return r;
}

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double roll = 0.0;
  double pitch = 0.0;
  double yaw = 0.0;

  Vec3 position() const { return {x, y, z}; }

  // Body-to-world rotation, ZYX convention.
  Mat3 rotation() const { return rot_z(yaw) * rot_y(pitch) * rot_x(roll); }

  void normalize_angles() {
    roll = wrap_angle(roll);
    pitch = wrap_angle(pitch);
    yaw = wrap_angle(yaw);
  }
};

struct Aabb {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  bool contains(const Vec3& p) const {
    return p.x() >= min.x() && p.x() <= max.x() &&
           p.y() >= min.y() && p.y() <= max.y() &&
           p.z() >= min.z() && p.z() <= max.z();
  }
};

}  // namespace embr
