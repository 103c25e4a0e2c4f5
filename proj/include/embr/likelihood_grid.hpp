#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "embr/distance_field.hpp"
#include "embr/voxel_grid.hpp"

namespace embr {

// Precomputed sensor-model grid: each cell stores the Gaussian of the distance
// to the nearest occupied voxel center,
//   value = 1/sqrt(2*pi*sigma^2) * exp(-d^2 / (2*sigma^2)),
// zeroed beyond truncation_radius. Built once, immutable, shareable across
// threads.
class LikelihoodGrid {
 public:
  LikelihoodGrid(const Vec3& origin, double resolution, const Idx3& dims,
                 std::vector<double> values, double sigma, double truncation_radius)
      : origin_(origin),
        resolution_(resolution),
        dims_(dims),
        values_(std::move(values)),
        sigma_(sigma),
        truncation_radius_(truncation_radius) {}

  const Vec3& origin() const { return origin_; }
  double resolution() const { return resolution_; }
  const Idx3& dims() const { return dims_; }
  double sigma() const { return sigma_; }
  double truncation_radius() const { return truncation_radius_; }
  const std::vector<double>& values() const { return values_; }

  double peak() const { return 1.0 / std::sqrt(2.0 * kPi * sigma_ * sigma_); }

  bool in_bounds(const Idx3& c) const {
    return c.x() >= 0 && c.x() < dims_.x() && c.y() >= 0 && c.y() < dims_.y() &&
           c.z() >= 0 && c.z() < dims_.z();
  }

  double value(const Idx3& c) const {
    return values_[static_cast<size_t>(c.x()) +
                   static_cast<size_t>(dims_.x()) *
                       (static_cast<size_t>(c.y()) + static_cast<size_t>(dims_.y()) * c.z())];
  }

  // 0 outside the grid.
  double value_at(const Vec3& p) const {
    const Idx3 c{static_cast<int>(std::floor((p.x() - origin_.x()) / resolution_)),
                 static_cast<int>(std::floor((p.y() - origin_.y()) / resolution_)),
                 static_cast<int>(std::floor((p.z() - origin_.z()) / resolution_))};
    if (!in_bounds(c)) return 0.0;
    return value(c);
  }

 private:
  Vec3 origin_;
  double resolution_;
  Idx3 dims_;
  std::vector<double> values_;
  double sigma_;
  double truncation_radius_;
};

// truncation_radius <= 0 selects the default of 3*sigma.
inline LikelihoodGrid build_likelihood_grid(const VoxelGrid& map, double sigma,
                                            double truncation_radius = 0.0) {
  if (sigma <= 0.0) throw std::invalid_argument("build_likelihood_grid: sigma must be > 0");
  if (map.occupied_count() == 0)
    throw std::invalid_argument("build_likelihood_grid: map has no occupied voxel");
  if (truncation_radius <= 0.0) truncation_radius = 3.0 * sigma;

  std::vector<double> dist = nearest_occupied_distance_field(map);
  const double norm = 1.0 / std::sqrt(2.0 * kPi * sigma * sigma);
  const double inv_two_var = 1.0 / (2.0 * sigma * sigma);
  std::vector<double> values(dist.size());
  for (size_t i = 0; i < dist.size(); ++i) {
    const double d = dist[i];
    values[i] = d > truncation_radius ? 0.0 : norm * std::exp(-d * d * inv_two_var);
  }
  return LikelihoodGrid(map.origin(), map.resolution(), map.dims(), std::move(values), sigma,
                        truncation_radius);
}

}  // namespace embr
