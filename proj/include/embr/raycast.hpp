#pragma once

#include <algorithm>
#include <limits>
#include <optional>
#include <stdexcept>

#include "embr/voxel_grid.hpp"

namespace embr {

namespace detail {

}  // namespace detail

// True iff the open segment between a and b stays in free space. The
// passability model treats cells as closed blocks the segment may touch but
// not enter, and everything outside the map box as solid:
//   - entering the interior of an occupied cell blocks;
//   - running exactly along a face shared with occupied cells blocks only
//     when every cell touching that face is solid (sliding along a single
//     obstacle's surface is allowed);
//   - crossing a lattice corner or edge exactly blocks when the crossing is
//     sealed by solid cells (no squeezing between two diagonally touching
//     obstacles, nor between an obstacle and the map border);
//   - merely touching an occupied cell at an endpoint does not block.
// Endpoint order is canonicalized so the result is symmetric. Boundary
// crossings are recomputed from the endpoints at each step rather than
// accumulated, so crossings that are mathematically tied are detected
// exactly whenever the coordinates involved are exactly representable.
inline bool line_of_sight(const Vec3& a, const Vec3& b, const VoxelGrid& map) {
  const Aabb box = map.bounds();
  if (!box.contains(a) || !box.contains(b))
    throw std::invalid_argument("line_of_sight: endpoint out of bounds");
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const bool swap = std::lexicographical_compare(b.data(), b.data() + 3, a.data(), a.data() + 3);
  const Vec3& p = swap ? b : a;
  const Vec3& q = swap ? a : b;
  const Vec3 d = q - p;
  const double res = map.resolution();

  Idx3 cell = map.world_to_index(p);
  Idx3 step{0, 0, 0};
  int degen[3], n_degen = 0;  // axes where the segment lies exactly on a boundary plane
  for (int i = 0; i < 3; ++i) {
    if (d[i] > 0.0) {
      step[i] = 1;
    } else if (d[i] < 0.0) {
      step[i] = -1;
    } else if (p[i] == cell[i] * res + map.origin()[i]) {
      degen[n_degen++] = i;
    }
  }

  // Occupied, or off the map: the segment may not leave the box, so the
  // border acts like an obstacle surface.
  const auto solid = [&](const Idx3& c) { return !map.in_bounds(c) || map.occupied(c); };

  // For degenerate axes the segment touches the cells on both sides of the
  // plane; a position blocks only if every such variant is solid.
  const auto variants_all_solid = [&](const Idx3& base) {
    for (int mask = 0; mask < (1 << n_degen); ++mask) {
      Idx3 c = base;
      for (int j = 0; j < n_degen; ++j)
        if (mask & (1 << j)) c[degen[j]] -= 1;
      if (!solid(c)) return false;
    }
    return true;
  };

  double t_entry = 0.0;
  const long max_steps = 2L * (map.dims().x() + map.dims().y() + map.dims().z()) + 6;
  for (long n = 0; n < max_steps; ++n) {
    Vec3 t{kInf, kInf, kInf};
    for (int i = 0; i < 3; ++i) {
      if (step[i] == 0) continue;
      const double boundary = (cell[i] + (step[i] > 0 ? 1 : 0)) * res + map.origin()[i];
      t[i] = (boundary - p[i]) / d[i];
    }
    const double t_min = std::min({t.x(), t.y(), t.z()});
    if (t_min >= 1.0) {  // the remainder of the segment ends in this cell
      return !(1.0 > t_entry && variants_all_solid(cell));
    }
    if (t_min > t_entry && variants_all_solid(cell)) return false;

    int tied[3], n_tied = 0;
    for (int i = 0; i < 3; ++i)
      if (step[i] != 0 && t[i] == t_min) tied[n_tied++] = i;
    if (n_tied > 1) {
      // Exact corner/edge crossing: sealed when every single-axis step ahead
      // lands in solid cells.
      bool sealed = true;
      for (int k = 0; k < n_tied && sealed; ++k) {
        Idx3 side = cell;
        side[tied[k]] += step[tied[k]];
        sealed = variants_all_solid(side);
      }
      if (sealed) return false;
    } else if (n_degen > 0 && t_min > 0.0) {
      // A segment riding a boundary plane crosses a lattice corner (or, in
      // 3D, a lattice edge) at every transition. The crossing is passable
      // only through a channel of two free cells on the same side of the
      // plane; otherwise the segment would squeeze between two solid cells
      // that touch diagonally at the crossing.
      const int axis = tied[0];
      bool channel = false;
      for (int mask = 0; mask < (1 << n_degen) && !channel; ++mask) {
        Idx3 before = cell;
        for (int j = 0; j < n_degen; ++j)
          if (mask & (1 << j)) before[degen[j]] -= 1;
        Idx3 after = before;
        after[axis] += step[axis];
        channel = !solid(before) && !solid(after);
      }
      if (!channel) return false;
    }
    for (int k = 0; k < n_tied; ++k) cell[tied[k]] += step[tied[k]];
    t_entry = t_min;
  }
  return true;  // guard exhausted; geometrically unreachable
}

// Distance along the ray to the boundary of the first occupied voxel, or
// nullopt if none is hit within max_range. direction must be unit length.
inline std::optional<double> raycast(const Vec3& origin, const Vec3& direction, double max_range,
                                     const VoxelGrid& map) {
  const double n = direction.norm();
  if (std::abs(n - 1.0) > 1e-6)
    throw std::invalid_argument("raycast: direction must be a unit vector");
  if (max_range <= 0.0) return std::nullopt;

  // Clip the ray to the grid box.
  double t0 = 0.0, t1 = max_range;
  const Aabb box = map.bounds();
  for (int i = 0; i < 3; ++i) {
    if (direction[i] == 0.0) {
      if (origin[i] < box.min[i] || origin[i] > box.max[i]) return std::nullopt;
      continue;
    }
    double lo = (box.min[i] - origin[i]) / direction[i];
    double hi = (box.max[i] - origin[i]) / direction[i];
    if (lo > hi) std::swap(lo, hi);
    t0 = std::max(t0, lo);
    t1 = std::min(t1, hi);
  }
  if (t0 > t1) return std::nullopt;

  constexpr double kInf = std::numeric_limits<double>::infinity();
  const Vec3 entry_point = origin + direction * t0;
  Idx3 cell = map.world_to_index(entry_point);
  for (int i = 0; i < 3; ++i) cell[i] = std::clamp(cell[i], 0, map.dims()[i] - 1);
  const double res = map.resolution();

  Idx3 step{0, 0, 0};
  Vec3 t_max{kInf, kInf, kInf};
  Vec3 t_delta{kInf, kInf, kInf};
  for (int i = 0; i < 3; ++i) {
    if (direction[i] > 0.0) {
      step[i] = 1;
      t_max[i] = ((cell[i] + 1) * res + map.origin()[i] - origin[i]) / direction[i];
      t_delta[i] = res / direction[i];
    } else if (direction[i] < 0.0) {
      step[i] = -1;
      t_max[i] = (cell[i] * res + map.origin()[i] - origin[i]) / direction[i];
      t_delta[i] = -res / direction[i];
    }
  }

  double t_entry = t0;
  while (true) {
    if (!map.in_bounds(cell)) return std::nullopt;
    if (map.occupied(cell)) return t_entry;
    const double t = std::min({t_max.x(), t_max.y(), t_max.z()});
    if (t > max_range) return std::nullopt;
    t_entry = t;
    const int axis = (t_max.x() == t) ? 0 : (t_max.y() == t ? 1 : 2);
    cell[axis] += step[axis];
    t_max[axis] += t_delta[axis];
  }
}

}  // namespace embr
