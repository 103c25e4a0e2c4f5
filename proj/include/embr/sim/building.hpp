#pragma once

// Procedural test-site generator: a multi-storey building standing on a
// ground slab, surrounded by a free apron for outdoor flight.
//
// The footprint is a rectangle of perimeter walls one `wall_thickness` deep.
// Each storey is `floor_height` tall and capped by a full-footprint ceiling
// slab (the top one is the roof), so the shell is watertight except for the
// openings that are carved afterwards: an optional door at the bottom of the
// south facade and `window_count` windows per facade per storey. Window
// positions are spread evenly along each facade and then jittered by up to
// two cells using the seed, so the same seed always produces the same map
// bytes while different seeds produce different facades.

#include <cstdint>
#include <stdexcept>
#include <string>

#include "embr/geometry.hpp"
#include "embr/rng.hpp"
#include "embr/sim/scenario.hpp"
#include "embr/voxel_grid.hpp"

namespace embr {

struct Building {
  VoxelGrid map;
  // Outer extent of the walls, slab top to roof top; GPS is shadowed inside.
  Aabb shell;
  // Free interior of the ground floor, wall to wall.
  Aabb interior;
  // Top of the ground slab: the z where outdoor ground objects rest.
  double ground_z = 0.0;
};

namespace simdetail {

// Rounds a length to whole cells, rejecting lengths that are not close to a
// multiple of the resolution; silent snapping would shift walls by half a
// cell and break the analytic volume bookkeeping callers rely on.
inline int to_cells(double meters, double res, const std::string& what) {
  const double cells = meters / res;
  const int n = static_cast<int>(std::lround(cells));
  if (std::abs(cells - n) > 1e-6)
    throw std::invalid_argument(what + " (" + std::to_string(meters) +
                                ") is not a multiple of the resolution");
  return n;
}

}  // namespace simdetail

inline Building generate_building(const BuildingParams& p, uint64_t seed) {
  using simdetail::to_cells;
  if (p.resolution <= 0.0) throw std::invalid_argument("resolution must be positive");
  if (p.floors < 1) throw std::invalid_argument("a building needs at least one storey");
  const double r = p.resolution;
  const int size_x_c = to_cells(p.size_x, r, "size_x");
  const int size_y_c = to_cells(p.size_y, r, "size_y");
  const int wall_c = to_cells(p.wall_thickness, r, "wall_thickness");
  const int floor_h_c = to_cells(p.floor_height, r, "floor_height");
  const int margin_c = to_cells(p.margin, r, "margin");
  const int door_w_c = to_cells(p.door_width, r, "door_width");
  const int door_h_c = to_cells(p.door_height, r, "door_height");
  const int win_w_c = to_cells(p.window_width, r, "window_width");
  const int win_h_c = to_cells(p.window_height, r, "window_height");
  if (wall_c < 1) throw std::invalid_argument("walls must be at least one cell thick");
  if (margin_c < 1) throw std::invalid_argument("margin must be at least one cell");
  if (size_x_c <= 2 * wall_c + 1 || size_y_c <= 2 * wall_c + 1)
    throw std::invalid_argument("footprint too small to enclose an interior");
  if (floor_h_c <= wall_c + 1)
    throw std::invalid_argument("floor_height leaves no air under the ceiling");
  if (door_h_c > floor_h_c - wall_c || door_w_c > size_x_c - 2 * wall_c)
    throw std::invalid_argument("door does not fit in the south facade");
  if (p.window_count < 0) throw std::invalid_argument("window_count must be >= 0");
  if (p.window_count > 0 &&
      (win_h_c < 1 || win_w_c < 1 || win_h_c > floor_h_c - wall_c - 1 ||
       win_w_c > std::min(size_x_c, size_y_c) - 2 * (wall_c + 1)))
    throw std::invalid_argument("window does not fit in a facade");

  const int nx = size_x_c + 2 * margin_c;
  const int ny = size_y_c + 2 * margin_c;
  const int building_top_c = 1 + p.floors * floor_h_c;  // one above the slab
  const int nz = building_top_c + margin_c;
  VoxelGrid map(Vec3::Zero(), r, Idx3(nx, ny, nz));

  const int bx0 = margin_c, bx1 = margin_c + size_x_c - 1;
  const int by0 = margin_c, by1 = margin_c + size_y_c - 1;

  const auto fill_box = [&map](int x0, int x1, int y0, int y1, int z0, int z1, bool value) {
    for (int z = z0; z <= z1; ++z)
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) map.set_occupied(Idx3(x, y, z), value);
  };

  // Ground slab across the whole site.
  fill_box(0, nx - 1, 0, ny - 1, 0, 0, true);

  for (int f = 0; f < p.floors; ++f) {
    const int zs = 1 + f * floor_h_c;                  // bottom air cell of the storey
    const int zc = zs + floor_h_c - wall_c;            // bottom cell of its ceiling
    const int air_top = zc - 1;
    fill_box(bx0, bx1, by0, by0 + wall_c - 1, zs, air_top, true);  // south wall
    fill_box(bx0, bx1, by1 - wall_c + 1, by1, zs, air_top, true);  // north wall
    fill_box(bx0, bx0 + wall_c - 1, by0, by1, zs, air_top, true);  // west wall
    fill_box(bx1 - wall_c + 1, bx1, by0, by1, zs, air_top, true);  // east wall
    fill_box(bx0, bx1, by0, by1, zc, zs + floor_h_c - 1, true);    // ceiling / roof
  }

  // Door: carved through the south wall at ground level, centered.
  if (door_w_c > 0 && door_h_c > 0) {
    const int dx0 = bx0 + (size_x_c - door_w_c) / 2;
    fill_box(dx0, dx0 + door_w_c - 1, by0, by0 + wall_c - 1, 1, door_h_c, false);
  }

  // Windows: evenly spread along each facade at mid-storey height, jittered
  // by the seed. Carving is idempotent, so an overlap with the door merely
  // merges the two openings.
  if (p.window_count > 0) {
    Rng rng = Rng(seed).substream("building/windows");
    for (int f = 0; f < p.floors; ++f) {
      const int zs = 1 + f * floor_h_c;
      const int air_h = floor_h_c - wall_c;
      const int wz0 = zs + (air_h - win_h_c) / 2;
      const int wz1 = wz0 + win_h_c - 1;
      for (int facade = 0; facade < 4; ++facade) {
        const bool horizontal = facade < 2;  // 0 south, 1 north, 2 west, 3 east
        const int length_c = horizontal ? size_x_c : size_y_c;
        for (int w = 0; w < p.window_count; ++w) {
          const int center =
              (length_c * (w + 1)) / (p.window_count + 1) + rng.uniform_int(-2, 2);
          int lo = center - win_w_c / 2;
          lo = std::max(lo, wall_c + 1);
          lo = std::min(lo, length_c - wall_c - 1 - win_w_c);
          const int hi = lo + win_w_c - 1;
          switch (facade) {
            case 0: fill_box(bx0 + lo, bx0 + hi, by0, by0 + wall_c - 1, wz0, wz1, false); break;
            case 1: fill_box(bx0 + lo, bx0 + hi, by1 - wall_c + 1, by1, wz0, wz1, false); break;
            case 2: fill_box(bx0, bx0 + wall_c - 1, by0 + lo, by0 + hi, wz0, wz1, false); break;
            default: fill_box(bx1 - wall_c + 1, bx1, by0 + lo, by0 + hi, wz0, wz1, false); break;
          }
        }
      }
    }
  }

  Building b{std::move(map), {}, {}, r};
  b.shell.min = Vec3(bx0 * r, by0 * r, 0.0);
  b.shell.max = Vec3((bx1 + 1) * r, (by1 + 1) * r, building_top_c * r);
  b.interior.min = Vec3((bx0 + wall_c) * r, (by0 + wall_c) * r, r);
  b.interior.max =
      Vec3((bx1 - wall_c + 1) * r, (by1 - wall_c + 1) * r, (1 + floor_h_c - wall_c) * r);
  return b;
}

}  // namespace embr
