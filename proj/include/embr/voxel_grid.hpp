#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "embr/geometry.hpp"

namespace embr {

enum class CellState { Free, Occupied, OutOfBounds };

// Dense 3D occupancy map. World <-> index conversion uses the cell-center
// convention: index = floor((p - origin) / resolution), center of cell i is
// origin + (i + 0.5) * resolution. Immutable once built by its producer;
// concurrent reads are safe.
class VoxelGrid {
 public:
  VoxelGrid(const Vec3& origin, double resolution, const Idx3& dims)
      : origin_(origin), resolution_(resolution), dims_(dims) {
    if (resolution <= 0.0) throw std::invalid_argument("VoxelGrid: resolution must be > 0");
    if (dims.x() < 1 || dims.y() < 1 || dims.z() < 1)
      throw std::invalid_argument("VoxelGrid: dims must be >= 1");
    occupancy_.assign(static_cast<size_t>(dims.x()) * dims.y() * dims.z(), 0);
  }

  const Vec3& origin() const { return origin_; }
  double resolution() const { return resolution_; }
  const Idx3& dims() const { return dims_; }
  size_t size() const { return occupancy_.size(); }

  // Row-major, x fastest.
  size_t linear_index(const Idx3& c) const {
    return static_cast<size_t>(c.x()) +
           static_cast<size_t>(dims_.x()) * (static_cast<size_t>(c.y()) +
                                             static_cast<size_t>(dims_.y()) * c.z());
  }

  bool in_bounds(const Idx3& c) const {
    return c.x() >= 0 && c.x() < dims_.x() && c.y() >= 0 && c.y() < dims_.y() &&
           c.z() >= 0 && c.z() < dims_.z();
  }

  bool in_bounds(const Vec3& p) const { return in_bounds(world_to_index(p)); }

  Idx3 world_to_index(const Vec3& p) const {
    return {static_cast<int>(std::floor((p.x() - origin_.x()) / resolution_)),
            static_cast<int>(std::floor((p.y() - origin_.y()) / resolution_)),
            static_cast<int>(std::floor((p.z() - origin_.z()) / resolution_))};
  }

  Vec3 index_to_center(const Idx3& c) const {
    return origin_ + Vec3(c.x() + 0.5, c.y() + 0.5, c.z() + 0.5) * resolution_;
  }

  Idx3 index_from_linear(size_t i) const {
    const auto nx = static_cast<size_t>(dims_.x());
    const auto ny = static_cast<size_t>(dims_.y());
    return {static_cast<int>(i % nx), static_cast<int>((i / nx) % ny),
            static_cast<int>(i / (nx * ny))};
  }

  bool occupied(const Idx3& c) const { return occupancy_[linear_index(c)] != 0; }

  // Out-of-bounds world queries are a distinct state, never a fault.
  CellState state_at(const Vec3& p) const {
    Idx3 c = world_to_index(p);
    if (!in_bounds(c)) return CellState::OutOfBounds;
    return occupied(c) ? CellState::Occupied : CellState::Free;
  }

  void set_occupied(const Idx3& c, bool value = true) {
    if (!in_bounds(c)) throw std::out_of_range("VoxelGrid::set_occupied: out of bounds");
    occupancy_[linear_index(c)] = value ? 1 : 0;
  }

  void set_occupied_at(const Vec3& p, bool value = true) { set_occupied(world_to_index(p), value); }

  size_t occupied_count() const {
    size_t n = 0;
    for (uint8_t v : occupancy_) n += v;
    return n;
  }

  const std::vector<uint8_t>& data() const { return occupancy_; }
  std::vector<uint8_t>& data() { return occupancy_; }

  Aabb bounds() const {
    return {origin_, origin_ + Vec3(dims_.x(), dims_.y(), dims_.z()) * resolution_};
  }

 private:
  Vec3 origin_;
  double resolution_;
  Idx3 dims_;
  std::vector<uint8_t> occupancy_;
};

// Map file format: ASCII header line
//   EMBRMAP1 <nx> <ny> <nz> <resolution> <ox> <oy> <oz>
// followed by nx*ny*nz raw bytes, row-major x fastest, 0x00 free / 0x01
// occupied. Any other payload byte is rejected.
inline void save_map(const VoxelGrid& grid, std::ostream& out) {
  std::ostringstream header;
  header.precision(17);
  header << "EMBRMAP1 " << grid.dims().x() << ' ' << grid.dims().y() << ' ' << grid.dims().z()
         << ' ' << grid.resolution() << ' ' << grid.origin().x() << ' ' << grid.origin().y()
         << ' ' << grid.origin().z() << '\n';
  out << header.str();
  out.write(reinterpret_cast<const char*>(grid.data().data()),
            static_cast<std::streamsize>(grid.size()));
}

inline void save_map(const VoxelGrid& grid, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_map: cannot open " + path);
  save_map(grid, f);
}

inline VoxelGrid load_map(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw std::runtime_error("load_map: missing header");
  std::istringstream hs(header);
  std::string magic;
  long nx = 0, ny = 0, nz = 0;
  double res = 0, ox = 0, oy = 0, oz = 0;
  hs >> magic >> nx >> ny >> nz >> res >> ox >> oy >> oz;
  if (!hs || magic != "EMBRMAP1")
    throw std::runtime_error("load_map: bad header: " + header);
  std::string trailing;
  if (hs >> trailing) throw std::runtime_error("load_map: trailing header fields");
  if (nx < 1 || ny < 1 || nz < 1 || res <= 0.0)
    throw std::runtime_error("load_map: invalid dimensions");
  VoxelGrid grid(Vec3(ox, oy, oz), res, Idx3(static_cast<int>(nx), static_cast<int>(ny),
                                             static_cast<int>(nz)));
  std::vector<uint8_t>& payload = grid.data();
  in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  if (static_cast<size_t>(in.gcount()) != payload.size())
    throw std::runtime_error("load_map: truncated payload");
  for (uint8_t b : payload)
    if (b > 1) throw std::runtime_error("load_map: invalid occupancy byte");
  return grid;
}

inline VoxelGrid load_map(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_map: cannot open " + path);
  return load_map(f);
}

}  // namespace embr
