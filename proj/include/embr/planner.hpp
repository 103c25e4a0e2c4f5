#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

#include "embr/csv.hpp"
#include "embr/distance_field.hpp"
#include "embr/geometry.hpp"
#include "embr/raycast.hpp"
#include "embr/voxel_grid.hpp"

namespace embr {

// Any-angle path between two free positions. Interior waypoints sit on grid
// vertices (cell corners) of the planning grid; the endpoints are the exact
// requested positions. Consecutive waypoints always have line of sight on the
// map the plan was computed on.
struct Path {
  std::vector<Vec3> waypoints;
  double total_length = 0.0;
  long los_checks_performed = 0;
  long expansions = 0;
};

enum class PlanMode { TwoD, ThreeD };

struct PlanRequest {
  Vec3 start = Vec3::Zero();
  Vec3 goal = Vec3::Zero();
  const VoxelGrid* map = nullptr;
  double inflation_radius = 0.0;
  PlanMode mode = PlanMode::ThreeD;
};

// No route exists between the requested endpoints.
struct UnreachableError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Grows every obstacle by the given radius: a voxel becomes occupied when its
// center lies within `radius` of an occupied voxel center. Radius zero (or an
// empty map) returns the input unchanged.
inline VoxelGrid inflate(const VoxelGrid& map, double radius) {
  if (radius < 0.0) throw std::invalid_argument("inflate: negative radius");
  VoxelGrid out = map;
  if (radius == 0.0 || map.occupied_count() == 0) return out;
  const std::vector<double> dist = nearest_occupied_distance_field(map);
  const Idx3 dims = map.dims();
  for (int z = 0; z < dims.z(); ++z) {
    for (int y = 0; y < dims.y(); ++y) {
      for (int x = 0; x < dims.x(); ++x) {
        const Idx3 idx(x, y, z);
        if (!out.occupied(idx) && dist[map.linear_index(idx)] <= radius) {
          out.set_occupied(idx);
        }
      }
    }
  }
  return out;
}

namespace detail {

enum class SearchKind { AStar, ThetaStar, LazyThetaStar };

struct QueueEntry {
  double f = 0.0;
  double h = 0.0;
  int idx = 0;
};

struct QueueOrder {
  // priority_queue keeps the "largest" on top; invert so the smallest
  // (f, h, idx) tuple pops first. The full tuple makes ties deterministic.
  bool operator()(const QueueEntry& a, const QueueEntry& b) const {
    if (a.f != b.f) return a.f > b.f;
    if (a.h != b.h) return a.h > b.h;
    return a.idx > b.idx;
  }
};

// Shared search core for the three grid planners, running on the lattice of
// cell corners (8-connected in 2D, 26-connected in 3D) plus two virtual nodes
// for the exact start and goal positions. The start connects to the corners
// of its containing cell and the corners of the goal's cell connect to the
// goal; those segments lie inside a single free cell, which is convex, so
// they never need a sight test. The planners differ only in how a neighbor's
// candidate parent is chosen and in when line-of-sight is paid:
//   AStar         -- parent is always the expanding vertex; no sight checks.
//   ThetaStar     -- checks sight from the expanding vertex's parent to each
//                    neighbor and reroutes through it when visible.
//   LazyThetaStar -- assumes that sight holds when scoring neighbors and
//                    verifies it only when a vertex is finally expanded,
//                    repairing to the best closed in-neighbor on failure.
class VertexSearch {
 public:
  VertexSearch(const VoxelGrid& map, PlanMode mode, SearchKind kind, const Vec3& start,
               const Vec3& goal)
      : map_(map), mode_(mode), kind_(kind), start_(start), goal_(goal) {
    const Idx3 d = map.dims();
    vx_ = d.x() + 1;
    vy_ = d.y() + 1;
    vz_ = mode == PlanMode::ThreeD ? d.z() + 1 : 1;
    if (mode == PlanMode::TwoD) {
      layer_ = map.world_to_index(start).z();
      plane_z_ = map.origin().z() + (layer_ + 0.5) * map.resolution();
    }
    n_lattice_ = vx_ * vy_ * vz_;
    start_id_ = n_lattice_;
    goal_id_ = n_lattice_ + 1;
    g_.assign(static_cast<std::size_t>(n_lattice_) + 2,
              std::numeric_limits<double>::infinity());
    parent_.assign(static_cast<std::size_t>(n_lattice_) + 2, -1);
    closed_.assign(static_cast<std::size_t>(n_lattice_) + 2, 0);
    banned_.assign(static_cast<std::size_t>(n_lattice_), 0);
    for (int iz = 0; iz < vz_; ++iz)
      for (int iy = 0; iy < vy_; ++iy)
        for (int ix = 0; ix < vx_; ++ix)
          banned_[vertex_id(ix, iy, iz)] = squeeze_vertex(ix, iy, iz) ? 1 : 0;
    start_corners_ = cell_corner_ids(map.world_to_index(start));
    goal_corners_ = cell_corner_ids(map.world_to_index(goal));
    start_vertex_id_ = coincident_corner(start_corners_, start);
    goal_vertex_id_ = coincident_corner(goal_corners_, goal);
  }

  // Returns the node chain from the start node to the goal node, inclusive,
  // or an empty vector when the goal is unreachable.
  std::vector<int> run(long& los_checks, long& expansions) {
    los_checks_ = 0;
    expansions_ = 0;
    g_[start_id_] = 0.0;
    parent_[start_id_] = start_id_;
    const double h0 = (goal_ - start_).norm();
    open_.push({h0, h0, start_id_});
    while (!open_.empty()) {
      const QueueEntry top = open_.top();
      open_.pop();
      const int cur = top.idx;
      if (closed_[cur]) continue;
      closed_[cur] = 1;
      ++expansions_;
      if (kind_ == SearchKind::LazyThetaStar) repair_parent(cur);
      if (cur == goal_id_) {
        los_checks = los_checks_;
        expansions = expansions_;
        return reconstruct();
      }
      expand(cur);
    }
    los_checks = los_checks_;
    expansions = expansions_;
    return {};
  }

  Vec3 position(int id) const {
    if (id == start_id_) return start_;
    if (id == goal_id_) return goal_;
    const int ix = id % vx_;
    const int iy = (id / vx_) % vy_;
    const int iz = id / (vx_ * vy_);
    const double res = map_.resolution();
    return {map_.origin().x() + ix * res, map_.origin().y() + iy * res,
            mode_ == PlanMode::TwoD ? plane_z_ : map_.origin().z() + iz * res};
  }

  // Pulls the polyline taut after the search: drops waypoints a straight
  // sight line can skip, and slides each interior waypoint to the lattice
  // vertex that minimizes its local two-segment detour. The search can miss
  // such turns because a parent link only changes where sight breaks, never
  // where the taut path actually bends. Sight tests here are part of the
  // fixed post-pass, not the search economy the counters report.
  void refine(std::vector<Vec3>& w) const {
    for (int round = 0; round < 16; ++round) {
      bool changed = false;
      for (std::size_t i = 1; i + 1 < w.size();) {
        if (line_of_sight(w[i - 1], w[i + 1], map_)) {
          w.erase(w.begin() + static_cast<long>(i));
          changed = true;
        } else {
          ++i;
        }
      }
      for (std::size_t i = 1; i + 1 < w.size(); ++i) {
        const Vec3& a = w[i - 1];
        const Vec3& b = w[i + 1];
        const double cur = (w[i] - a).norm() + (b - w[i]).norm();
        std::vector<std::pair<double, int>> cands;
        for (int id = 0; id < n_lattice_; ++id) {
          if (banned_[id]) continue;
          const Vec3 v = position(id);
          const double sum = (v - a).norm() + (b - v).norm();
          if (sum < cur - 1e-12) cands.push_back({sum, id});
        }
        std::sort(cands.begin(), cands.end());
        for (const auto& [sum, id] : cands) {
          const Vec3 v = position(id);
          if (line_of_sight(a, v, map_) && line_of_sight(v, b, map_)) {
            w[i] = v;
            changed = true;
            break;
          }
        }
      }
      if (!changed) return;
    }
  }

 private:
  int vertex_id(int ix, int iy, int iz) const { return (iz * vy_ + iy) * vx_ + ix; }

  std::vector<int> cell_corner_ids(const Idx3& cell) const {
    std::vector<int> ids;
    const int czhi = mode_ == PlanMode::TwoD ? 0 : 1;
    for (int dz = 0; dz <= czhi; ++dz)
      for (int dy = 0; dy <= 1; ++dy)
        for (int dx = 0; dx <= 1; ++dx)
          ids.push_back(vertex_id(cell.x() + dx, cell.y() + dy,
                                  mode_ == PlanMode::TwoD ? 0 : cell.z() + dz));
    return ids;
  }

  bool is_corner_of(const std::vector<int>& corners, int id) const {
    return std::find(corners.begin(), corners.end(), id) != corners.end();
  }

  // Id of the corner whose position coincides exactly with the given point,
  // or -1 when the point lies strictly inside its cell.
  int coincident_corner(const std::vector<int>& corners, const Vec3& p) const {
    for (int c : corners) {
      const Vec3 cp = position(c);
      if (cp.x() == p.x() && cp.y() == p.y() && cp.z() == p.z()) return c;
    }
    return -1;
  }

  bool pinched_pair(const Idx3& c1, const Idx3& c2) const {
    const auto solid = [&](const Idx3& c) { return !map_.in_bounds(c) || map_.occupied(c); };
    const auto real_occ = [&](const Idx3& c) { return map_.in_bounds(c) && map_.occupied(c); };
    return solid(c1) && solid(c2) && (real_occ(c1) || real_occ(c2));
  }

  // A vertex pinched between two solid cells that touch each other only at
  // this corner (or, in 3D, only along a lattice edge through it) cannot be
  // passed through: any route via the vertex would slip between the two
  // blocks. The map border counts as solid, but a pinch needs at least one
  // real obstacle -- the bare corner of the map box is an ordinary vertex.
  bool squeeze_vertex(int ix, int iy, int iz) const {
    const int cx = ix - 1, cy = iy - 1;
    const int cz = mode_ == PlanMode::TwoD ? layer_ : iz - 1;
    if (mode_ == PlanMode::TwoD) {
      return pinched_pair({cx, cy, cz}, {cx + 1, cy + 1, cz}) ||
             pinched_pair({cx, cy + 1, cz}, {cx + 1, cy, cz});
    }
    for (int s = 0; s <= 1; ++s) {
      if (pinched_pair({cx, cy, cz + s}, {cx + 1, cy + 1, cz + s}) ||
          pinched_pair({cx, cy + 1, cz + s}, {cx + 1, cy, cz + s}) ||
          pinched_pair({cx, cy + s, cz}, {cx + 1, cy + s, cz + 1}) ||
          pinched_pair({cx, cy + s, cz + 1}, {cx + 1, cy + s, cz}) ||
          pinched_pair({cx + s, cy, cz}, {cx + s, cy + 1, cz + 1}) ||
          pinched_pair({cx + s, cy, cz + 1}, {cx + s, cy + 1, cz})) {
        return true;
      }
    }
    return false;
  }

  // Counted sight check between two node positions: the quantity the
  // any-angle planners trade against path quality.
  bool sight(int a, int b) {
    ++los_checks_;
    return line_of_sight(position(a), position(b), map_);
  }

  // Uncounted passability test for a unit lattice edge; this is neighbor
  // generation, not a path-shortcut probe.
  bool edge_passable(int a, int b) const { return line_of_sight(position(a), position(b), map_); }

  double dist(int a, int b) const { return (position(a) - position(b)).norm(); }

  // Lazy expansion validation: the optimistic parent link is checked here,
  // once per expanded node, and rerouted through the cheapest already-closed
  // in-neighbor when the assumed sight line turns out to be blocked.
  void repair_parent(int cur) {
    const int par = parent_[cur];
    if (par == cur) return;
    if (sight(par, cur)) return;
    double best = std::numeric_limits<double>::infinity();
    int best_parent = -1;
    auto offer = [&](int n) {
      if (!closed_[n]) return;
      // A squeeze vertex has no legal outgoing edges (unless it is the exact
      // start), so it cannot serve as a repaired parent either.
      if (n < n_lattice_ && banned_[n] && n != start_vertex_id_) return;
      const double cand = g_[n] + dist(n, cur);
      if (cand < best || (cand == best && n < best_parent)) {
        best = cand;
        best_parent = n;
      }
    };
    if (cur == goal_id_) {
      for (int c : goal_corners_) offer(c);
    } else {
      for_each_lattice_neighbor(cur, [&](int n) {
        if (closed_[n] && edge_passable(cur, n)) offer(n);
      });
      if (is_corner_of(start_corners_, cur)) offer(start_id_);
    }
    // A queued node was reached through some closed in-neighbor, so the
    // candidate set is never empty.
    g_[cur] = best;
    parent_[cur] = best_parent;
  }

  template <class Fn>
  void for_each_lattice_neighbor(int id, Fn&& fn) const {
    const int ix = id % vx_;
    const int iy = (id / vx_) % vy_;
    const int iz = id / (vx_ * vy_);
    const int zlo = mode_ == PlanMode::TwoD ? 0 : -1;
    const int zhi = mode_ == PlanMode::TwoD ? 0 : 1;
    for (int dz = zlo; dz <= zhi; ++dz) {
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0 && dz == 0) continue;
          const int nx = ix + dx, ny = iy + dy, nz = iz + dz;
          if (nx < 0 || ny < 0 || nz < 0 || nx >= vx_ || ny >= vy_ || nz >= vz_) continue;
          fn(vertex_id(nx, ny, nz));
        }
      }
    }
  }

  void relax(int cur, int n) {
    double cand_g;
    int cand_parent;
    switch (kind_) {
      case SearchKind::AStar:
        cand_g = g_[cur] + dist(cur, n);
        cand_parent = cur;
        break;
      case SearchKind::ThetaStar: {
        const int par = parent_[cur];
        if (sight(par, n)) {
          cand_g = g_[par] + dist(par, n);
          cand_parent = par;
        } else {
          cand_g = g_[cur] + dist(cur, n);
          cand_parent = cur;
        }
        break;
      }
      case SearchKind::LazyThetaStar:
      default: {
        const int par = parent_[cur];
        cand_g = g_[par] + dist(par, n);
        cand_parent = par;
        break;
      }
    }
    if (cand_g < g_[n]) {
      g_[n] = cand_g;
      parent_[n] = cand_parent;
      const double h = dist(n, goal_id_);
      open_.push({cand_g + h, h, n});
    }
  }

  void expand(int cur) {
    // A squeeze vertex cannot appear as an interior turn point. The exact
    // start position may still depart from one, and the exact goal position
    // may still stop on one; those touches never pass through the pinch.
    if (cur == start_id_) {
      for (int c : start_corners_) {
        if (!closed_[c] && (!banned_[c] || c == start_vertex_id_)) relax(cur, c);
      }
      return;
    }
    if (banned_[cur] && cur != start_vertex_id_) {
      if (is_corner_of(goal_corners_, cur) && !closed_[goal_id_]) relax(cur, goal_id_);
      return;
    }
    for_each_lattice_neighbor(cur, [&](int n) {
      if (!closed_[n] && (!banned_[n] || n == goal_vertex_id_) && edge_passable(cur, n)) {
        relax(cur, n);
      }
    });
    if (is_corner_of(goal_corners_, cur) && !closed_[goal_id_]) relax(cur, goal_id_);
  }

  std::vector<int> reconstruct() const {
    std::vector<int> chain;
    for (int v = goal_id_; v != start_id_; v = parent_[v]) chain.push_back(v);
    chain.push_back(start_id_);
    std::reverse(chain.begin(), chain.end());
    return chain;
  }

  const VoxelGrid& map_;
  PlanMode mode_;
  SearchKind kind_;
  Vec3 start_;
  Vec3 goal_;
  int vx_ = 0, vy_ = 0, vz_ = 0;
  int n_lattice_ = 0;
  int start_id_ = 0;
  int goal_id_ = 0;
  int layer_ = 0;
  double plane_z_ = 0.0;
  std::vector<uint8_t> banned_;
  std::vector<int> start_corners_;
  std::vector<int> goal_corners_;
  int start_vertex_id_ = -1;
  int goal_vertex_id_ = -1;
  std::vector<double> g_;
  std::vector<int> parent_;
  std::vector<uint8_t> closed_;
  std::priority_queue<QueueEntry, std::vector<QueueEntry>, QueueOrder> open_;
  long los_checks_ = 0;
  long expansions_ = 0;
};

inline Path plan_common(const PlanRequest& req, SearchKind kind) {
  if (req.map == nullptr) throw std::invalid_argument("plan: null map");
  const VoxelGrid planning_map =
      req.inflation_radius > 0.0 ? inflate(*req.map, req.inflation_radius) : *req.map;
  if (planning_map.state_at(req.start) != CellState::Free) {
    throw std::invalid_argument("plan: start is not in free space");
  }
  if (planning_map.state_at(req.goal) != CellState::Free) {
    throw std::invalid_argument("plan: goal is not in free space");
  }
  const Idx3 start_cell = planning_map.world_to_index(req.start);
  const Idx3 goal_cell = planning_map.world_to_index(req.goal);
  if (req.mode == PlanMode::TwoD && start_cell.z() != goal_cell.z()) {
    throw std::invalid_argument("plan: 2D mode requires start and goal on the same layer");
  }

  Path path;

  // Any-angle planners first try the direct segment; the straight line is
  // optimal whenever it is free.
  if (kind != SearchKind::AStar) {
    ++path.los_checks_performed;
    if (line_of_sight(req.start, req.goal, planning_map)) {
      path.waypoints = {req.start, req.goal};
      path.total_length = (req.goal - req.start).norm();
      return path;
    }
  }
  if (start_cell == goal_cell) {
    // Same free cell is convex, so the direct segment is always valid.
    path.waypoints = {req.start, req.goal};
    path.total_length = (req.goal - req.start).norm();
    return path;
  }

  VertexSearch search(planning_map, req.mode, kind, req.start, req.goal);
  const std::vector<int> chain = search.run(path.los_checks_performed, path.expansions);
  if (chain.empty()) {
    throw UnreachableError("plan: no path between the requested endpoints");
  }

  // Convert to positions, collapsing the zero-length hop that appears when an
  // endpoint falls exactly on a lattice vertex.
  std::vector<Vec3>& w = path.waypoints;
  w.reserve(chain.size());
  for (int idx : chain) {
    const Vec3 p = search.position(idx);
    if (!w.empty() && w.back().x() == p.x() && w.back().y() == p.y() && w.back().z() == p.z()) {
      continue;
    }
    w.push_back(p);
  }
  // The any-angle planners tighten their output; A* stays a pure grid path.
  if (kind != SearchKind::AStar) search.refine(w);
  for (std::size_t i = 0; i + 1 < w.size(); ++i) {
    path.total_length += (w[i + 1] - w[i]).norm();
  }
  return path;
}

}  // namespace detail

inline Path plan_a_star(const PlanRequest& req) {
  return detail::plan_common(req, detail::SearchKind::AStar);
}

inline Path plan_theta_star(const PlanRequest& req) {
  return detail::plan_common(req, detail::SearchKind::ThetaStar);
}

inline Path plan_lazy_theta_star(const PlanRequest& req) {
  return detail::plan_common(req, detail::SearchKind::LazyThetaStar);
}

// Checks the active path against freshly observed obstacle points. When every
// segment stays clear of the (inflated) obstacles the input path is returned
// untouched; otherwise a new plan is computed on a map augmented with the
// observations, starting from req.start (the robot's current position).
inline Path validate_and_replan(const Path& path, const std::vector<Vec3>& live_obstacles,
                                const VoxelGrid& map, const PlanRequest& req) {
  if (live_obstacles.empty() || path.waypoints.size() < 2) return path;
  VoxelGrid augmented = map;
  bool any_marked = false;
  for (const Vec3& p : live_obstacles) {
    if (augmented.state_at(p) != CellState::OutOfBounds) {
      augmented.set_occupied(augmented.world_to_index(p));
      any_marked = true;
    }
  }
  if (!any_marked) return path;
  const VoxelGrid check_map =
      req.inflation_radius > 0.0 ? inflate(augmented, req.inflation_radius) : augmented;
  bool blocked = false;
  for (std::size_t i = 0; i + 1 < path.waypoints.size() && !blocked; ++i) {
    if (!line_of_sight(path.waypoints[i], path.waypoints[i + 1], check_map)) blocked = true;
  }
  if (!blocked) return path;
  PlanRequest fresh = req;
  fresh.map = &augmented;
  fresh.goal = path.waypoints.back();
  return plan_lazy_theta_star(fresh);
}

inline void write_path_csv(const std::string& file, const Path& path) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open path file for writing: " + file);
  out << "index,x,y,z\n";
  for (std::size_t i = 0; i < path.waypoints.size(); ++i) {
    const Vec3& p = path.waypoints[i];
    out << i << ',' << g17(p.x()) << ',' << g17(p.y()) << ',' << g17(p.z()) << '\n';
  }
}

}  // namespace embr
