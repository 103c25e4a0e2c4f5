#pragma once

#include <limits>
#include <stdexcept>
#include <vector>

#include "embr/voxel_grid.hpp"

namespace embr {

namespace detail {

// 1D squared-distance transform, lower-envelope-of-parabolas method.
// f holds squared distances (may contain +inf); d receives the transform.
inline void dt1d(const double* f, int n, double* d, int* v, double* z) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    double s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
    while (s <= z[k]) {
      --k;
      s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  if (k < 0) {
    for (int q = 0; q < n; ++q) d[q] = kInf;
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[j + 1] < q) ++j;
    const double dq = q - v[j];
    d[q] = dq * dq + f[v[j]];
  }
}

}  // namespace detail

// Exact Euclidean distance (meters) from every cell center to the nearest
// occupied cell center. Three separable passes on squared distances.
inline std::vector<double> nearest_occupied_distance_field(const VoxelGrid& map) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const int nx = map.dims().x(), ny = map.dims().y(), nz = map.dims().z();
  const size_t total = map.size();

  std::vector<double> sq(total);
  bool any = false;
  for (size_t i = 0; i < total; ++i) {
    const bool occ = map.data()[i] != 0;
    sq[i] = occ ? 0.0 : kInf;
    any = any || occ;
  }
  if (!any)
    throw std::invalid_argument("nearest_occupied_distance_field: map has no occupied voxel");

  const int nmax = std::max(nx, std::max(ny, nz));
  std::vector<double> f(nmax), d(nmax), z(nmax + 1);
  std::vector<int> v(nmax);

  const auto idx = [nx, ny](int x, int y, int zz) {
    return static_cast<size_t>(x) + static_cast<size_t>(nx) * (static_cast<size_t>(y) +
                                                               static_cast<size_t>(ny) * zz);
  };

  // Along x.
  for (int zz = 0; zz < nz; ++zz)
    for (int y = 0; y < ny; ++y) {
      for (int x = 0; x < nx; ++x) f[x] = sq[idx(x, y, zz)];
      detail::dt1d(f.data(), nx, d.data(), v.data(), z.data());
      for (int x = 0; x < nx; ++x) sq[idx(x, y, zz)] = d[x];
    }
  // Along y.
  for (int zz = 0; zz < nz; ++zz)
    for (int x = 0; x < nx; ++x) {
      for (int y = 0; y < ny; ++y) f[y] = sq[idx(x, y, zz)];
      detail::dt1d(f.data(), ny, d.data(), v.data(), z.data());
      for (int y = 0; y < ny; ++y) sq[idx(x, y, zz)] = d[y];
    }
  // Along z.
  for (int y = 0; y < ny; ++y)
    for (int x = 0; x < nx; ++x) {
      for (int zz = 0; zz < nz; ++zz) f[zz] = sq[idx(x, y, zz)];
      detail::dt1d(f.data(), nz, d.data(), v.data(), z.data());
      for (int zz = 0; zz < nz; ++zz) sq[idx(x, y, zz)] = d[zz];
    }

  std::vector<double> out(total);
  const double res = map.resolution();
  for (size_t i = 0; i < total; ++i) out[i] = std::sqrt(sq[i]) * res;
  return out;
}

}  // namespace embr
