#include "sonoloc/metrics_kernels.hpp"

#include <algorithm>
#include <array>

#include <omp.h>

namespace sonoloc::kernels {

void rasterize_parallel(std::span<const Point2> ring, RasterMask& out) {
  const GridSpec& g = out.grid;
  const std::size_t n = ring.size();
#pragma omp parallel
  {
    std::vector<double> xs;
#pragma omp for schedule(static)
    for (int j = 0; j < g.height; ++j) {
      const double y = g.pixel_center(0, j).y();
      xs.clear();
      // Same crossing rule and intersection formula as inside_even_odd.
      for (std::size_t i = 0, k = n - 1; i < n; k = i++) {
        const Point2& a = ring[i];
        const Point2& b = ring[k];
        if ((a.y() > y) != (b.y() > y))
          xs.push_back(a.x() + (y - a.y()) * (b.x() - a.x()) / (b.y() - a.y()));
      }
      std::sort(xs.begin(), xs.end());
      std::size_t passed = 0;  // crossings with x <= px
      for (int i = 0; i < g.width; ++i) {
        const double px = g.pixel_center(i, j).x();
        while (passed < xs.size() && xs[passed] <= px) ++passed;
        out.bits[out.index(i, j)] = ((xs.size() - passed) % 2) ? 1 : 0;
      }
    }
  }
}

void rasterize_serial(std::span<const Point2> ring, RasterMask& out) {
  const GridSpec& g = out.grid;
  for (int j = 0; j < g.height; ++j)
    for (int i = 0; i < g.width; ++i)
      out.bits[out.index(i, j)] = inside_even_odd(ring, g.pixel_center(i, j)) ? 1 : 0;
}

OverlapCounts overlap_parallel(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  std::size_t ca = 0, cb = 0, both = 0;
  const auto n = static_cast<std::ptrdiff_t>(a.size());
#pragma omp parallel for reduction(+ : ca, cb, both) schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const bool x = a[i] != 0, y = b[i] != 0;
    ca += x;
    cb += y;
    both += x && y;
  }
  return {ca, cb, both};
}

OverlapCounts overlap_serial(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  OverlapCounts c;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i]) ++c.a;
    if (b[i]) ++c.b;
    if (a[i] && b[i]) ++c.both;
  }
  return c;
}

std::size_t count_parallel(std::span<const std::uint8_t> bits) {
  std::size_t c = 0;
  const auto n = static_cast<std::ptrdiff_t>(bits.size());
#pragma omp parallel for reduction(+ : c) schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) c += bits[i] != 0;
  return c;
}

namespace {

std::vector<std::array<int, 3>> ball_offsets(int r) {
  std::vector<std::array<int, 3>> offs;
  for (int dz = -r; dz <= r; ++dz)
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx)
        if (dx * dx + dy * dy + dz * dz <= r * r) offs.push_back({dx, dy, dz});
  return offs;
}

}  // namespace

VoxelMask dilate_parallel(const VoxelMask& m, int radius_vox) {
  VoxelMask out(m.dims, m.voxel_size_mm);
  const int nx = m.dims[0], ny = m.dims[1], nz = m.dims[2];
  // In-plane ball offsets grouped by dz, so each thread stamps only into the
  // output slices it owns.
  std::vector<std::vector<std::array<int, 2>>> disk(2 * static_cast<std::size_t>(std::max(radius_vox, 0)) + 1);
  for (const auto& o : ball_offsets(radius_vox)) disk[o[2] + radius_vox].push_back({o[0], o[1]});
#pragma omp parallel for schedule(dynamic, 1)
  for (int z = 0; z < nz; ++z) {
    for (int dz = -radius_vox; dz <= radius_vox; ++dz) {
      const int sz = z - dz;
      if (sz < 0 || sz >= nz) continue;
      const auto& offs = disk[dz + radius_vox];
      for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x) {
          if (!m.bits[m.index(x, y, sz)]) continue;
          for (const auto& o : offs) {
            const int tx = x + o[0], ty = y + o[1];
            if (tx < 0 || ty < 0 || tx >= nx || ty >= ny) continue;
            out.bits[out.index(tx, ty, z)] = 1;
          }
        }
    }
  }
  return out;
}

VoxelMask dilate_serial(const VoxelMask& m, int radius_vox) {
  VoxelMask out(m.dims, m.voxel_size_mm);
  const auto offs = ball_offsets(radius_vox);
  const int nx = m.dims[0], ny = m.dims[1], nz = m.dims[2];
  for (int z = 0; z < nz; ++z)
    for (int y = 0; y < ny; ++y)
      for (int x = 0; x < nx; ++x) {
        if (!m.bits[m.index(x, y, z)]) continue;
        for (const auto& o : offs) {
          const int tx = x + o[0], ty = y + o[1], tz = z + o[2];
          if (tx < 0 || ty < 0 || tz < 0 || tx >= nx || ty >= ny || tz >= nz) continue;
          out.bits[out.index(tx, ty, tz)] = 1;
        }
      }
  return out;
}

std::vector<double> signed_distances_parallel(const Shape2D& shape, std::span<const Point2> points) {
  std::vector<double> out(points.size());
  const auto n = static_cast<std::ptrdiff_t>(points.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = signed_distance(shape, points[i]);
  return out;
}

std::vector<double> signed_distances_serial(const Shape2D& shape, std::span<const Point2> points) {
  std::vector<double> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(signed_distance(shape, p));
  return out;
}

}  // namespace sonoloc::kernels
