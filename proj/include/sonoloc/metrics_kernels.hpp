#pragma once

// Data-parallel kernels behind the metrics. Each OpenMP kernel has a serial
// reference with the same contract; tests hold them to identical output and
// bench/ compares their speed.

#include "sonoloc/geometry.hpp"
#include "sonoloc/metrics.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace sonoloc::kernels {

// Scanline even-odd fill, rows in parallel.
void rasterize_parallel(std::span<const Point2> ring, RasterMask& out);
// Per-pixel parity test.
void rasterize_serial(std::span<const Point2> ring, RasterMask& out);

struct OverlapCounts {
  std::size_t a = 0, b = 0, both = 0;
  bool operator==(const OverlapCounts&) const = default;
};
OverlapCounts overlap_parallel(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);
OverlapCounts overlap_serial(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

std::size_t count_parallel(std::span<const std::uint8_t> bits);

// Output voxel set iff some input voxel lies within the ball. Each thread
// owns whole output z slices and stamps into them.
VoxelMask dilate_parallel(const VoxelMask& m, int radius_vox);
// Stamps the ball around every input voxel.
VoxelMask dilate_serial(const VoxelMask& m, int radius_vox);

// Signed distances for many probe points.
std::vector<double> signed_distances_parallel(const Shape2D& shape, std::span<const Point2> points);
std::vector<double> signed_distances_serial(const Shape2D& shape, std::span<const Point2> points);

}  // namespace sonoloc::kernels
