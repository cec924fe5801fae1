#pragma once

// Localization accuracy: rasterization, 8-connected components, circularity,
// Dice, area ratio, intercentroid distance, resection ratio and IQR outlier
// filtering.

#include "sonoloc/geometry.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sonoloc {

// Pixel (i, j) covers [origin + i*res, origin + (i+1)*res) in x and the same
// in y; row j = 0 is at the lowest y.
struct GridSpec {
  int width = 0;
  int height = 0;
  double resolution_mm = 0.5;
  Point2 origin_mm = Point2::Zero();

  void validate() const;
  Point2 pixel_center(int i, int j) const {
    return origin_mm + Point2((i + 0.5) * resolution_mm, (j + 0.5) * resolution_mm);
  }
  std::size_t pixels() const { return static_cast<std::size_t>(width) * height; }
  double pixel_area_mm2() const { return resolution_mm * resolution_mm; }
  bool operator==(const GridSpec&) const = default;

  // Square grid covering [lo, hi] plus a margin, at the given resolution.
  static GridSpec covering(const Point2& lo, const Point2& hi, double resolution_mm,
                           double margin_mm);
};

struct RasterMask {
  GridSpec grid;
  std::vector<std::uint8_t> bits;  // row-major, 0 or 1

  explicit RasterMask(const GridSpec& g) : grid(g), bits(g.pixels(), 0) {}
  std::size_t index(int i, int j) const { return static_cast<std::size_t>(j) * grid.width + i; }
  bool at(int i, int j) const { return bits[index(i, j)] != 0; }
  void set(int i, int j, bool v = true) { bits[index(i, j)] = v ? 1 : 0; }
  std::size_t count() const;
  bool operator==(const RasterMask&) const = default;
};

struct Component {
  std::vector<std::size_t> pixels;  // mask indices, ascending
  std::size_t area_px = 0;
  double perimeter_px = 0.0;
  Point2 centroid_mm = Point2::Zero();
  double circularity = 0.0;
};

struct VoxelMask {
  std::array<int, 3> dims{0, 0, 0};
  double voxel_size_mm = 0.5;
  std::vector<std::uint8_t> bits;  // x fastest, then y, then z

  VoxelMask() = default;
  VoxelMask(std::array<int, 3> d, double voxel_mm);
  std::size_t index(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * dims[1] + y) * dims[0] + x;
  }
  std::size_t count() const;
  void validate() const;
};

struct MetricsReport {
  double dice = 0.0;
  double area_ratio = 0.0;
  double intercentroid_mm = 0.0;
  std::optional<double> crr;
  bool tumor_low_circularity = false;  // isolate_tumor fell back to max area
  bool seed_outside_margin = false;    // seed not inside the drawn margin
};

// Pixels whose center lies inside the ring (even-odd). The ring may be
// non-simple. Throws ValidationError when the ring's bounding box leaves the
// grid.
RasterMask rasterize(std::span<const Point2> ring, const GridSpec& grid);
RasterMask rasterize(const Shape2D& shape, const GridSpec& grid);
// Filled disk (pixel centers within radius).
RasterMask rasterize_disk(const Point2& center, double radius_mm, const GridSpec& grid);

// 8-connected components ordered by their first pixel in row-major order.
std::vector<Component> connected_components(const RasterMask& mask);

// Closed contour length of one component: axial steps 1, diagonal steps
// sqrt(2). A single pixel is given perimeter 4.
double chain_code_perimeter(const RasterMask& mask, std::span<const std::size_t> component_pixels);

// (4*pi*A/P^2) * (1 - 0.5/r)^2 with r = P/(2*pi) + 0.5.
double circularity(double area, double perimeter);
double circularity(const Component& c);

inline constexpr double kTumorCircularityThreshold = 0.3;

struct TumorPick {
  Component component;
  bool low_circularity = false;
};

TumorPick isolate_tumor(const RasterMask& mask, double min_circularity = kTumorCircularityThreshold);
// Component pixels plus every hole they enclose.
RasterMask filled_region(const GridSpec& grid, const Component& c);
Component isolate_seed(const RasterMask& mask, const Component& tumor);
RasterMask component_mask(const GridSpec& grid, const Component& c);

double dice(const RasterMask& a, const RasterMask& b);
double area_ratio(const RasterMask& ds, const RasterMask& gt);
double intercentroid(const Component& ds_seed, const Component& gt_seed);

// Euclidean ball dilation with a radius given in voxels.
VoxelMask dilate_ball(const VoxelMask& m, int radius_vox);
// |trv| / |tumor dilated by margin_mm|.
double crr(const VoxelMask& trv, const VoxelMask& tumor, double margin_mm = 2.0);
VoxelMask voxel_ball(std::array<int, 3> dims, double voxel_mm, const Point3& center_mm, double radius_mm);

struct IqrResult {
  std::vector<double> kept;
  std::vector<double> removed;
  std::vector<bool> is_outlier;  // per input value
  double q1 = 0.0, q3 = 0.0, lower = 0.0, upper = 0.0;
};

// Quantile with linear interpolation between order statistics at
// h = (n-1)*p.
double quantile_linear(std::vector<double> values, double p);
// Removes values outside [Q1 - 1.5 IQR, Q3 + 1.5 IQR]. Needs >= 4 values.
IqrResult iqr_filter(std::span<const double> values);

struct MetricsRow {
  std::string session_id;
  std::string trial_id;
  std::string model;
  MetricsReport report;
  std::string outlier_flag;  // ';'-joined metric names flagged by the IQR rule
};

std::string metrics_csv(std::span<const MetricsRow> rows);

std::vector<std::uint8_t> encode_pgm(const RasterMask& mask);
void write_pgm(const RasterMask& mask, const std::filesystem::path& path);
// Nonzero gray values become set pixels; the grid gets the given placement.
RasterMask read_pgm(const std::filesystem::path& path, double resolution_mm = 0.5,
                    const Point2& origin_mm = Point2::Zero());

}  // namespace sonoloc
