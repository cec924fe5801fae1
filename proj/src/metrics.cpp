#include "sonoloc/metrics.hpp"

#include "sonoloc/errors.hpp"
#include "sonoloc/metrics_kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

namespace sonoloc {

void GridSpec::validate() const {
  if (width <= 0 || height <= 0) throw ValidationError("grid dimensions must be positive");
  if (!(resolution_mm > 0)) throw ValidationError("grid resolution must be positive");
  if (!origin_mm.allFinite()) throw ValidationError("grid origin is not finite");
}

GridSpec GridSpec::covering(const Point2& lo, const Point2& hi, double resolution_mm,
                            double margin_mm) {
  GridSpec g;
  g.resolution_mm = resolution_mm;
  const Point2 a = lo - Point2::Constant(margin_mm);
  const Point2 b = hi + Point2::Constant(margin_mm);
  g.origin_mm = Point2(std::floor(a.x() / resolution_mm) * resolution_mm,
                       std::floor(a.y() / resolution_mm) * resolution_mm);
  g.width = static_cast<int>(std::ceil((b.x() - g.origin_mm.x()) / resolution_mm));
  g.height = static_cast<int>(std::ceil((b.y() - g.origin_mm.y()) / resolution_mm));
  g.validate();
  return g;
}

std::size_t RasterMask::count() const { return kernels::count_parallel(bits); }

VoxelMask::VoxelMask(std::array<int, 3> d, double voxel_mm)
    : dims(d), voxel_size_mm(voxel_mm) {
  validate();
  bits.assign(static_cast<std::size_t>(d[0]) * d[1] * d[2], 0);
}

void VoxelMask::validate() const {
  if (dims[0] <= 0 || dims[1] <= 0 || dims[2] <= 0)
    throw ValidationError("voxel grid dimensions must be positive");
  if (!(voxel_size_mm > 0)) throw ValidationError("voxel size must be positive");
}

std::size_t VoxelMask::count() const { return kernels::count_parallel(bits); }

RasterMask rasterize(std::span<const Point2> ring, const GridSpec& grid) {
  grid.validate();
  if (ring.size() < 3) throw ValidationError("ring needs at least 3 vertices");
  const Point2 lo = grid.origin_mm;
  const Point2 hi = lo + Point2(grid.width * grid.resolution_mm, grid.height * grid.resolution_mm);
  for (const auto& v : ring) {
    if (!v.allFinite()) throw ValidationError("ring vertex is not finite");
    if (v.x() < lo.x() || v.y() < lo.y() || v.x() > hi.x() || v.y() > hi.y())
      throw ValidationError("shape exceeds the raster grid");
  }
  RasterMask mask(grid);
  kernels::rasterize_parallel(ring, mask);
  return mask;
}

RasterMask rasterize(const Shape2D& shape, const GridSpec& grid) {
  return rasterize(std::span<const Point2>(shape.vertices()), grid);
}

RasterMask rasterize_disk(const Point2& center, double radius_mm, const GridSpec& grid) {
  grid.validate();
  RasterMask mask(grid);
  const double r2 = radius_mm * radius_mm;
  for (int j = 0; j < grid.height; ++j)
    for (int i = 0; i < grid.width; ++i)
      if ((grid.pixel_center(i, j) - center).squaredNorm() <= r2) mask.set(i, j);
  return mask;
}

namespace {

// Union-find over provisional labels.
struct Dsu {
  std::vector<std::uint32_t> parent;
  std::uint32_t make() {
    parent.push_back(static_cast<std::uint32_t>(parent.size()));
    return parent.back();
  }
  std::uint32_t find(std::uint32_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::uint32_t a, std::uint32_t b) {
    a = find(a);
    b = find(b);
    if (a < b) parent[b] = a;
    else if (b < a) parent[a] = b;
  }
};

// Freeman directions, counterclockwise when rows are drawn top-down:
// 0 = +column, 2 = previous row.
constexpr std::array<std::array<int, 2>, 8> kDirs{{
    {1, 0}, {1, -1}, {0, -1}, {-1, -1}, {-1, 0}, {-1, 1}, {0, 1}, {1, 1}}};

}  // namespace

double chain_code_perimeter(const RasterMask& mask, std::span<const std::size_t> pixels) {
  if (pixels.empty()) throw ValidationError("component is empty");
  if (pixels.size() == 1) return 4.0;
  const int w = mask.grid.width, h = mask.grid.height;
  std::vector<std::uint8_t> own(mask.bits.size(), 0);
  for (std::size_t p : pixels) own[p] = 1;
  const auto is_set = [&](int x, int y) {
    return x >= 0 && y >= 0 && x < w && y < h && own[static_cast<std::size_t>(y) * w + x];
  };

  // Start at the first pixel in row-major order: its left and upper
  // (row - 1) neighbours are background.
  const std::size_t start = *std::min_element(pixels.begin(), pixels.end());
  const int sx = static_cast<int>(start % w), sy = static_cast<int>(start / w);

  int x = sx, y = sy, dir = 7;
  std::vector<int> moves;
  std::array<int, 2> first_step{-1, -1};
  for (std::size_t guard = 0; guard < 8 * pixels.size() + 16; ++guard) {
    const int search = (dir % 2 == 0) ? (dir + 7) % 8 : (dir + 6) % 8;
    int found = -1;
    for (int k = 0; k < 8; ++k) {
      const int d = (search + k) % 8;
      if (is_set(x + kDirs[d][0], y + kDirs[d][1])) {
        found = d;
        break;
      }
    }
    if (found < 0) break;  // isolated pixel, handled above
    const int px = x, py = y;
    x += kDirs[found][0];
    y += kDirs[found][1];
    dir = found;
    moves.push_back(found);
    if (moves.size() == 1) first_step = {x, y};
    // Stop once the first move repeats: back at start, about to leave along it.
    if (moves.size() >= 3 && px == sx && py == sy && x == first_step[0] && y == first_step[1]) {
      moves.pop_back();
      break;
    }
  }
  double len = 0.0;
  for (int d : moves) len += (d % 2 == 0) ? 1.0 : std::numbers::sqrt2;
  return len;
}

std::vector<Component> connected_components(const RasterMask& mask) {
  const int w = mask.grid.width, h = mask.grid.height;
  constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();
  std::vector<std::uint32_t> label(mask.bits.size(), kNone);
  Dsu dsu;

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t idx = mask.index(x, y);
      if (!mask.bits[idx]) continue;
      std::uint32_t l = kNone;
      // Already-visited 8-neighbours: W, and the three in the previous row.
      const int nb[4][2] = {{x - 1, y}, {x - 1, y - 1}, {x, y - 1}, {x + 1, y - 1}};
      for (const auto& n : nb) {
        if (n[0] < 0 || n[1] < 0 || n[0] >= w) continue;
        const std::uint32_t ln = label[mask.index(n[0], n[1])];
        if (ln == kNone) continue;
        if (l == kNone) l = ln;
        else dsu.unite(l, ln);
      }
      label[idx] = (l == kNone) ? dsu.make() : l;
    }
  }

  std::vector<std::uint32_t> root_to_comp(dsu.parent.size(), kNone);
  std::vector<Component> comps;
  for (std::size_t idx = 0; idx < label.size(); ++idx) {
    if (label[idx] == kNone) continue;
    const std::uint32_t r = dsu.find(label[idx]);
    if (root_to_comp[r] == kNone) {
      root_to_comp[r] = static_cast<std::uint32_t>(comps.size());
      comps.emplace_back();
    }
    comps[root_to_comp[r]].pixels.push_back(idx);
  }

  for (auto& c : comps) {
    c.area_px = c.pixels.size();
    Point2 sum = Point2::Zero();
    for (std::size_t p : c.pixels)
      sum += mask.grid.pixel_center(static_cast<int>(p % w), static_cast<int>(p / w));
    c.centroid_mm = sum / static_cast<double>(c.area_px);
    c.perimeter_px = chain_code_perimeter(mask, c.pixels);
    c.circularity = circularity(c);
  }
  return comps;
}

double circularity(double area, double perimeter) {
  if (!(perimeter > 0)) throw ValidationError("circularity needs a positive perimeter");
  const double r = perimeter / (2.0 * std::numbers::pi) + 0.5;
  const double corr = 1.0 - 0.5 / r;
  return (4.0 * std::numbers::pi * area / (perimeter * perimeter)) * corr * corr;
}

double circularity(const Component& c) {
  return circularity(static_cast<double>(c.area_px), c.perimeter_px);
}

TumorPick isolate_tumor(const RasterMask& mask, double min_circularity) {
  const auto comps = connected_components(mask);
  if (comps.empty()) throw NotFoundError("mask has no components");
  const Component* best = nullptr;
  for (const auto& c : comps)
    if (c.circularity >= min_circularity && (!best || c.area_px > best->area_px)) best = &c;
  if (best) return {*best, false};
  for (const auto& c : comps)
    if (!best || c.area_px > best->area_px) best = &c;
  return {*best, true};
}

RasterMask component_mask(const GridSpec& grid, const Component& c) {
  RasterMask m(grid);
  for (std::size_t p : c.pixels) m.bits[p] = 1;
  return m;
}

RasterMask filled_region(const GridSpec& grid, const Component& c) {
  const RasterMask own = component_mask(grid, c);
  const int w = grid.width, h = grid.height;
  // Background reachable from the border through 4-connected steps.
  std::vector<std::uint8_t> outside(own.bits.size(), 0);
  std::vector<std::size_t> stack;
  const auto push = [&](int x, int y) {
    const std::size_t i = own.index(x, y);
    if (!own.bits[i] && !outside[i]) {
      outside[i] = 1;
      stack.push_back(i);
    }
  };
  for (int x = 0; x < w; ++x) {
    push(x, 0);
    push(x, h - 1);
  }
  for (int y = 0; y < h; ++y) {
    push(0, y);
    push(w - 1, y);
  }
  while (!stack.empty()) {
    const std::size_t i = stack.back();
    stack.pop_back();
    const int x = static_cast<int>(i % w), y = static_cast<int>(i / w);
    if (x > 0) push(x - 1, y);
    if (x + 1 < w) push(x + 1, y);
    if (y > 0) push(x, y - 1);
    if (y + 1 < h) push(x, y + 1);
  }
  RasterMask filled(grid);
  for (std::size_t i = 0; i < filled.bits.size(); ++i) filled.bits[i] = outside[i] ? 0 : 1;
  return filled;
}

Component isolate_seed(const RasterMask& mask, const Component& tumor) {
  const GridSpec& g = mask.grid;
  const RasterMask filled = filled_region(g, tumor);
  const Component* best = nullptr;
  const auto comps = connected_components(mask);
  for (const auto& c : comps) {
    if (!tumor.pixels.empty() && !c.pixels.empty() && c.pixels.front() == tumor.pixels.front())
      continue;
    const Point2 rel = (c.centroid_mm - g.origin_mm) / g.resolution_mm;
    const int i = static_cast<int>(std::floor(rel.x()));
    const int j = static_cast<int>(std::floor(rel.y()));
    if (i < 0 || j < 0 || i >= g.width || j >= g.height || !filled.at(i, j)) continue;
    if (!best || c.area_px > best->area_px) best = &c;
  }
  if (!best) throw NotFoundError("no seed component inside the tumor region");
  return *best;
}

double dice(const RasterMask& a, const RasterMask& b) {
  if (!(a.grid == b.grid)) throw GridMismatchError("dice needs masks on the same grid");
  const auto c = kernels::overlap_parallel(a.bits, b.bits);
  if (c.a + c.b == 0) return 1.0;
  return 2.0 * static_cast<double>(c.both) / static_cast<double>(c.a + c.b);
}

double area_ratio(const RasterMask& ds, const RasterMask& gt) {
  if (!(ds.grid == gt.grid)) throw GridMismatchError("area ratio needs masks on the same grid");
  const std::size_t g = gt.count();
  if (g == 0) throw ValidationError("ground-truth mask is empty");
  return static_cast<double>(ds.count()) / static_cast<double>(g);
}

double intercentroid(const Component& ds_seed, const Component& gt_seed) {
  return (ds_seed.centroid_mm - gt_seed.centroid_mm).norm();
}

VoxelMask dilate_ball(const VoxelMask& m, int radius_vox) {
  m.validate();
  if (radius_vox < 0) throw ValidationError("dilation radius must be >= 0");
  return kernels::dilate_parallel(m, radius_vox);
}

double crr(const VoxelMask& trv, const VoxelMask& tumor, double margin_mm) {
  if (trv.dims != tumor.dims || trv.voxel_size_mm != tumor.voxel_size_mm)
    throw GridMismatchError("resection and tumor volumes must share a voxel grid");
  if (tumor.count() == 0) throw ValidationError("tumor volume is empty");
  const int r = static_cast<int>(std::lround(margin_mm / tumor.voxel_size_mm));
  const VoxelMask orv = dilate_ball(tumor, r);
  return static_cast<double>(trv.count()) / static_cast<double>(orv.count());
}

VoxelMask voxel_ball(std::array<int, 3> dims, double voxel_mm, const Point3& center_mm,
                     double radius_mm) {
  VoxelMask m(dims, voxel_mm);
  const double r2 = radius_mm * radius_mm;
  for (int z = 0; z < dims[2]; ++z)
    for (int y = 0; y < dims[1]; ++y)
      for (int x = 0; x < dims[0]; ++x) {
        const Point3 c((x + 0.5) * voxel_mm, (y + 0.5) * voxel_mm, (z + 0.5) * voxel_mm);
        if ((c - center_mm).squaredNorm() <= r2) m.bits[m.index(x, y, z)] = 1;
      }
  return m;
}

double quantile_linear(std::vector<double> values, double p) {
  if (values.empty()) throw ValidationError("quantile of an empty list");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

IqrResult iqr_filter(std::span<const double> values) {
  if (values.size() < 4) throw ValidationError("IQR filter needs at least 4 values");
  IqrResult r;
  const std::vector<double> v(values.begin(), values.end());
  r.q1 = quantile_linear(v, 0.25);
  r.q3 = quantile_linear(v, 0.75);
  const double iqr = r.q3 - r.q1;
  r.lower = r.q1 - 1.5 * iqr;
  r.upper = r.q3 + 1.5 * iqr;
  for (double x : values) {
    const bool out = x < r.lower || x > r.upper;
    r.is_outlier.push_back(out);
    (out ? r.removed : r.kept).push_back(x);
  }
  return r;
}

namespace {

std::string fmt_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string metrics_csv(std::span<const MetricsRow> rows) {
  std::string out = "session_id,trial_id,model,dice,area_ratio,intercentroid_mm,crr,outlier_flag\n";
  for (const auto& r : rows) {
    out += csv_cell(r.session_id) + "," + csv_cell(r.trial_id) + "," + csv_cell(r.model) + "," +
           fmt_num(r.report.dice) + "," + fmt_num(r.report.area_ratio) + "," +
           fmt_num(r.report.intercentroid_mm) + "," + (r.report.crr ? fmt_num(*r.report.crr) : "") +
           "," + csv_cell(r.outlier_flag) + "\n";
  }
  return out;
}

std::vector<std::uint8_t> encode_pgm(const RasterMask& mask) {
  const std::string header = "P5\n" + std::to_string(mask.grid.width) + " " +
                             std::to_string(mask.grid.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  // Image rows run top-down, grid rows bottom-up.
  for (int j = mask.grid.height - 1; j >= 0; --j)
    for (int i = 0; i < mask.grid.width; ++i) out.push_back(mask.at(i, j) ? 255 : 0);
  return out;
}

void write_pgm(const RasterMask& mask, const std::filesystem::path& path) {
  const auto bytes = encode_pgm(mask);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

RasterMask read_pgm(const std::filesystem::path& path, double resolution_mm, const Point2& origin_mm) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const auto next_token = [&]() {
    std::string tok;
    char c;
    while (in.get(c)) {
      if (c == '#') {
        std::string skip;
        std::getline(in, skip);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!tok.empty()) break;
        continue;
      }
      tok += c;
    }
    return tok;
  };
  if (next_token() != "P5") throw ParseError("not a binary PGM (P5) file");
  GridSpec g;
  int maxval = 0;
  try {
    g.width = std::stoi(next_token());
    g.height = std::stoi(next_token());
    maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    throw ParseError("malformed PGM header");
  }
  if (maxval <= 0 || maxval > 255) throw ParseError("only 8-bit PGM is supported");
  g.resolution_mm = resolution_mm;
  g.origin_mm = origin_mm;
  g.validate();
  std::vector<char> data(g.pixels());
  in.read(data.data(), static_cast<std::streamsize>(data.size()));
  if (in.gcount() != static_cast<std::streamsize>(data.size())) throw ParseError("truncated PGM data");
  RasterMask m(g);
  std::size_t k = 0;
  for (int j = g.height - 1; j >= 0; --j)
    for (int i = 0; i < g.width; ++i) m.set(i, j, data[k++] != 0);
  return m;
}

}  // namespace sonoloc
