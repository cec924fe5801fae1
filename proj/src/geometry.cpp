#include "sonoloc/geometry.hpp"

#include "sonoloc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace sonoloc {

ProjectionIncompleteError::ProjectionIncompleteError(std::vector<std::size_t> missing)
    : Error([&] {
        std::string msg = "projection incomplete: rays missed the surface for vertices";
        for (std::size_t i : missing) msg += " " + std::to_string(i);
        return msg;
      }()),
      missing_(std::move(missing)) {}

ParseError::ParseError(const std::string& what, std::size_t line)
    : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

namespace {

double cross(const Point2& a, const Point2& b) { return a.x() * b.y() - a.y() * b.x(); }

double signed_area(const std::vector<Point2>& v) {
  double twice = 0.0;
  for (std::size_t i = 0, n = v.size(); i < n; ++i) twice += cross(v[i], v[(i + 1) % n]);
  return 0.5 * twice;
}

int orientation(const Point2& a, const Point2& b, const Point2& c) {
  const double o = cross(b - a, c - a);
  return (o > 0) - (o < 0);
}

bool on_segment(const Point2& a, const Point2& b, const Point2& p) {
  return std::min(a.x(), b.x()) <= p.x() && p.x() <= std::max(a.x(), b.x()) &&
         std::min(a.y(), b.y()) <= p.y() && p.y() <= std::max(a.y(), b.y());
}

bool segments_touch(const Point2& a, const Point2& b, const Point2& c, const Point2& d) {
  const int o1 = orientation(a, b, c), o2 = orientation(a, b, d);
  const int o3 = orientation(c, d, a), o4 = orientation(c, d, b);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(a, b, c)) return true;
  if (o2 == 0 && on_segment(a, b, d)) return true;
  if (o3 == 0 && on_segment(c, d, a)) return true;
  if (o4 == 0 && on_segment(c, d, b)) return true;
  return false;
}

// Closest point on segment [a,b] to p.
Point2 segment_closest(const Point2& a, const Point2& b, const Point2& p) {
  const Point2 ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 == 0.0) return a;
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return a + t * ab;
}

}  // namespace

Shape2D::Shape2D(std::vector<Point2> vertices) : vertices_(std::move(vertices)) {
  const std::size_t n = vertices_.size();
  if (n < 3) throw ValidationError("shape needs at least 3 vertices, got " + std::to_string(n));
  for (const auto& v : vertices_) {
    if (!v.allFinite()) throw ValidationError("shape vertex is not finite");
  }
  const double a = signed_area(vertices_);
  if (!(std::abs(a) > 0.0)) throw ValidationError("shape has zero area");
  if (a < 0) std::reverse(vertices_.begin(), vertices_.end());

  for (std::size_t i = 0; i < n; ++i) {
    const Point2& a0 = vertices_[i];
    const Point2& a1 = vertices_[(i + 1) % n];
    if (a0 == a1) throw ValidationError("shape has repeated vertex " + std::to_string(i));
    for (std::size_t j = i + 1; j < n; ++j) {
      const Point2& b0 = vertices_[j];
      const Point2& b1 = vertices_[(j + 1) % n];
      const bool adjacent = (j == i + 1) || (i == 0 && j == n - 1);
      if (adjacent) {
        // Neighbours share exactly one vertex; they may not fold back onto each other.
        const Point2& shared = (j == i + 1) ? a1 : a0;
        const Point2& p = (j == i + 1) ? a0 : a1;
        const Point2& q = (j == i + 1) ? b1 : b0;
        if (orientation(p, shared, q) == 0 && (p - shared).dot(q - shared) > 0) {
          throw ValidationError("shape edges " + std::to_string(i) + " and " + std::to_string(j) +
                                " overlap");
        }
        continue;
      }
      if (segments_touch(a0, a1, b0, b1)) {
        throw ValidationError("shape is not simple: edges " + std::to_string(i) + " and " +
                              std::to_string(j) + " intersect");
      }
    }
  }
}

double Shape2D::area() const { return signed_area(vertices_); }

double Shape2D::perimeter() const {
  double p = 0.0;
  for (std::size_t i = 0, n = vertices_.size(); i < n; ++i)
    p += (vertices_[(i + 1) % n] - vertices_[i]).norm();
  return p;
}

Point2 Shape2D::centroid() const {
  Point2 c = Point2::Zero();
  double twice = 0.0;
  for (std::size_t i = 0, n = vertices_.size(); i < n; ++i) {
    const Point2& a = vertices_[i];
    const Point2& b = vertices_[(i + 1) % n];
    const double w = cross(a, b);
    twice += w;
    c += (a + b) * w;
  }
  return c / (3.0 * twice);
}

void SurfaceMesh::validate() const {
  const int nv = static_cast<int>(vertices.size());
  for (std::size_t t = 0; t < triangles.size(); ++t) {
    for (int idx : triangles[t]) {
      if (idx < 0 || idx >= nv)
        throw ValidationError("triangle " + std::to_string(t) + " index out of range");
    }
    const auto& tri = triangles[t];
    const Eigen::Vector3d n =
        (vertices[tri[1]] - vertices[tri[0]]).cross(vertices[tri[2]] - vertices[tri[0]]);
    if (!(n.norm() > 0.0)) throw ValidationError("triangle " + std::to_string(t) + " is degenerate");
  }
}

bool inside_even_odd(std::span<const Point2> ring, const Point2& p) {
  bool inside = false;
  const std::size_t n = ring.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Point2& a = ring[i];
    const Point2& b = ring[j];
    if ((a.y() > p.y()) != (b.y() > p.y())) {
      const double x = a.x() + (p.y() - a.y()) * (b.x() - a.x()) / (b.y() - a.y());
      if (p.x() < x) inside = !inside;
    }
  }
  return inside;
}

namespace {

struct Nearest {
  Point2 point;
  double dist2;
};

Nearest nearest_on_boundary(const Shape2D& shape, const Point2& p) {
  const auto& v = shape.vertices();
  Nearest best{v.front(), std::numeric_limits<double>::infinity()};
  for (std::size_t i = 0, n = v.size(); i < n; ++i) {
    const Point2 c = segment_closest(v[i], v[(i + 1) % n], p);
    const double d2 = (c - p).squaredNorm();
    if (d2 < best.dist2) best = {c, d2};
  }
  return best;
}

}  // namespace

double signed_distance(const Shape2D& shape, const Point2& p) {
  const double d = std::sqrt(nearest_on_boundary(shape, p).dist2);
  if (d == 0.0) return 0.0;
  return inside_even_odd(shape.vertices(), p) ? -d : d;
}

Point2 closest_point(const Shape2D& shape, const Point2& p) {
  return nearest_on_boundary(shape, p).point;
}

DistanceFeatures compute_features(const Scene& scene, const Point2& p) {
  DistanceFeatures f;
  f.d_margin_mm = signed_distance(scene.shape, p);
  f.d_seed_mm = (p - scene.seed.position).norm();
  f.inside = f.d_margin_mm <= 0.0;
  return f;
}

Plane fit_plane(std::span<const Point3> points) {
  if (points.size() < 3) throw DegenerateGeometryError("plane fit needs at least 3 points");
  Point3 centroid = Point3::Zero();
  for (const auto& p : points) centroid += p;
  centroid /= static_cast<double>(points.size());

  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : points) {
    const Eigen::Vector3d d = p - centroid;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(points.size());

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  if (eig.info() != Eigen::Success) throw DegenerateGeometryError("plane fit eigensolver failed");
  const Eigen::Vector3d values = eig.eigenvalues();  // ascending
  // Collinear (or coincident) input has two vanishing eigenvalues.
  if (!(values(1) > 1e-12 * std::max(values(2), std::numeric_limits<double>::min()))) {
    throw DegenerateGeometryError("plane fit input is collinear or coincident");
  }

  Eigen::Vector3d n = eig.eigenvectors().col(0).normalized();
  const auto sign_of = [](double x) { return (x > 0) - (x < 0); };
  int s = sign_of(n.z());
  if (s == 0) s = sign_of(n.x());
  if (s == 0) s = sign_of(n.y());
  if (s < 0) n = -n;

  Plane plane;
  plane.centroid = centroid;
  plane.normal = n;
  Eigen::Vector3d seed_axis = Eigen::Vector3d::UnitX();
  if (std::abs(n.dot(seed_axis)) > 0.9) seed_axis = Eigen::Vector3d::UnitY();
  plane.basis_u = (seed_axis - seed_axis.dot(n) * n).normalized();
  plane.basis_v = n.cross(plane.basis_u);
  return plane;
}

std::vector<Point2> project_to_plane(std::span<const Point3> points, const Plane& plane) {
  std::vector<Point2> out;
  out.reserve(points.size());
  for (const auto& p : points) {
    const Eigen::Vector3d d = p - plane.centroid;
    out.emplace_back(d.dot(plane.basis_u), d.dot(plane.basis_v));
  }
  return out;
}

namespace {

// Möller–Trumbore; returns ray parameter t >= 0 or a negative value on miss.
double ray_triangle(const Point3& origin, const Eigen::Vector3d& dir, const Point3& a,
                    const Point3& b, const Point3& c) {
  constexpr double kEps = 1e-12;
  const Eigen::Vector3d e1 = b - a, e2 = c - a;
  const Eigen::Vector3d h = dir.cross(e2);
  const double det = e1.dot(h);
  if (std::abs(det) < kEps) return -1.0;
  const double inv = 1.0 / det;
  const Eigen::Vector3d s = origin - a;
  const double u = inv * s.dot(h);
  if (u < -1e-12 || u > 1.0 + 1e-12) return -1.0;
  const Eigen::Vector3d q = s.cross(e1);
  const double v = inv * dir.dot(q);
  if (v < -1e-12 || u + v > 1.0 + 1e-12) return -1.0;
  const double t = inv * e2.dot(q);
  return t >= 0.0 ? t : -1.0;
}

}  // namespace

std::vector<Point3> project_to_surface(std::span<const Point3> outline, const SurfaceMesh& surface,
                                       const Eigen::Vector3d& direction) {
  surface.validate();
  if (!(direction.norm() > 0.0)) throw ValidationError("projection direction is zero");
  const Eigen::Vector3d dir = direction.normalized();

  std::vector<Point3> out(outline.size());
  std::vector<std::size_t> missing;
  for (std::size_t i = 0; i < outline.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& tri : surface.triangles) {
      const double t = ray_triangle(outline[i], dir, surface.vertices[tri[0]],
                                    surface.vertices[tri[1]], surface.vertices[tri[2]]);
      if (t >= 0.0 && t < best) best = t;
    }
    if (std::isinf(best)) {
      missing.push_back(i);
    } else {
      out[i] = outline[i] + best * dir;
    }
  }
  if (!missing.empty()) throw ProjectionIncompleteError(std::move(missing));
  return out;
}

std::vector<Point3> project_tumor_to_surface(const Shape2D& outline, double depth_mm,
                                             const SurfaceMesh& surface,
                                             const Eigen::Vector3d& direction) {
  std::vector<Point3> lifted;
  lifted.reserve(outline.size());
  for (const auto& v : outline.vertices()) lifted.emplace_back(v.x(), v.y(), depth_mm);
  return project_to_surface(lifted, surface, direction);
}

Registration rigid_register(std::span<const Point3> src, std::span<const Point3> dst) {
  if (src.size() != dst.size())
    throw ValidationError("registration needs equal point counts");
  if (src.size() < 3) throw DegenerateGeometryError("registration needs at least 3 point pairs");

  const double n = static_cast<double>(src.size());
  Point3 cs = Point3::Zero(), cd = Point3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    cs += src[i];
    cd += dst[i];
  }
  cs /= n;
  cd /= n;

  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d spread = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Eigen::Vector3d a = src[i] - cs;
    h += a * (dst[i] - cd).transpose();
    spread += a * a.transpose();
  }

  Eigen::JacobiSVD<Eigen::Matrix3d> spread_svd(spread);
  const Eigen::Vector3d sv = spread_svd.singularValues();
  if (!(sv(1) > 1e-12 * std::max(sv(0), std::numeric_limits<double>::min())))
    throw DegenerateGeometryError("registration points are collinear or coincident");

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Matrix3d u = svd.matrixU();
  const Eigen::Matrix3d v = svd.matrixV();
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  if ((v * u.transpose()).determinant() < 0) d(2, 2) = -1.0;

  Registration reg;
  reg.transform.rotation = v * d * u.transpose();
  reg.transform.translation = cd - reg.transform.rotation * cs;

  double sq = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i)
    sq += (reg.transform.apply(src[i]) - dst[i]).squaredNorm();
  reg.fre_mm = std::sqrt(sq / n);
  return reg;
}

std::vector<Point2> ellipse_ring(double semi_x, double semi_y, std::size_t n, const Point2& center) {
  std::vector<Point2> ring;
  ring.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double th = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
    ring.emplace_back(center.x() + semi_x * std::cos(th), center.y() + semi_y * std::sin(th));
  }
  return ring;
}

}  // namespace sonoloc
