#pragma once

// Planar shapes, distance queries, plane fitting, surface projection and
// fiducial registration. All lengths are millimeters.

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace sonoloc {

using Point2 = Eigen::Vector2d;
using Point3 = Eigen::Vector3d;

// Closed simple polygon, stored counterclockwise. The last vertex connects
// back to the first.
class Shape2D {
 public:
  // Throws ValidationError unless the ring has >= 3 finite vertices, is
  // simple and encloses positive area. Clockwise input is reversed.
  explicit Shape2D(std::vector<Point2> vertices);

  const std::vector<Point2>& vertices() const { return vertices_; }
  std::size_t size() const { return vertices_.size(); }
  double area() const;
  double perimeter() const;
  Point2 centroid() const;

 private:
  std::vector<Point2> vertices_;
};

struct Seed {
  Point2 position = Point2::Zero();
  double radius_mm = 1.5;
};

struct Scene {
  Shape2D shape;
  Seed seed;
};

struct DistanceFeatures {
  double d_margin_mm = 0.0;  // negative inside
  double d_seed_mm = 0.0;
  bool inside = false;
};

struct SurfaceMesh {
  std::vector<Point3> vertices;
  std::vector<std::array<int, 3>> triangles;

  // Throws ValidationError on out-of-range indices or zero-area triangles.
  void validate() const;
};

struct Plane {
  Point3 centroid = Point3::Zero();
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  Eigen::Vector3d basis_u = Eigen::Vector3d::UnitX();
  Eigen::Vector3d basis_v = Eigen::Vector3d::UnitY();

  Point3 embed(const Point2& p) const { return centroid + p.x() * basis_u + p.y() * basis_v; }
};

struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Point3 apply(const Point3& p) const { return rotation * p + translation; }
};

struct Registration {
  RigidTransform transform;
  double fre_mm = 0.0;  // RMS residual over the fiducial pairs
};

// Even-odd parity of p against a closed ring (any ring, simple or not).
// Points exactly on an edge may land on either side; callers that care use
// signed_distance.
bool inside_even_odd(std::span<const Point2> ring, const Point2& p);

// Distance to the nearest edge, negative inside. Boundary points return 0.
double signed_distance(const Shape2D& shape, const Point2& p);
Point2 closest_point(const Shape2D& shape, const Point2& p);

DistanceFeatures compute_features(const Scene& scene, const Point2& p);

// Least-squares plane: normal is the covariance eigenvector with the
// smallest eigenvalue, oriented so normal.z >= 0 (ties toward +x, then +y).
Plane fit_plane(std::span<const Point3> points);
std::vector<Point2> project_to_plane(std::span<const Point3> points, const Plane& plane);

// Casts a ray from every outline vertex along `direction` and keeps the
// nearest mesh hit. Throws ProjectionIncompleteError listing vertices whose
// ray missed.
std::vector<Point3> project_to_surface(std::span<const Point3> outline, const SurfaceMesh& surface,
                                       const Eigen::Vector3d& direction);
std::vector<Point3> project_tumor_to_surface(const Shape2D& outline, double depth_mm,
                                             const SurfaceMesh& surface,
                                             const Eigen::Vector3d& direction);

// Point-based rigid registration (SVD, reflection corrected) mapping src
// onto dst.
Registration rigid_register(std::span<const Point3> src, std::span<const Point3> dst);

// Regular n-gon approximation of an axis-aligned ellipse centered at `center`.
std::vector<Point2> ellipse_ring(double semi_x, double semi_y, std::size_t n,
                                 const Point2& center = Point2::Zero());

}  // namespace sonoloc
