#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace infgen {

enum class Geometry { planar, spherical };

enum class Axis { x, y };

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double width() const { return hi - lo; }
};

inline constexpr double kEarthRadius = 6371000.0;

/// One cell of the discretisation. In spherical mode `cx`/`cy` are degrees
/// longitude/latitude while the side lengths and area are in metres.
struct Box {
  double cx = 0.0;
  double cy = 0.0;
  double len_x = 0.0;  // l_lon in spherical mode
  double len_y = 0.0;  // l_lat in spherical mode
  double area = 0.0;
};

/// A face shared by two boxes, seen from `from`. The outward normal of `from`
/// is `normal_sign` times the unit vector of `normal_axis`. The face lies on
/// the line `normal_axis == position` and spans [span.lo, span.hi] in the
/// other coordinate (domain units). `measure` is its length in metres
/// (spherical) or domain units (planar); `scale` converts d(coordinate) to
/// d(length) along the face.
struct Face {
  std::size_t from = 0;
  std::size_t to = 0;
  double measure = 0.0;
  Axis normal_axis = Axis::x;
  int normal_sign = 1;
  double position = 0.0;
  Interval span;
  double scale = 1.0;
};

/// Box discretisation of a rectangle. Boxes are ordered row-major with x
/// (longitude) fastest: index = iy * nx + ix. Immutable after construction.
class Grid {
 public:
  Grid(Geometry geometry, Interval x_range, Interval y_range, std::size_t nx, std::size_t ny,
       double earth_radius = kEarthRadius);

  Geometry geometry() const { return geometry_; }
  const Interval& x_range() const { return x_range_; }
  const Interval& y_range() const { return y_range_; }
  std::size_t nx() const { return nx_; }
  std::size_t ny() const { return ny_; }
  std::size_t size() const { return boxes_.size(); }
  double earth_radius() const { return earth_radius_; }

  /// Box spacing in domain units (degrees in spherical mode).
  double dx() const { return x_range_.width() / static_cast<double>(nx_); }
  double dy() const { return y_range_.width() / static_cast<double>(ny_); }

  std::size_t index(std::size_t ix, std::size_t iy) const { return iy * nx_ + ix; }
  const Box& box(std::size_t i) const { return boxes_[i]; }
  std::span<const Box> boxes() const { return boxes_; }

  /// All directed faces, grouped by `from` box.
  std::span<const Face> faces() const { return faces_; }
  std::span<const Face> faces_of(std::size_t i) const;

  Eigen::VectorXd areas() const;

  /// True when every box has the same area (planar grids).
  bool uniform() const { return uniform_; }

  /// Geometric area of the whole domain. Spherical mode uses the exact
  /// spherical-zone area, so box areas (centre-latitude products) only tile it
  /// up to the midpoint-rule error of the latitude integral.
  double domain_area() const;

  /// Index of the box containing the point, clamped to the domain.
  std::size_t locate(double x, double y) const;

  /// Metres per degree of arc; 1 in planar mode.
  double length_per_unit() const;

 private:
  Geometry geometry_;
  Interval x_range_;
  Interval y_range_;
  std::size_t nx_;
  std::size_t ny_;
  double earth_radius_;
  bool uniform_ = true;
  std::vector<Box> boxes_;
  std::vector<Face> faces_;
  std::vector<std::size_t> face_offsets_;
};

Grid build_grid(Geometry geometry, Interval x_range, Interval y_range, std::size_t nx,
                std::size_t ny, double earth_radius = kEarthRadius);

/// Median over both side lengths of every box.
double median_side_length(const Grid& grid);

/// Longest side of the domain, in metres for spherical grids.
double longest_domain_extent(const Grid& grid);

/// Median of a sample; the mean of the central pair for even counts.
double median(std::vector<double> values);

}  // namespace infgen
