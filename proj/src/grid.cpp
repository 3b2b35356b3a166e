#include "infgen/grid.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "infgen/errors.hpp"

namespace infgen {

namespace {

double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }

void check_range(const Interval& r, const char* name) {
  if (!std::isfinite(r.lo) || !std::isfinite(r.hi) || !(r.hi > r.lo))
    throw DomainError(std::string("empty or inverted range for ") + name);
}

}  // namespace

Grid::Grid(Geometry geometry, Interval x_range, Interval y_range, std::size_t nx, std::size_t ny,
           double earth_radius)
    : geometry_(geometry),
      x_range_(x_range),
      y_range_(y_range),
      nx_(nx),
      ny_(ny),
      earth_radius_(earth_radius) {
  if (nx == 0 || ny == 0) throw DomainError("grid needs at least one box per axis");
  check_range(x_range, "x");
  check_range(y_range, "y");
  if (geometry == Geometry::spherical) {
    if (y_range.lo < -90.0 || y_range.hi > 90.0)
      throw DomainError("latitude range must lie within [-90, 90]");
    if (!(earth_radius > 0.0)) throw DomainError("earth radius must be positive");
  }

  const double hx = dx();
  const double hy = dy();
  const double per_unit = length_per_unit();

  boxes_.reserve(nx * ny);
  for (std::size_t iy = 0; iy < ny; ++iy) {
    for (std::size_t ix = 0; ix < nx; ++ix) {
      Box b;
      b.cx = x_range.lo + (static_cast<double>(ix) + 0.5) * hx;
      b.cy = y_range.lo + (static_cast<double>(iy) + 0.5) * hy;
      if (geometry == Geometry::planar) {
        b.len_x = hx;
        b.len_y = hy;
      } else {
        b.len_x = per_unit * hx * std::cos(deg2rad(b.cy));
        b.len_y = per_unit * hy;
      }
      b.area = b.len_x * b.len_y;
      boxes_.push_back(b);
    }
  }
  uniform_ = std::all_of(boxes_.begin(), boxes_.end(),
                         [&](const Box& b) { return b.area == boxes_.front().area; });

  // Faces in a fixed order per box: west, east, south, north.
  face_offsets_.reserve(size() + 1);
  face_offsets_.push_back(0);
  for (std::size_t iy = 0; iy < ny; ++iy) {
    for (std::size_t ix = 0; ix < nx; ++ix) {
      const std::size_t i = index(ix, iy);
      const double x0 = x_range.lo + static_cast<double>(ix) * hx;
      const double y0 = y_range.lo + static_cast<double>(iy) * hy;
      const double meridian_scale = per_unit;

      auto vertical = [&](std::size_t j, int sign, double xpos) {
        Face f;
        f.from = i;
        f.to = j;
        f.normal_axis = Axis::x;
        f.normal_sign = sign;
        f.position = xpos;
        f.span = {y0, y0 + hy};
        f.scale = meridian_scale;
        f.measure = f.scale * hy;
        faces_.push_back(f);
      };
      auto horizontal = [&](std::size_t j, int sign, double ypos) {
        Face f;
        f.from = i;
        f.to = j;
        f.normal_axis = Axis::y;
        f.normal_sign = sign;
        f.position = ypos;
        f.span = {x0, x0 + hx};
        f.scale = geometry == Geometry::planar ? 1.0 : per_unit * std::cos(deg2rad(ypos));
        f.measure = f.scale * hx;
        faces_.push_back(f);
      };

      if (ix > 0) vertical(index(ix - 1, iy), -1, x0);
      if (ix + 1 < nx) vertical(index(ix + 1, iy), +1, x0 + hx);
      if (iy > 0) horizontal(index(ix, iy - 1), -1, y0);
      if (iy + 1 < ny) horizontal(index(ix, iy + 1), +1, y0 + hy);
      face_offsets_.push_back(faces_.size());
    }
  }
}

std::span<const Face> Grid::faces_of(std::size_t i) const {
  return std::span<const Face>(faces_).subspan(face_offsets_[i],
                                               face_offsets_[i + 1] - face_offsets_[i]);
}

Eigen::VectorXd Grid::areas() const {
  Eigen::VectorXd m(static_cast<Eigen::Index>(size()));
  for (std::size_t i = 0; i < size(); ++i) m[static_cast<Eigen::Index>(i)] = boxes_[i].area;
  return m;
}

double Grid::domain_area() const {
  if (geometry_ == Geometry::planar) return x_range_.width() * y_range_.width();
  const double r = earth_radius_;
  return r * r * deg2rad(x_range_.width()) *
         (std::sin(deg2rad(y_range_.hi)) - std::sin(deg2rad(y_range_.lo)));
}

std::size_t Grid::locate(double x, double y) const {
  auto cell = [](double v, const Interval& r, std::size_t n) {
    const double s = (v - r.lo) / r.width() * static_cast<double>(n);
    if (!(s > 0.0)) return std::size_t{0};
    return std::min(static_cast<std::size_t>(s), n - 1);
  };
  return index(cell(x, x_range_, nx_), cell(y, y_range_, ny_));
}

double Grid::length_per_unit() const {
  return geometry_ == Geometry::planar ? 1.0 : earth_radius_ * std::numbers::pi / 180.0;
}

Grid build_grid(Geometry geometry, Interval x_range, Interval y_range, std::size_t nx,
                std::size_t ny, double earth_radius) {
  return Grid(geometry, x_range, y_range, nx, ny, earth_radius);
}

double median(std::vector<double> values) {
  if (values.empty()) throw DomainError("median of an empty sample");
  const std::size_t n = values.size();
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(values.begin(), mid, values.end());
  const double upper = *mid;
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), mid);
  return 0.5 * (lower + upper);
}

double median_side_length(const Grid& grid) {
  std::vector<double> sides;
  sides.reserve(2 * grid.size());
  for (const Box& b : grid.boxes()) {
    sides.push_back(b.len_x);
    sides.push_back(b.len_y);
  }
  return median(std::move(sides));
}

double longest_domain_extent(const Grid& grid) {
  if (grid.geometry() == Geometry::planar)
    return std::max(grid.x_range().width(), grid.y_range().width());
  const double per_degree = grid.length_per_unit();
  const Interval& lat = grid.y_range();
  // cos(latitude) peaks at the latitude closest to the equator.
  const double closest = (lat.lo <= 0.0 && lat.hi >= 0.0)
                             ? 0.0
                             : std::min(std::abs(lat.lo), std::abs(lat.hi));
  const double lon_extent = per_degree * grid.x_range().width() * std::cos(deg2rad(closest));
  const double lat_extent = per_degree * lat.width();
  return std::max(lon_extent, lat_extent);
}

}  // namespace infgen
