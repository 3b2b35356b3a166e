#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "infgen/grid.hpp"

namespace infgen {

using Vec2 = Eigen::Vector2d;

enum class VelocityUnits { nondimensional, metres_per_second };

/// Time-dependent planar vector field v(t, x). In spherical runs x is
/// (longitude, latitude) in degrees and v is (eastward, northward) in m/s.
class VelocityField {
 public:
  virtual ~VelocityField() = default;

  /// Evaluates v(t, x). Throws DomainError when t lies outside time_domain()
  /// by more than round-off.
  Vec2 eval(double t, double x, double y) const;
  Vec2 eval(double t, const Vec2& p) const { return eval(t, p.x(), p.y()); }

  virtual Interval time_domain() const = 0;
  virtual VelocityUnits units() const { return VelocityUnits::nondimensional; }
  virtual bool steady() const { return false; }

 protected:
  virtual Vec2 evaluate(double t, double x, double y) const = 0;
};

using FieldPtr = std::shared_ptr<const VelocityField>;

/// Field given by a closure; used for analytic test flows.
class AnalyticField final : public VelocityField {
 public:
  using Function = std::function<Vec2(double t, double x, double y)>;
  AnalyticField(Function f, Interval time_domain, bool steady = false,
                VelocityUnits units = VelocityUnits::nondimensional);

  Interval time_domain() const override { return domain_; }
  VelocityUnits units() const override { return units_; }
  bool steady() const override { return steady_; }

 protected:
  Vec2 evaluate(double t, double x, double y) const override { return f_(t, x, y); }

 private:
  Function f_;
  Interval domain_;
  bool steady_;
  VelocityUnits units_;
};

/// Amplitude that reproduces the reported median speed of the switching
/// double gyre (14.3698 on the 75x50 box centres at 21 nodes).
inline constexpr double kDoubleGyreAmplitude = 20.0;

/// Switching double gyre on [0,3]x[0,2], t in [0,1]. The separatrix moves
/// from x=1 at t=0 to x=2 at t=1, mostly during t in [0.4, 0.6].
class SwitchingDoubleGyre final : public VelocityField {
 public:
  explicit SwitchingDoubleGyre(double amplitude = kDoubleGyreAmplitude) : amplitude_(amplitude) {}

  Interval time_domain() const override { return {0.0, 1.0}; }
  double amplitude() const { return amplitude_; }

  static double switch_profile(double t);  // r(t)
  static double alpha(double t);
  static double beta(double t);

 protected:
  Vec2 evaluate(double t, double x, double y) const override;

 private:
  double amplitude_;
};

FieldPtr switching_double_gyre(double amplitude = kDoubleGyreAmplitude);

/// Steady view of `field` frozen at time t.
FieldPtr frozen(FieldPtr field, double t);

/// Steady field equal to the trapezoidal average of v(t_l, x) over `times`.
FieldPtr time_average(FieldPtr field, std::span<const double> times);

/// Median of |v(t_l, c_i)| over all time nodes and box centres.
double median_speed(const VelocityField& field, const Grid& grid, std::span<const double> times);

/// Velocity samples on a (time, lat, lon) lattice. Space is interpolated
/// bilinearly; off-node times snap to the nearest sample.
class GriddedVelocity final : public VelocityField {
 public:
  GriddedVelocity(std::vector<double> lon, std::vector<double> lat, std::vector<double> time,
                  std::vector<double> u, std::vector<double> v,
                  VelocityUnits units = VelocityUnits::metres_per_second);

  const std::vector<double>& lon() const { return lon_; }
  const std::vector<double>& lat() const { return lat_; }
  const std::vector<double>& time() const { return time_; }
  const std::vector<double>& u() const { return u_; }
  const std::vector<double>& v() const { return v_; }

  std::size_t offset(std::size_t it, std::size_t ilat, std::size_t ilon) const {
    return (it * lat_.size() + ilat) * lon_.size() + ilon;
  }
  std::size_t nearest_time(double t) const;

  Interval time_domain() const override { return {time_.front(), time_.back()}; }
  VelocityUnits units() const override { return units_; }

 protected:
  Vec2 evaluate(double t, double x, double y) const override;

 private:
  std::vector<double> lon_;
  std::vector<double> lat_;
  std::vector<double> time_;
  std::vector<double> u_;
  std::vector<double> v_;
  VelocityUnits units_;
};

/// Reads a VGRID v1 manifest (JSON + little-endian float64 payload) or, when
/// the path ends in ".csv", the CSV fallback with columns time,lat,lon,u,v.
std::shared_ptr<GriddedVelocity> load_gridded(const std::filesystem::path& path);

/// Writes a VGRID v1 manifest and its payload next to it.
void write_gridded(const GriddedVelocity& field, const std::filesystem::path& manifest_path,
                   const std::string& payload_name = "velocity.bin");

std::string to_string(VelocityUnits units);

}  // namespace infgen
