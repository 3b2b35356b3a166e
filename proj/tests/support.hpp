#pragma once

#include <cmath>
#include <memory>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "infgen/generator.hpp"
#include "infgen/grid.hpp"
#include "infgen/velocity.hpp"

namespace infgen::testing {

inline std::shared_ptr<const Grid> planar(std::size_t nx, std::size_t ny, Interval x = {0, 3}, Interval y = {0, 2}) {
  return std::make_shared<const Grid>(build_grid(Geometry::planar, x, y, nx, ny));
}

inline std::shared_ptr<const Grid> spherical(std::size_t nx, std::size_t ny, Interval lon, Interval lat) {
  return std::make_shared<const Grid>(build_grid(Geometry::spherical, lon, lat, nx, ny));
}

inline FieldPtr constant_field(double u, double v, Interval t = {0, 1}) {
  return std::make_shared<AnalyticField>([u, v](double, double, double) { return Vec2(u, v); }, t, true);
}

/// Random smooth unsteady field: a few trigonometric modes with random
/// coefficients. Not divergence free, which the mass identities must not need.
inline FieldPtr random_field(std::mt19937_64& rng, Interval t = {0, 1}) {
  std::uniform_real_distribution<double> c(-2.0, 2.0);
  std::vector<double> k(12);
  for (double& x : k) x = c(rng);
  return std::make_shared<AnalyticField>(
      [k](double t, double x, double y) {
        return Vec2(k[0] + k[1] * std::sin(k[2] * x + y) + k[3] * std::cos(t * k[4] + y * k[5]),
                    k[6] + k[7] * std::cos(k[8] * y - x) + k[9] * std::sin(t * k[10] + x * k[11]));
      },
      t);
}

inline Eigen::MatrixXd dense(const SparseMatrix& m) { return Eigen::MatrixXd(m); }

inline std::vector<double> linspace(double a, double b, std::size_t n) {
  std::vector<double> t(n);
  for (std::size_t l = 0; l < n; ++l) t[l] = a + (b - a) * static_cast<double>(l) / static_cast<double>(n - 1);
  t.back() = b;
  return t;
}

/// Sorted (by real part, descending) eigenvalues of a dense matrix.
inline std::vector<std::complex<double>> dense_values(const Eigen::MatrixXd& a) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(a, false);
  std::vector<std::complex<double>> v(es.eigenvalues().data(), es.eigenvalues().data() + a.rows());
  std::sort(v.begin(), v.end(), [](auto x, auto y) {
    if (x.real() != y.real()) return x.real() > y.real();
    return x.imag() > y.imag();
  });
  return v;
}

}  // namespace infgen::testing
