#include "infgen/inflated.hpp"

#include <cmath>
#include <numbers>
#include <vector>

#include "infgen/errors.hpp"

namespace infgen {

InflatedGenerator assemble(std::span<const GeneratorMatrix> generators, double a, double h) {
  if (generators.size() < 2) throw DomainError("inflated assembly needs at least two time slices");
  if (!(a >= 0.0) || !std::isfinite(a)) throw DomainError("a must be >= 0");
  if (!(h > 0.0) || !std::isfinite(h)) throw DomainError("h must be > 0");
  const std::size_t n = generators.front().size();
  for (const auto& g : generators) {
    if (g.size() != n || g.matrix.cols() != g.matrix.rows())
      throw DomainError("time slices have mismatched sizes");
    if (g.grid != generators.front().grid) throw DomainError("time slices use different grids");
  }

  const std::size_t n_t = generators.size();
  const double coupling = (0.5 * a * a) * (1.0 / (h * h));

  InflatedGenerator out;
  out.n_t = n_t;
  out.n_boxes = n;
  out.h = h;
  out.a = a;
  out.epsilon = generators.front().epsilon;

  // Rows are written in column order directly so that each diagonal entry is
  // the single rounded sum G_ii + temporal_ll.
  const auto total = static_cast<Eigen::Index>(n_t * n);
  SparseMatrix& m = out.matrix;
  m.resize(total, total);
  Eigen::VectorXi nnz_per_row(total);
  for (std::size_t l = 0; l < n_t; ++l) {
    const int neighbours = (l > 0) + (l + 1 < n_t);
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = static_cast<Eigen::Index>(l * n + i);
      nnz_per_row[r] = static_cast<int>(generators[l].matrix.row(static_cast<Eigen::Index>(i)).nonZeros()) +
                       (a > 0.0 ? neighbours : 0) + 1;
    }
  }
  m.reserve(nnz_per_row);

  for (std::size_t l = 0; l < n_t; ++l) {
    const SparseMatrix& g = generators[l].matrix;
    const bool end = (l == 0 || l + 1 == n_t);
    const double temporal_diag = -(end ? 1.0 : 2.0) * coupling;
    const auto offset = static_cast<Eigen::Index>(l * n);
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
      const Eigen::Index row = offset + i;
      if (a > 0.0 && l > 0) m.insert(row, row - static_cast<Eigen::Index>(n)) = coupling;
      bool diagonal_done = false;
      for (SparseMatrix::InnerIterator it(g, i); it; ++it) {
        if (it.col() > i && !diagonal_done) {
          m.insert(row, row) = temporal_diag;
          diagonal_done = true;
        }
        if (it.col() == i) {
          m.insert(row, row) = it.value() + temporal_diag;
          diagonal_done = true;
        } else {
          m.insert(row, offset + it.col()) = it.value();
        }
      }
      if (!diagonal_done) m.insert(row, row) = temporal_diag;
      if (a > 0.0 && l + 1 < n_t) m.insert(row, row + static_cast<Eigen::Index>(n)) = coupling;
    }
  }
  m.makeCompressed();
  return out;
}

SparseMatrix temporal_laplacian(std::size_t n_t, double h) {
  if (n_t == 0 || !(h > 0.0)) throw DomainError("temporal Laplacian needs n_t >= 1 and h > 0");
  const double w = 1.0 / (h * h);
  std::vector<Eigen::Triplet<double>> t;
  for (std::size_t l = 0; l < n_t; ++l) {
    const int r = static_cast<int>(l);
    const int neighbours = (l > 0) + (l + 1 < n_t);
    t.emplace_back(r, r, -neighbours * w);
    if (l > 0) t.emplace_back(r, r - 1, w);
    if (l + 1 < n_t) t.emplace_back(r, r + 1, w);
  }
  SparseMatrix lap(static_cast<Eigen::Index>(n_t), static_cast<Eigen::Index>(n_t));
  lap.setFromTriplets(t.begin(), t.end());
  return lap;
}

double epsilon_heuristic(double median_speed, double median_side) {
  if (median_speed < 0.0 || median_side < 0.0) throw DomainError("heuristic inputs must be >= 0");
  return std::sqrt(0.1 * median_speed * median_side);
}

double epsilon_total(double median_speed, double median_side) {
  if (median_speed < 0.0 || median_side < 0.0) throw DomainError("heuristic inputs must be >= 0");
  return std::sqrt(1.1 * median_speed * median_side);
}

double a_heuristic(double tau, double median_speed, double median_side, double longest_extent) {
  if (!(tau > 0.0) || !(median_speed > 0.0) || !(median_side > 0.0) || !(longest_extent > 0.0))
    throw DomainError("a heuristic inputs must be > 0");
  return tau * std::sqrt(1.1 * median_speed * median_side) / longest_extent;
}

double temporal_eigenvalue(double a, double tau, int k) {
  if (k < 0) throw DomainError("temporal mode index must be >= 0");
  const double pk = std::numbers::pi * k;
  return -a * a * pk * pk / (2.0 * tau * tau);
}

double discrete_temporal_eigenvalue(double a, double h, std::size_t n_t, int k) {
  if (k < 0 || static_cast<std::size_t>(k) >= n_t) throw DomainError("temporal mode index out of range");
  const double s = std::sin(std::numbers::pi * k / (2.0 * static_cast<double>(n_t)));
  return -(2.0 * a * a / (h * h)) * s * s;
}

}  // namespace infgen
