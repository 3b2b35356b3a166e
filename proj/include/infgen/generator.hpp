#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string>

#include <Eigen/SparseCore>

#include "infgen/grid.hpp"
#include "infgen/quadrature.hpp"
#include "infgen/velocity.hpp"

namespace infgen {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Ulam rate matrix of one frozen-time slice. Entry (i, j) is the rate of
/// transfer from box i into box j, so a row vector of box densities g evolves
/// as dg/dt = g G.
struct GeneratorMatrix {
  SparseMatrix matrix;
  std::string label;
  double epsilon = 0.0;
  std::shared_ptr<const Grid> grid;

  std::size_t size() const { return static_cast<std::size_t>(matrix.rows()); }
};

/// Assembles the upwind finite-volume generator at time t:
///   G_ij = (1/m(B_j)) * int_{B_i cap B_j} max(v.n_ij, 0) dm_1 + eps^2 / (2 l_i^2),
/// with l_i the side of box i along n_ij, and the diagonal chosen so that
/// sum_j m(B_j) G_ij = 0 (plain zero row sums on uniform grids). Boundary
/// faces carry no flux.
GeneratorMatrix ulam_generator(std::shared_ptr<const Grid> grid, const VelocityField& field,
                               double t, double epsilon, const QuadratureOptions& quadrature = {});

/// Generator of the trapezoidal time average of the velocity over `times`.
GeneratorMatrix averaged_generator(std::shared_ptr<const Grid> grid, FieldPtr field,
                                   std::span<const double> times, double epsilon,
                                   const QuadratureOptions& quadrature = {});

/// Coordinate dump: header "N nnz" then one "row col value" line per stored
/// entry, 0-based indices, values printed with 17 significant digits.
void write_coordinate(const SparseMatrix& matrix, const std::filesystem::path& path);
SparseMatrix read_coordinate(const std::filesystem::path& path);

}  // namespace infgen
