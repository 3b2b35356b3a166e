#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "infgen/generator.hpp"

namespace infgen {

/// Spacetime operator G_a = blockdiag(G^{t_0}, ..., G^{t_T}) + (a^2/2) (L_T kron I_N),
/// where L_T is the Neumann second-difference matrix on the time nodes. Box i
/// of time fibre l has spacetime index l*N + i.
struct InflatedGenerator {
  SparseMatrix matrix;
  std::size_t n_t = 0;
  std::size_t n_boxes = 0;
  double h = 0.0;
  double a = 0.0;
  double epsilon = 0.0;
  std::string time_units = "model";

  std::size_t index(std::size_t fibre, std::size_t box) const { return fibre * n_boxes + box; }
  std::size_t size() const { return n_t * n_boxes; }
};

InflatedGenerator assemble(std::span<const GeneratorMatrix> generators, double a, double h);

/// n x n tridiagonal {1, -2, 1}/h^2 with -1/h^2 in both corners.
SparseMatrix temporal_laplacian(std::size_t n_t, double h);

/// eps = sqrt(0.1 * median_speed * median_side).
double epsilon_heuristic(double median_speed, double median_side);

/// Total effective diffusion sqrt(1.1 * median_speed * median_side): applied
/// eps plus the numerical diffusion of the upwind scheme. Reporting only.
double epsilon_total(double median_speed, double median_side);

/// a = tau * sqrt(1.1 * median_speed * median_side) / L_max. Units are taken as
/// given; geophysical runs pass tau in days with speeds and lengths in SI.
double a_heuristic(double tau, double median_speed, double median_side, double longest_extent);

/// Continuous temporal eigenvalue -a^2 pi^2 k^2 / (2 tau^2).
double temporal_eigenvalue(double a, double tau, int k);

/// k-th eigenvalue of (a^2/2) L_T on n_t nodes: -(2a^2/h^2) sin^2(k pi / (2 n_t)).
double discrete_temporal_eigenvalue(double a, double h, std::size_t n_t, int k);

}  // namespace infgen
