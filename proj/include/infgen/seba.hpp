#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "infgen/grid.hpp"

namespace infgen {

struct SebaOptions {
  std::optional<double> mu;  // default 0.99 / sqrt(p)
  double tol = 1e-12;
  int max_iterations = 5000;
  unsigned seed = 42;
};

struct SebaBasis {
  Eigen::MatrixXd vectors;  // p x r, each column scaled to max 1
  Eigen::VectorXd maxima;   // before the final rescaling
  Eigen::VectorXd minima;   // after it
  Eigen::MatrixXd rotation;
  std::vector<std::size_t> order;  // output column -> column of the unsorted iterate
  double mu = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Sparse rotation of the span of V. Iterates soft-thresholding of V R^T and
/// the polar factor of S^T V until R settles; non-convergence is reported in
/// `converged`, not thrown.
SebaBasis seba(const Eigen::MatrixXd& v, const SebaOptions& options = {});

/// Largest principal angle between the column spans, in degrees.
double max_principal_angle(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

struct Family {
  std::size_t column = 0;
  std::vector<std::vector<std::size_t>> fibres;  // box indices per time fibre
  std::vector<double> areas;
  std::optional<std::size_t> birth;  // first nonempty fibre
  std::optional<std::size_t> death;  // last nonempty fibre
};

/// Thresholds each column of S at `cutoff` fibre by fibre.
std::vector<Family> extract_families(const Eigen::MatrixXd& s, const Grid& grid, std::size_t n_t,
                                     double cutoff);

/// Area of the symmetric difference between consecutive fibres l and l+1.
std::vector<double> support_changes(const Family& family, const Grid& grid);

}  // namespace infgen
