#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

namespace infgen {

struct QuadratureOptions {
  int nodes = 3;            // Gauss-Legendre order per panel
  double abs_tol = 1e-8;
  double rel_tol = 1e-8;
  std::size_t max_panels = 4096;
};

/// Gauss-Legendre nodes and weights on [-1, 1].
struct GaussLegendreRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

GaussLegendreRule gauss_legendre(int n);

struct QuadratureResult {
  double value = 0.0;
  double error = 0.0;
  std::size_t panels = 0;
  bool converged = false;
};

/// Globally adaptive Gauss-Legendre integration of f over [a, b]. Each panel
/// is estimated by the rule on its two halves and compared with the rule on
/// the whole panel; the panel with the largest disagreement is halved until
/// the summed disagreement is within max(abs_tol, rel_tol * |value|) or
/// max_panels is reached (converged = false).
QuadratureResult integrate(const std::function<double(double)>& f, double a, double b,
                           const QuadratureOptions& options = {});

}  // namespace infgen
