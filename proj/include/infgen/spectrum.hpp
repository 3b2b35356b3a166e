#pragma once

#include <complex>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "infgen/generator.hpp"

namespace infgen {

struct EigenOptions {
  double tol = 1e-10;
  unsigned seed = 42;
  /// Real shift for shift-invert. Defaults to 1e-6 * max|A_ii|.
  std::optional<double> shift;
  /// Extra Ritz pairs computed beyond k before truncating by real part.
  int extra = 10;
  int ncv = 0;  // 0 = automatic
  int max_iterations = 3000;
};

enum class EigenClass { trivial, temporal, spatial_real, spatial_complex };

std::string to_string(EigenClass c);

/// Leading eigenpairs, ordered by decreasing real part, then increasing
/// |imaginary part|; a conjugate pair is stored positive imaginary part first.
/// Vectors have unit 2-norm with their largest-magnitude entry real positive.
struct EigenSolution {
  std::vector<std::complex<double>> values;
  Eigen::MatrixXcd vectors;
  std::vector<double> residuals;  // ||A x - lambda x||_2
  double matrix_norm = 0.0;       // ||A||_F
  int iterations = 0;
  double shift = 0.0;
  std::string method;

  std::size_t size() const { return values.size(); }
  bool is_real(std::size_t k) const { return values[k].imag() == 0.0; }
};

/// k eigenpairs of largest real part (right eigenvectors), by shift-invert
/// Arnoldi around a small positive real shift. Falls back to a dense solve
/// when the matrix is too small for the Krylov method.
EigenSolution leading_eigenpairs(const SparseMatrix& matrix, int k, const EigenOptions& options = {});

/// Full dense eigen-decomposition, same ordering/normalisation conventions.
EigenSolution dense_eigenpairs(const SparseMatrix& matrix, int k = -1);

/// Eigenpairs of the function-side (adjoint) operator D^-1 G D with D the
/// box-measure diagonal: the constant function is the null vector. Reduces to
/// right eigenvectors of G when all measures are equal.
EigenSolution function_side_eigenpairs(const SparseMatrix& matrix, const Eigen::VectorXd& measures,
                                       int k, const EigenOptions& options = {});

/// Eigenpairs of the density action g -> g G (i.e. right eigenvectors of G^T).
EigenSolution density_side_eigenpairs(const SparseMatrix& matrix, int k,
                                      const EigenOptions& options = {});

struct ClassifyOptions {
  double temporal_threshold = 0.05;  // fraction of the sup-norm
  double imag_tol = 1e-8;            // relative to |lambda|
};

struct Classification {
  EigenClass cls = EigenClass::spatial_real;
  /// Largest measure-weighted spatial standard deviation over time fibres,
  /// after scaling the vector to unit sup-norm.
  double fibre_std_max = 0.0;
  /// Variance across fibres of the fibre means (normalised spatial integrals).
  double integral_variance = 0.0;
};

/// `measures` has length N (one fibre); vectors have length n_t * N.
std::vector<Classification> classify(const EigenSolution& solution, std::size_t n_boxes,
                                     std::size_t n_t, const Eigen::VectorXd& measures,
                                     const ClassifyOptions& options = {});

Classification classify_vector(const Eigen::VectorXd& vector, std::complex<double> value,
                               std::size_t n_boxes, std::size_t n_t,
                               const Eigen::VectorXd& measures, const ClassifyOptions& options = {});

/// First-order residence rate of box set A under the density action:
/// (sum_{i in A} m_i (1_A^T G)_i) / m(A). Non-positive for generators.
double almost_invariance_rate(const SparseMatrix& matrix, std::span<const std::size_t> set,
                              const Eigen::VectorXd& measures);

struct BalanceResult {
  double residual = 0.0;   // |sum - lambda| / |lambda|
  double balance = 0.0;    // the two truncated functionals, summed
  double mean = 0.0;       // sum_i m_i f_i after normalisation
};

/// Discrete check of the positive/negative-part balance for a real
/// density-side eigenpair (lambda < 0).
BalanceResult sign_balance(const SparseMatrix& matrix, double lambda, const Eigen::VectorXd& f,
                              const Eigen::VectorXd& measures);

/// CSV with header "index,re,im,class,residual" (1-based index).
void write_spectrum_csv(const EigenSolution& solution, std::span<const Classification> classes,
                        const std::filesystem::path& path);

/// Vector scaled to unit sup-norm: real part for complex vectors.
Eigen::VectorXd sup_normalised(const Eigen::VectorXcd& v);

}  // namespace infgen
