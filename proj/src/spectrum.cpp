#include "infgen/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>

#include <arpack/arpack.hpp>
#include <Eigen/Eigenvalues>
#include <Eigen/SparseLU>
#include <Eigen/UmfPackSupport>

#include "infgen/errors.hpp"

namespace infgen {

namespace {

using Complex = std::complex<double>;
using ColMajorSparse = Eigen::SparseMatrix<double, Eigen::ColMajor>;

struct Pair {
  Complex value;
  Eigen::VectorXcd vector;
};

// Unit 2-norm; the largest-magnitude entry is rotated onto the positive real axis.
void normalise(Eigen::VectorXcd& v) {
  const double norm = v.norm();
  if (norm == 0.0) return;
  v /= norm;
  Eigen::Index arg = 0;
  v.cwiseAbs().maxCoeff(&arg);
  const Complex pivot = v[arg];
  if (std::abs(pivot) > 0.0) v *= std::conj(pivot) / std::abs(pivot);
  if (v.imag().cwiseAbs().maxCoeff() == 0.0) return;
}

bool precedes(const Pair& lhs, const Pair& rhs) {
  if (lhs.value.real() != rhs.value.real()) return lhs.value.real() > rhs.value.real();
  if (std::abs(lhs.value.imag()) != std::abs(rhs.value.imag()))
    return std::abs(lhs.value.imag()) < std::abs(rhs.value.imag());
  return lhs.value.imag() > rhs.value.imag();
}

EigenSolution finish(std::vector<Pair> pairs, const SparseMatrix& matrix, std::size_t k) {
  std::stable_sort(pairs.begin(), pairs.end(), precedes);
  if (pairs.size() > k) pairs.resize(k);

  EigenSolution s;
  s.matrix_norm = matrix.norm();
  s.vectors.resize(matrix.rows(), static_cast<Eigen::Index>(pairs.size()));
  for (std::size_t j = 0; j < pairs.size(); ++j) {
    Eigen::VectorXcd v = pairs[j].vector;
    // Real eigenvalues get exactly real vectors.
    if (pairs[j].value.imag() == 0.0) v = v.real().cast<Complex>();
    normalise(v);
    const Eigen::VectorXcd r = matrix.cast<Complex>() * v - pairs[j].value * v;
    s.values.push_back(pairs[j].value);
    s.residuals.push_back(r.norm());
    s.vectors.col(static_cast<Eigen::Index>(j)) = v;
  }
  return s;
}

double default_shift(const SparseMatrix& matrix) {
  double scale = 0.0;
  for (Eigen::Index i = 0; i < matrix.rows(); ++i) scale = std::max(scale, std::abs(matrix.coeff(i, i)));
  if (scale == 0.0) scale = std::max(matrix.norm() / std::sqrt(static_cast<double>(matrix.rows())), 1.0);
  return 1e-6 * scale;
}

}  // namespace

std::string to_string(EigenClass c) {
  switch (c) {
    case EigenClass::trivial: return "trivial";
    case EigenClass::temporal: return "temporal";
    case EigenClass::spatial_real: return "spatial-real";
    case EigenClass::spatial_complex: return "spatial-complex";
  }
  return "unknown";
}

EigenSolution dense_eigenpairs(const SparseMatrix& matrix, int k) {
  if (matrix.rows() != matrix.cols()) throw DomainError("eigenproblem needs a square matrix");
  const Eigen::MatrixXd dense = Eigen::MatrixXd(matrix);
  Eigen::EigenSolver<Eigen::MatrixXd> solver(dense, true);
  if (solver.info() != Eigen::Success) throw NumericalError("dense eigensolver failed");
  std::vector<Pair> pairs;
  for (Eigen::Index j = 0; j < dense.rows(); ++j) {
    Complex value = solver.eigenvalues()[j];
    Eigen::VectorXcd vec = solver.eigenvectors().col(j);
    pairs.push_back({value, vec});
  }
  const std::size_t keep = k < 0 ? pairs.size() : static_cast<std::size_t>(k);
  EigenSolution s = finish(std::move(pairs), matrix, keep);
  s.method = "dense";
  return s;
}

EigenSolution leading_eigenpairs(const SparseMatrix& matrix, int k, const EigenOptions& options) {
  if (matrix.rows() != matrix.cols()) throw DomainError("eigenproblem needs a square matrix");
  if (k < 1) throw DomainError("need at least one eigenpair");
  const auto n = static_cast<a_int>(matrix.rows());
  if (k > n) throw DomainError("more eigenpairs requested than the matrix dimension");

  a_int nev = std::min<a_int>(k + std::max(options.extra, 0), n - 2);
  if (nev < k || n < 6) return dense_eigenpairs(matrix, k);
  a_int ncv = options.ncv > 0 ? options.ncv : std::max<a_int>(2 * nev + 1, 20);
  ncv = std::min(ncv, n);
  if (ncv < nev + 2) return dense_eigenpairs(matrix, k);

  const double shift = options.shift.value_or(default_shift(matrix));
  ColMajorSparse shifted = matrix;
  for (Eigen::Index i = 0; i < shifted.rows(); ++i) shifted.coeffRef(i, i) -= shift;
  shifted.makeCompressed();
  Eigen::UmfPackLU<ColMajorSparse> lu;
  lu.compute(shifted);
  if (lu.info() != Eigen::Success)
    throw NumericalError("sparse LU of the shifted matrix failed");

  std::vector<double> resid(static_cast<std::size_t>(n));
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  for (double& r : resid) r = uniform(rng);

  std::vector<double> v(static_cast<std::size_t>(n) * static_cast<std::size_t>(ncv));
  std::vector<double> workd(3 * static_cast<std::size_t>(n));
  const a_int lworkl = 3 * ncv * ncv + 6 * ncv;
  std::vector<double> workl(static_cast<std::size_t>(lworkl));
  a_int iparam[11] = {};
  a_int ipntr[14] = {};
  iparam[0] = 1;  // exact shifts
  iparam[2] = options.max_iterations;
  iparam[6] = 1;  // regular mode on OP = (A - shift I)^-1
  a_int ido = 0;
  a_int info = 1;  // use the seeded start vector

  Eigen::VectorXd rhs(n);
  while (true) {
    arpack::naupd(ido, arpack::bmat::identity, n, arpack::which::largest_magnitude, nev,
                  options.tol, resid.data(), ncv, v.data(), n, iparam, ipntr, workd.data(),
                  workl.data(), lworkl, info);
    if (ido != -1 && ido != 1) break;
    double* x = workd.data() + ipntr[0] - 1;
    double* y = workd.data() + ipntr[1] - 1;
    rhs = Eigen::Map<const Eigen::VectorXd>(x, n);
    Eigen::Map<Eigen::VectorXd>(y, n) = lu.solve(rhs);
  }
  if (info == 1)
    throw NumericalError("Arnoldi iteration hit the restart limit with " + std::to_string(iparam[4]) +
                         " of " + std::to_string(nev) + " Ritz pairs converged");
  if (info < 0) throw NumericalError("ARPACK naupd failed with info " + std::to_string(info));

  std::vector<a_int> select(static_cast<std::size_t>(ncv));
  std::vector<double> dr(static_cast<std::size_t>(nev) + 1), di(static_cast<std::size_t>(nev) + 1);
  std::vector<double> z(static_cast<std::size_t>(n) * (static_cast<std::size_t>(nev) + 1));
  std::vector<double> workev(3 * static_cast<std::size_t>(ncv));
  a_int einfo = 0;
  arpack::neupd(1, arpack::howmny::ritz_vectors, select.data(), dr.data(), di.data(), z.data(), n,
                0.0, 0.0, workev.data(), arpack::bmat::identity, n,
                arpack::which::largest_magnitude, nev, options.tol, resid.data(), ncv, v.data(), n,
                iparam, ipntr, workd.data(), workl.data(), lworkl, einfo);
  if (einfo != 0) throw NumericalError("ARPACK neupd failed with info " + std::to_string(einfo));

  const a_int converged = iparam[4];
  std::vector<Pair> pairs;
  auto column = [&](a_int j) {
    return Eigen::Map<const Eigen::VectorXd>(z.data() + static_cast<std::size_t>(j) * static_cast<std::size_t>(n), n);
  };
  for (a_int j = 0; j < converged; ++j) {
    const Complex nu(dr[static_cast<std::size_t>(j)], di[static_cast<std::size_t>(j)]);
    const Complex lambda = shift + 1.0 / nu;
    if (nu.imag() == 0.0) {
      pairs.push_back({Complex(lambda.real(), 0.0), column(j).cast<Complex>()});
    } else {
      if (j + 1 >= converged) break;
      Eigen::VectorXcd vec(n);
      vec.real() = column(j);
      vec.imag() = column(j + 1);
      pairs.push_back({lambda, vec});
      pairs.push_back({std::conj(lambda), vec.conjugate()});
      ++j;
    }
  }
  if (static_cast<int>(pairs.size()) < k)
    throw NumericalError("only " + std::to_string(pairs.size()) + " Ritz pairs converged, " +
                         std::to_string(k) + " requested");

  EigenSolution s = finish(std::move(pairs), matrix, static_cast<std::size_t>(k));
  s.iterations = static_cast<int>(iparam[2]);
  s.shift = shift;
  s.method = "shift-invert Arnoldi";
  return s;
}

EigenSolution function_side_eigenpairs(const SparseMatrix& matrix, const Eigen::VectorXd& measures,
                                       int k, const EigenOptions& options) {
  if (measures.size() == 0 || matrix.rows() % measures.size() != 0)
    throw DomainError("measure vector does not divide the matrix dimension");
  const bool uniform = (measures.array() == measures[0]).all();
  if (uniform) return leading_eigenpairs(matrix, k, options);

  const Eigen::Index reps = matrix.rows() / measures.size();
  Eigen::VectorXd d(matrix.rows());
  for (Eigen::Index r = 0; r < reps; ++r) d.segment(r * measures.size(), measures.size()) = measures;
  const SparseMatrix similar = d.cwiseInverse().asDiagonal() * matrix * d.asDiagonal();
  return leading_eigenpairs(similar, k, options);
}

EigenSolution density_side_eigenpairs(const SparseMatrix& matrix, int k, const EigenOptions& options) {
  const SparseMatrix transposed = matrix.transpose();
  return leading_eigenpairs(transposed, k, options);
}

Eigen::VectorXd sup_normalised(const Eigen::VectorXcd& v) {
  Eigen::VectorXd x = v.real();
  Eigen::Index arg = 0;
  const double peak = x.cwiseAbs().maxCoeff(&arg);
  if (peak == 0.0) return x;
  return x / (x[arg] > 0.0 ? peak : -peak);
}

Classification classify_vector(const Eigen::VectorXd& vector, std::complex<double> value,
                               std::size_t n_boxes, std::size_t n_t,
                               const Eigen::VectorXd& measures, const ClassifyOptions& options) {
  if (static_cast<std::size_t>(vector.size()) != n_boxes * n_t ||
      static_cast<std::size_t>(measures.size()) != n_boxes)
    throw DomainError("vector length does not match n_t * N");
  const double peak = vector.cwiseAbs().maxCoeff();
  const Eigen::VectorXd x = peak > 0.0 ? Eigen::VectorXd(vector / peak) : vector;
  const double total = measures.sum();
  const auto n = static_cast<Eigen::Index>(n_boxes);

  Classification c;
  Eigen::VectorXd means(static_cast<Eigen::Index>(n_t));
  double global_mean = 0.0;
  for (std::size_t l = 0; l < n_t; ++l) {
    const auto fibre = x.segment(static_cast<Eigen::Index>(l) * n, n);
    const double mean = measures.dot(fibre) / total;
    const double var = measures.dot((fibre.array() - mean).square().matrix()) / total;
    c.fibre_std_max = std::max(c.fibre_std_max, std::sqrt(std::max(var, 0.0)));
    means[static_cast<Eigen::Index>(l)] = mean;
    global_mean += mean;
  }
  global_mean /= static_cast<double>(n_t);
  c.integral_variance = (means.array() - global_mean).square().mean();
  double global_var = 0.0;
  for (std::size_t l = 0; l < n_t; ++l) {
    const auto fibre = x.segment(static_cast<Eigen::Index>(l) * n, n);
    global_var += measures.dot((fibre.array() - global_mean).square().matrix()) / total;
  }
  global_var /= static_cast<double>(n_t);

  if (std::abs(value.imag()) > options.imag_tol * std::abs(value)) {
    c.cls = EigenClass::spatial_complex;
  } else if (std::sqrt(std::max(global_var, 0.0)) < options.temporal_threshold) {
    c.cls = EigenClass::trivial;
  } else if (c.fibre_std_max < options.temporal_threshold) {
    c.cls = EigenClass::temporal;
  } else {
    c.cls = EigenClass::spatial_real;
  }
  return c;
}

std::vector<Classification> classify(const EigenSolution& solution, std::size_t n_boxes,
                                     std::size_t n_t, const Eigen::VectorXd& measures,
                                     const ClassifyOptions& options) {
  std::vector<Classification> out;
  out.reserve(solution.size());
  for (std::size_t j = 0; j < solution.size(); ++j)
    out.push_back(classify_vector(solution.vectors.col(static_cast<Eigen::Index>(j)).real(),
                                  solution.values[j], n_boxes, n_t, measures, options));
  return out;
}

double almost_invariance_rate(const SparseMatrix& matrix, std::span<const std::size_t> set,
                              const Eigen::VectorXd& measures) {
  if (set.empty()) throw DomainError("almost-invariance rate needs a nonempty set");
  Eigen::VectorXd indicator = Eigen::VectorXd::Zero(matrix.rows());
  for (std::size_t i : set) {
    if (i >= static_cast<std::size_t>(matrix.rows())) throw DomainError("box index out of range");
    indicator[static_cast<Eigen::Index>(i)] = 1.0;
  }
  const Eigen::VectorXd evolved = matrix.transpose() * indicator;  // (1_A^T G)^T
  double flow = 0.0, mass = 0.0;
  for (std::size_t i : set) {
    const auto r = static_cast<Eigen::Index>(i);
    flow += measures[r] * evolved[r];
    mass += measures[r];
  }
  return flow / mass;
}

BalanceResult sign_balance(const SparseMatrix& matrix, double lambda, const Eigen::VectorXd& f,
                              const Eigen::VectorXd& measures) {
  if (!(lambda < 0.0)) throw DomainError("balance check needs a real eigenvalue lambda < 0");
  if (f.size() != matrix.rows() || measures.size() != f.size())
    throw DomainError("eigenvector and measures must match the matrix size");
  const double l1 = measures.dot(f.cwiseAbs());
  if (!(l1 > 0.0)) throw DomainError("zero eigenvector");
  const Eigen::VectorXd g = f / l1;

  const Eigen::VectorXd pos = (g.array() >= 0.0).select(g, 0.0);
  const Eigen::VectorXd neg = g - pos;
  const Eigen::VectorXd in_pos = (g.array() >= 0.0).cast<double>();
  const Eigen::VectorXd in_neg = Eigen::VectorXd::Ones(g.size()) - in_pos;

  // G_A(h) = sum_{i in A} m_i (h^T G)_i
  auto functional = [&](const Eigen::VectorXd& indicator, const Eigen::VectorXd& h) {
    const Eigen::VectorXd evolved = matrix.transpose() * h;
    return measures.cwiseProduct(indicator).dot(evolved);
  };
  const double nu_pos = measures.dot(pos);
  const double nu_neg = measures.dot(neg);
  if (nu_pos == 0.0 || nu_neg == 0.0) throw DomainError("eigenvector does not change sign");

  BalanceResult r;
  r.balance = functional(in_pos, pos) / nu_pos + functional(in_neg, neg) / nu_neg;
  r.residual = std::abs(r.balance - lambda) / std::abs(lambda);
  r.mean = measures.dot(g);
  return r;
}

void write_spectrum_csv(const EigenSolution& solution, std::span<const Classification> classes,
                        const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "index,re,im,class,residual\n" << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t j = 0; j < solution.size(); ++j) {
    out << j + 1 << ',' << solution.values[j].real() << ',' << solution.values[j].imag() << ','
        << (j < classes.size() ? to_string(classes[j].cls) : std::string("unclassified")) << ','
        << solution.residuals[j] << '\n';
  }
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace infgen
