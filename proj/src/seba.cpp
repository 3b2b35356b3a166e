#include "infgen/seba.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/QR>
#include <Eigen/SVD>

#include "infgen/errors.hpp"

namespace infgen {

namespace {

Eigen::MatrixXd orthonormal_basis(const Eigen::MatrixXd& v) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(v, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sigma = svd.singularValues();
  if (sigma.size() == 0 || sigma.minCoeff() <= 1e-10 * std::max(sigma.maxCoeff(), 1e-300))
    throw DomainError("SEBA input vectors are linearly dependent");
  return svd.matrixU() * svd.matrixV().transpose();
}

Eigen::MatrixXd polar_factor(const Eigen::MatrixXd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().transpose();
}

}  // namespace

SebaBasis seba(const Eigen::MatrixXd& input, const SebaOptions& options) {
  const Eigen::Index p = input.rows();
  const Eigen::Index r = input.cols();
  if (p == 0 || r == 0) throw DomainError("SEBA needs a nonempty matrix");
  if (r > p) throw DomainError("SEBA needs at most as many vectors as entries");
  if (!input.allFinite()) throw DomainError("SEBA input has non-finite entries");
  const double mu = options.mu.value_or(0.99 / std::sqrt(static_cast<double>(p)));
  if (!(mu > 0.0 && mu < 1.0)) throw DomainError("SEBA threshold mu must lie in (0, 1)");

  Eigen::MatrixXd v = input;
  const Eigen::MatrixXd gram = v.transpose() * v;
  if ((gram - Eigen::MatrixXd::Identity(r, r)).norm() > 1e-8) v = orthonormal_basis(v);

  // A constant column makes R = I a fixed point even when it is not the sparse one.
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> noise(0.0, 1e-12);
  bool perturbed = false;
  for (Eigen::Index j = 0; j < r; ++j) {
    const double scale = v.col(j).cwiseAbs().maxCoeff();
    if (v.col(j).maxCoeff() - v.col(j).minCoeff() <= 1e-12 * scale) {
      for (Eigen::Index i = 0; i < p; ++i) v(i, j) += noise(rng);
      perturbed = true;
    }
  }
  if (perturbed && r > 1) v = orthonormal_basis(v);

  SebaBasis out;
  out.mu = mu;
  Eigen::MatrixXd rot = Eigen::MatrixXd::Identity(r, r);
  Eigen::MatrixXd s(p, r);
  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    s = v * rot.transpose();
    s = s.unaryExpr([mu](double z) {
      const double m = std::abs(z) - mu;
      return m > 0.0 ? std::copysign(m, z) : 0.0;
    });
    for (Eigen::Index j = 0; j < r; ++j) {
      const double norm = s.col(j).norm();
      if (norm > 0.0) s.col(j) /= norm;
    }
    const Eigen::MatrixXd next = polar_factor(s.transpose() * v);
    const double change = (next - rot).norm();
    rot = next;
    out.iterations = iter;
    if (change <= options.tol) {
      out.converged = true;
      break;
    }
  }
  out.rotation = rot;

  out.maxima.resize(r);
  for (Eigen::Index j = 0; j < r; ++j) {
    Eigen::Index arg = 0;
    s.col(j).cwiseAbs().maxCoeff(&arg);
    if (s(arg, j) < 0.0) s.col(j) *= -1.0;
    const double peak = s.col(j).maxCoeff();
    out.maxima[j] = peak;
    if (peak > 0.0) s.col(j) /= peak;
  }

  std::vector<std::size_t> order(static_cast<std::size_t>(r));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return s.col(static_cast<Eigen::Index>(x)).minCoeff() > s.col(static_cast<Eigen::Index>(y)).minCoeff();
  });
  out.vectors.resize(p, r);
  out.minima.resize(r);
  Eigen::VectorXd maxima(r);
  for (Eigen::Index j = 0; j < r; ++j) {
    const auto src = static_cast<Eigen::Index>(order[static_cast<std::size_t>(j)]);
    out.vectors.col(j) = s.col(src);
    out.minima[j] = s.col(src).minCoeff();
    maxima[j] = out.maxima[src];
  }
  out.maxima = maxima;
  out.order = std::move(order);
  return out;
}

double max_principal_angle(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows()) throw DomainError("principal angles need equal-length vectors");
  Eigen::JacobiSVD<Eigen::MatrixXd> sa(a, Eigen::ComputeThinU);
  Eigen::JacobiSVD<Eigen::MatrixXd> sb(b, Eigen::ComputeThinU);
  auto rank_basis = [](const Eigen::JacobiSVD<Eigen::MatrixXd>& svd) {
    const Eigen::VectorXd& sigma = svd.singularValues();
    Eigen::Index rank = 0;
    while (rank < sigma.size() && sigma[rank] > 1e-10 * sigma[0]) ++rank;
    return Eigen::MatrixXd(svd.matrixU().leftCols(rank));
  };
  const Eigen::MatrixXd qa = rank_basis(sa);
  const Eigen::MatrixXd qb = rank_basis(sb);
  if (qa.cols() != qb.cols()) return 90.0;
  const Eigen::VectorXd cosines = Eigen::JacobiSVD<Eigen::MatrixXd>(qa.transpose() * qb).singularValues();
  const double smallest = std::clamp(cosines.minCoeff(), -1.0, 1.0);
  return std::acos(smallest) * 180.0 / std::acos(-1.0);
}

std::vector<Family> extract_families(const Eigen::MatrixXd& s, const Grid& grid, std::size_t n_t,
                                     double cutoff) {
  const std::size_t n = grid.size();
  if (static_cast<std::size_t>(s.rows()) != n * n_t)
    throw DomainError("SEBA vectors do not match the spacetime grid");
  if (!(cutoff >= 0.0 && cutoff < 1.0)) throw DomainError("cutoff must lie in [0, 1)");
  std::vector<Family> families;
  for (Eigen::Index j = 0; j < s.cols(); ++j) {
    Family f;
    f.column = static_cast<std::size_t>(j);
    f.fibres.resize(n_t);
    f.areas.assign(n_t, 0.0);
    for (std::size_t l = 0; l < n_t; ++l) {
      for (std::size_t i = 0; i < n; ++i) {
        if (s(static_cast<Eigen::Index>(l * n + i), j) > cutoff) {
          f.fibres[l].push_back(i);
          f.areas[l] += grid.box(i).area;
        }
      }
      if (!f.fibres[l].empty()) {
        if (!f.birth) f.birth = l;
        f.death = l;
      }
    }
    families.push_back(std::move(f));
  }
  return families;
}

std::vector<double> support_changes(const Family& family, const Grid& grid) {
  std::vector<double> out;
  for (std::size_t l = 0; l + 1 < family.fibres.size(); ++l) {
    std::vector<std::size_t> diff;
    std::set_symmetric_difference(family.fibres[l].begin(), family.fibres[l].end(),
                                  family.fibres[l + 1].begin(), family.fibres[l + 1].end(),
                                  std::back_inserter(diff));
    double area = 0.0;
    for (std::size_t i : diff) area += grid.box(i).area;
    out.push_back(area);
  }
  return out;
}

}  // namespace infgen
