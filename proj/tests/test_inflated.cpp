#include <gtest/gtest.h>

#include <algorithm>

#include <cmath>
#include <numbers>
#include <random>

#include "infgen/errors.hpp"
#include "infgen/generator.hpp"
#include "infgen/inflated.hpp"
#include "support.hpp"

#include <unsupported/Eigen/KroneckerProduct>

using namespace infgen;
using namespace infgen::testing;

namespace {

std::vector<GeneratorMatrix> slices(std::shared_ptr<const Grid> g, const VelocityField& f,
                                    const std::vector<double>& times, double eps) {
  std::vector<GeneratorMatrix> out;
  for (double t : times) out.push_back(ulam_generator(g, f, t, eps));
  return out;
}

}  // namespace

TEST(Heuristics, Epsilon) {
  EXPECT_NEAR(epsilon_heuristic(14.3698, 0.04), 0.23974820124455576, 1e-14);
  EXPECT_NEAR(epsilon_heuristic(9.8360, 103618), 319.24702786400377, 1e-9);
  EXPECT_NEAR(epsilon_heuristic(10.3539, 103618), 327.54395280633713, 1e-9);
  EXPECT_EQ(epsilon_heuristic(0.0, 103618), 0.0);
  EXPECT_NEAR(epsilon_total(14.3698, 0.04), std::sqrt(11.0) * 0.23974820124455576, 1e-14);
  EXPECT_THROW(epsilon_heuristic(-1, 1), DomainError);
}

TEST(Heuristics, A) {
  EXPECT_NEAR(a_heuristic(1, 14.3698, 0.04, 3), 0.26505160923026966, 1e-14);
  EXPECT_NEAR(a_heuristic(11, 9.8360, 103618, 5003771.699005143), 0.00232765389311968, 1e-15);
  EXPECT_NEAR(a_heuristic(20, 10.3539, 103618, 5003771.699005143), 0.00434208616681886, 1e-15);
  EXPECT_THROW(a_heuristic(0, 1, 1, 1), DomainError);
}

TEST(Heuristics, TemporalEigenvalues) {
  EXPECT_NEAR(temporal_eigenvalue(0.45, 1, 1), -0.9992974456102975, 1e-14);
  EXPECT_EQ(temporal_eigenvalue(3.0, 2.0, 0), 0.0);
  EXPECT_NEAR(discrete_temporal_eigenvalue(0.45, 0.05, 21, 1), -0.9047030757645876, 1e-13);
  EXPECT_LT(std::abs(discrete_temporal_eigenvalue(0.45, 0.05, 21, 1) / temporal_eigenvalue(0.45, 1, 1) - 1), 0.15);
  for (int k = 1; k < 5; ++k)
    EXPECT_LT(discrete_temporal_eigenvalue(0.6, 0.05, 21, k), discrete_temporal_eigenvalue(0.5, 0.05, 21, k));
}

TEST(Inflated, TemporalLaplacianStencil) {
  const auto L = dense(temporal_laplacian(4, 0.5));
  Eigen::MatrixXd expected(4, 4);
  expected << -4, 4, 0, 0, 4, -8, 4, 0, 0, 4, -8, 4, 0, 0, 4, -4;
  EXPECT_EQ(L, expected);
}

TEST(Inflated, BlockStructure) {
  const auto g = planar(4, 3);
  const auto times = linspace(0, 1, 4);
  const auto G = slices(g, *switching_double_gyre(), times, 0.2);
  const double a = 0.7, h = 1.0 / 3.0, c = a * a / (2 * h * h);
  const auto inf = assemble(G, a, h);
  const std::size_t n = g->size();
  ASSERT_EQ(inf.size(), 4 * n);
  EXPECT_EQ(inf.index(2, 5), 2 * n + 5);
  for (Eigen::Index r = 0; r < inf.matrix.outerSize(); ++r)
    for (SparseMatrix::InnerIterator it(inf.matrix, r); it; ++it) {
      const std::size_t lr = static_cast<std::size_t>(it.row()) / n, ir = static_cast<std::size_t>(it.row()) % n;
      const std::size_t lc = static_cast<std::size_t>(it.col()) / n, ic = static_cast<std::size_t>(it.col()) % n;
      if (lr == lc) {
        const bool end = lr == 0 || lr == 3;
        const double temporal = ir == ic ? -(end ? 1.0 : 2.0) * c : 0.0;
        EXPECT_EQ(it.value(), G[lr].matrix.coeff(ir, ic) + temporal);
      } else {
        EXPECT_EQ(ir, ic);
        EXPECT_EQ(lr > lc ? lr - lc : lc - lr, 1u);
        EXPECT_DOUBLE_EQ(it.value(), c);
      }
    }
}

TEST(Inflated, LinearityInASquared) {
  std::mt19937_64 rng(5);
  const auto g = planar(5, 3);
  const auto times = linspace(0, 1, 6);
  const auto G = slices(g, *random_field(rng), times, 0.15);
  const double h = 0.2;
  const auto base = assemble(G, 0.0, h);
  for (double a : {0.1, 0.45, 3.0}) {
    const auto full = assemble(G, a, h);
    const SparseMatrix kron = Eigen::KroneckerProductSparse<SparseMatrix, SparseMatrix>(
        temporal_laplacian(times.size(), h), SparseMatrix(Eigen::MatrixXd::Identity(15, 15).sparseView()));
    // Off-diagonal entries carry no rounding: exact equality.
    const Eigen::MatrixXd diff = dense(full.matrix) - dense(base.matrix);
    const Eigen::MatrixXd target = 0.5 * a * a * dense(kron);
    for (Eigen::Index i = 0; i < diff.rows(); ++i)
      for (Eigen::Index j = 0; j < diff.cols(); ++j) {
        if (i == j) {
          EXPECT_EQ(full.matrix.coeff(i, j), base.matrix.coeff(i, j) + target(i, j));
        } else {
          EXPECT_EQ(diff(i, j), target(i, j));
        }
      }
  }
}

TEST(Inflated, DecoupledSpectrumIsUnionOfSlices) {
  const auto g = planar(3, 2);
  const auto times = linspace(0, 1, 3);
  const auto G = slices(g, *switching_double_gyre(), times, 0.3);
  const auto inf = assemble(G, 0.0, 0.5);
  std::vector<std::complex<double>> expected;
  for (const auto& s : G) {
    const auto v = dense_values(dense(s.matrix));
    expected.insert(expected.end(), v.begin(), v.end());
  }
  auto got = dense_values(dense(inf.matrix));
  ASSERT_EQ(got.size(), expected.size());
  for (const auto e : expected) {
    auto nearest = std::min_element(got.begin(), got.end(),
                                    [e](auto x, auto y) { return std::abs(x - e) < std::abs(y - e); });
    EXPECT_NEAR(std::abs(*nearest - e), 0.0, 1e-9);
    got.erase(nearest);
  }
}

TEST(Inflated, SteadyKroneckerSum) {
  const auto g = planar(3, 3);
  const auto steady = frozen(switching_double_gyre(), 0.2);
  const std::size_t n_t = 5;
  const auto times = linspace(0, 1, n_t);
  const double a = 0.45, h = 0.25;
  const auto inf = assemble(slices(g, *steady, times, 0.3), a, h);
  const auto spatial = dense_values(dense(ulam_generator(g, *steady, 0, 0.3).matrix));
  std::vector<std::complex<double>> expected;
  for (auto lam : spatial)
    for (std::size_t k = 0; k < n_t; ++k)
      expected.push_back(lam + discrete_temporal_eigenvalue(a, h, n_t, static_cast<int>(k)));
  std::sort(expected.begin(), expected.end(), [](auto x, auto y) {
    if (x.real() != y.real()) return x.real() > y.real();
    return x.imag() > y.imag();
  });
  const auto got = dense_values(dense(inf.matrix));
  for (std::size_t k = 0; k < got.size(); ++k) EXPECT_NEAR(std::abs(got[k] - expected[k]), 0.0, 1e-9);
}

TEST(Inflated, ZeroFlowNoDiffusion) {
  const auto g = planar(2, 2);
  const std::size_t n_t = 6;
  const double a = 1.3, h = 0.2;
  const auto inf = assemble(slices(g, *constant_field(0, 0), linspace(0, 1, n_t), 0.0), a, h);
  const auto got = dense_values(dense(inf.matrix));
  std::vector<double> expected;
  for (std::size_t k = 0; k < n_t; ++k)
    for (int copy = 0; copy < 4; ++copy) expected.push_back(discrete_temporal_eigenvalue(a, h, n_t, static_cast<int>(k)));
  std::sort(expected.rbegin(), expected.rend());
  for (std::size_t k = 0; k < got.size(); ++k) EXPECT_NEAR(got[k].real(), expected[k], 1e-10);
}

TEST(Inflated, Errors) {
  const auto g = planar(2, 2);
  const auto g2 = planar(3, 2);
  const auto one = ulam_generator(g, *constant_field(1, 0), 0, 0.1);
  const std::vector<GeneratorMatrix> single = {one};
  EXPECT_THROW(assemble(single, 0.1, 0.1), DomainError);
  const std::vector<GeneratorMatrix> mixed = {one, ulam_generator(g2, *constant_field(1, 0), 0, 0.1)};
  EXPECT_THROW(assemble(mixed, 0.1, 0.1), DomainError);
  const std::vector<GeneratorMatrix> pair = {one, one};
  EXPECT_THROW(assemble(pair, -0.1, 0.1), DomainError);
  EXPECT_THROW(assemble(pair, 0.1, 0.0), DomainError);
}
