#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "infgen/errors.hpp"
#include "infgen/generator.hpp"
#include "infgen/spectrum.hpp"
#include "support.hpp"

using namespace infgen;
using namespace infgen::testing;

namespace {

double max_abs(const SparseMatrix& m) {
  double s = 0.0;
  for (Eigen::Index r = 0; r < m.outerSize(); ++r)
    for (SparseMatrix::InnerIterator it(m, r); it; ++it) s = std::max(s, std::abs(it.value()));
  return s;
}

// |m_i G_ii + sum_j m_j G_ij| for the worst row, relative to the largest m_j |G_ij|.
double mass_defect(const SparseMatrix& m, const Eigen::VectorXd& areas) {
  double worst = 0.0, scale = 0.0;
  for (Eigen::Index r = 0; r < m.outerSize(); ++r) {
    double s = 0.0;
    for (SparseMatrix::InnerIterator it(m, r); it; ++it) {
      const double term = areas[it.col()] * it.value();
      s += term;
      scale = std::max(scale, std::abs(term));
    }
    worst = std::max(worst, std::abs(s));
  }
  return scale > 0.0 ? worst / scale : worst;
}

}  // namespace

TEST(Ulam, UniformEastwardFlow) {
  const auto g = planar(3, 3, {0, 3}, {0, 3});
  const auto G = ulam_generator(g, *constant_field(1, 0), 0.0, 0.0);
  const std::size_t centre = g->index(1, 1);
  EXPECT_DOUBLE_EQ(G.matrix.coeff(centre, g->index(2, 1)), 1.0);
  EXPECT_DOUBLE_EQ(G.matrix.coeff(centre, g->index(0, 1)), 0.0);
  EXPECT_DOUBLE_EQ(G.matrix.coeff(centre, g->index(1, 0)), 0.0);
  EXPECT_DOUBLE_EQ(G.matrix.coeff(centre, g->index(1, 2)), 0.0);
  EXPECT_DOUBLE_EQ(G.matrix.coeff(centre, centre), -1.0);
  // The eastern column has nowhere to go.
  EXPECT_DOUBLE_EQ(G.matrix.coeff(g->index(2, 1), g->index(2, 1)), 0.0);
}

TEST(Ulam, Upwinding) {
  const auto g = planar(2, 1, {0, 2}, {0, 1});
  const auto G = ulam_generator(g, *constant_field(-1, 0), 0.0, 0.0);
  EXPECT_EQ(G.matrix.coeff(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(G.matrix.coeff(1, 0), 1.0);
}

TEST(Ulam, PureDiffusionIsScaledLaplacian) {
  const auto g = planar(4, 3, {0, 2}, {0, 1.5});
  const double eps = 0.3, l = 0.5;
  const auto G = ulam_generator(g, *constant_field(0, 0), 0.0, eps);
  const double r = eps * eps / (2 * l * l);
  for (std::size_t i = 0; i < g->size(); ++i) {
    EXPECT_NEAR(G.matrix.coeff(i, i), -r * static_cast<double>(g->faces_of(i).size()), 1e-15);
    for (const Face& f : g->faces_of(i)) EXPECT_NEAR(G.matrix.coeff(i, f.to), r, 1e-15);
  }
}

TEST(Ulam, MatchesIndependentAssemblyPlanar) {
  // Reference: separate assembly with adaptive quadrature to 1e-13.
  const double expected[6][6] = {
      {-6.406197723675812, 0.020000000000000004, 0.0, 6.386197723675813, 0.0, 0.0},
      {0.9498182354369002, -19.467392037064634, 17.786688752680476, 0.0, 0.7308850489472578, 0.0},
      {0.0, 0.020000000000000004, -5.69531267472856, 0.0, 0.0, 5.67531267472856},
      {6.090227386982275, 0.0, 0.0, -7.040045622419175, 0.9498182354369002, 0.0},
      {0.0, 6.682168060369349, 0.0, 0.020000000000000004, -6.7221680603693486, 0.020000000000000004},
      {0.0, 0.0, 0.020000000000000004, 0.0, 17.786688752680476, -17.806688752680476}};
  const auto g = planar(3, 2);
  const auto G = ulam_generator(g, *switching_double_gyre(), 0.3, 0.2, {3, 1e-12, 1e-12, 4096});
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) EXPECT_NEAR(G.matrix.coeff(i, j), expected[i][j], 1e-9) << i << "," << j;
}

TEST(Ulam, MatchesIndependentAssemblySpherical) {
  const double expected[9][9] = {
      {-0.00017277690630126662, 0.0001245629746771336, 0, 4.895103971353643e-05, 0, 0, 0, 0, 0},
      {6.29435941067095e-06, -0.00017907126571193758, 0.0001245629746771336, 0, 4.895103971353643e-05, 0, 0, 0, 0},
      {0, 6.29435941067095e-06, -5.450829103480398e-05, 0, 0, 4.895103971353643e-05, 0, 0, 0},
      {3.6395070789251007e-06, 0, 0, -0.00017846013858341278, 0.00012656502943852159, 0, 4.896344181222911e-05, 0, 0},
      {0, 3.6395070789251007e-06, 0, 6.488290459704171e-06, -0.000184948429043117, 0.00012656502943852159, 0,
       4.896344181222911e-05, 0},
      {0, 0, 3.6395070789251007e-06, 0, 6.488290459704171e-06, -5.8383399604595385e-05, 0, 0, 4.896344181222911e-05},
      {0, 0, 0, 3.6395070789251007e-06, 0, 0, -0.00013237136231284812, 0.00012867420588131247, 0},
      {0, 0, 0, 0, 3.6395070789251007e-06, 0, 6.695465857958263e-06, -0.00013906682817080637, 0.00012867420588131247},
      {0, 0, 0, 0, 0, 3.6395070789251007e-06, 0, 6.695465857958263e-06, -1.0392622289493911e-05}};
  const auto g = spherical(3, 3, {0, 3}, {40, 43});
  EXPECT_NEAR(g->box(0).area, 9401896385.954409, 1e-3);
  const auto G = ulam_generator(g, *constant_field(10, 5), 0.0, 300.0);
  for (int i = 0; i < 9; ++i)
    for (int j = 0; j < 9; ++j) EXPECT_NEAR(G.matrix.coeff(i, j), expected[i][j], 1e-17) << i << "," << j;
}

TEST(Ulam, RandomFieldsConserveMass) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> count(1, 12);
  std::uniform_real_distribution<double> eps(0.0, 0.5), t(0.0, 1.0);
  for (int trial = 0; trial < 25; ++trial) {
    const auto g = planar(static_cast<std::size_t>(count(rng)), static_cast<std::size_t>(count(rng)));
    const auto G = ulam_generator(g, *random_field(rng), t(rng), eps(rng));
    const Eigen::VectorXd rows = G.matrix * Eigen::VectorXd::Ones(G.matrix.cols());
    EXPECT_LE(rows.cwiseAbs().maxCoeff(), 1e-12 * std::max(max_abs(G.matrix), 1e-300));
    for (Eigen::Index r = 0; r < G.matrix.outerSize(); ++r)
      for (SparseMatrix::InnerIterator it(G.matrix, r); it; ++it) {
        if (it.row() == it.col()) EXPECT_LE(it.value(), 0.0);
        else EXPECT_GE(it.value(), 0.0);
      }
  }
  for (int trial = 0; trial < 25; ++trial) {
    std::uniform_real_distribution<double> lat(-70, 50);
    const double y0 = lat(rng);
    const auto g = spherical(static_cast<std::size_t>(count(rng)), static_cast<std::size_t>(count(rng)), {0, 20},
                             {y0, y0 + 15});
    const auto inner = random_field(rng);
    const auto wind = std::make_shared<AnalyticField>(
        [inner](double t, double x, double y) { return Vec2(10.0 * inner->eval(t, x / 10, y / 10)); }, Interval{0, 1});
    const auto G = ulam_generator(g, *wind, t(rng), 300 * eps(rng));
    EXPECT_LE(mass_defect(G.matrix, g->areas()), 1e-12);
  }
}

TEST(Ulam, SparsityFollowsFaces) {
  const auto g = planar(5, 4);
  const auto G = ulam_generator(g, *switching_double_gyre(), 0.5, 0.1);
  for (Eigen::Index r = 0; r < G.matrix.outerSize(); ++r)
    for (SparseMatrix::InnerIterator it(G.matrix, r); it; ++it) {
      if (it.row() == it.col()) continue;
      bool adjacent = false;
      for (const Face& f : g->faces_of(static_cast<std::size_t>(it.row())))
        adjacent |= f.to == static_cast<std::size_t>(it.col());
      EXPECT_TRUE(adjacent);
    }
}

TEST(Ulam, AffineInEpsilonSquared) {
  const auto g = planar(6, 4);
  const auto f = switching_double_gyre();
  const auto g0 = ulam_generator(g, *f, 0.2, 0.0);
  const auto g1 = ulam_generator(g, *f, 0.2, 0.3);
  const auto g2 = ulam_generator(g, *f, 0.2, 0.6);
  const double l = 0.5;
  for (Eigen::Index r = 0; r < g0.matrix.outerSize(); ++r)
    for (SparseMatrix::InnerIterator it(g0.matrix, r); it; ++it) {
      if (it.row() == it.col()) continue;
      EXPECT_NEAR(g1.matrix.coeff(it.row(), it.col()) - it.value(), 0.09 / (2 * l * l), 1e-12);
      EXPECT_NEAR(g2.matrix.coeff(it.row(), it.col()) - it.value(), 0.36 / (2 * l * l), 1e-12);
    }
}

TEST(Ulam, ZeroVelocitySpectrum) {
  const std::size_t nx = 6, ny = 4;
  const auto g = planar(nx, ny, {0, 3}, {0, 2});
  const double eps = 0.4, l = 0.5, r = eps * eps / (2 * l * l);
  const auto G = ulam_generator(g, *constant_field(0, 0), 0.0, eps);
  std::vector<double> expected;
  for (std::size_t k = 0; k < nx; ++k)
    for (std::size_t m = 0; m < ny; ++m)
      expected.push_back(r * (-4 * std::pow(std::sin(k * std::numbers::pi / (2.0 * nx)), 2) -
                              4 * std::pow(std::sin(m * std::numbers::pi / (2.0 * ny)), 2)));
  std::sort(expected.rbegin(), expected.rend());
  const auto values = dense_values(dense(G.matrix));
  for (std::size_t k = 0; k < expected.size(); ++k) {
    EXPECT_NEAR(values[k].real(), expected[k], 1e-12);
    EXPECT_NEAR(values[k].imag(), 0.0, 1e-12);
  }
}

TEST(Ulam, Errors) {
  const auto g = planar(2, 2);
  EXPECT_THROW(ulam_generator(g, *constant_field(1, 0), 0.0, -0.1), DomainError);
  const auto rough = std::make_shared<AnalyticField>(
      [](double, double x, double y) { return Vec2(y > 0.3 ? 1.0 : 0.0, 0.0); }, Interval{0, 1});
  try {
    ulam_generator(g, *rough, 0.0, 0.1, {3, 1e-15, 0.0, 4});
    FAIL() << "expected a quadrature failure";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("face"), std::string::npos);
  }
}

TEST(Averaged, SteadyFieldMatchesSlice) {
  const auto g = planar(5, 4);
  const auto steady = frozen(switching_double_gyre(), 0.25);
  const auto a = averaged_generator(g, steady, linspace(0, 1, 5), 0.1);
  const auto b = ulam_generator(g, *steady, 0.0, 0.1);
  EXPECT_EQ(a.label, "averaged");
  EXPECT_LE((dense(a.matrix) - dense(b.matrix)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Averaged, AlternatingDriftCancels) {
  const auto g = planar(4, 2);
  const auto f = std::make_shared<AnalyticField>(
      [](double t, double, double) { return Vec2(std::floor(2 * t) == 0 ? 1.0 : -1.0, 0.0); }, Interval{0, 1});
  // Nodes symmetric about the switch: the trapezoid average vanishes.
  const std::vector<double> times = {0.0, 0.25, 0.75, 1.0};
  const auto a = averaged_generator(g, f, times, 0.2);
  const auto diffusion = ulam_generator(g, *constant_field(0, 0), 0.0, 0.2);
  EXPECT_LE((dense(a.matrix) - dense(diffusion.matrix)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Averaged, GyresHaveOppositeSigns) {
  const auto g = planar(30, 20);
  const auto times = linspace(0, 1, 21);
  const auto G = averaged_generator(g, switching_double_gyre(), times, 0.3);
  const auto s = leading_eigenpairs(G.matrix, 3);
  std::size_t k = 1;
  while (!s.is_real(k)) ++k;
  const auto f = s.vectors.col(static_cast<Eigen::Index>(k)).real();
  EXPECT_LT(f[static_cast<Eigen::Index>(g->locate(0.5, 1.0))] * f[static_cast<Eigen::Index>(g->locate(2.5, 1.0))], 0.0);
}

TEST(Coordinate, RoundTrip) {
  const auto g = planar(4, 3);
  const auto G = ulam_generator(g, *switching_double_gyre(), 0.7, 0.2);
  const auto path = std::filesystem::temp_directory_path() / "infgen_coordinate.txt";
  write_coordinate(G.matrix, path);
  const auto back = read_coordinate(path);
  EXPECT_EQ(back.nonZeros(), G.matrix.nonZeros());
  EXPECT_EQ((dense(back) - dense(G.matrix)).cwiseAbs().maxCoeff(), 0.0);
}
