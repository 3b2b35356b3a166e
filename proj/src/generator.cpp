#include "infgen/generator.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <vector>

#include <boost/math/tools/roots.hpp>

#include "infgen/errors.hpp"

namespace infgen {

namespace {

constexpr int kSignSamples = 16;

double face_flux(const Face& face, const VelocityField& field, double t,
                 const QuadratureOptions& quadrature) {
  const int component = face.normal_axis == Axis::x ? 0 : 1;
  auto normal = [&](double s) {
    const Vec2 v = face.normal_axis == Axis::x ? field.eval(t, face.position, s)
                                               : field.eval(t, s, face.position);
    return face.normal_sign * v[component];
  };
  auto outflow = [&](double s) { return std::max(normal(s), 0.0); };

  // Split at sign changes of the normal component.
  const double lo = face.span.lo, hi = face.span.hi;
  std::vector<double> cuts = {lo};
  double prev_s = lo, prev = normal(lo);
  for (int k = 1; k <= kSignSamples; ++k) {
    const double s = k == kSignSamples ? hi : lo + (hi - lo) * k / kSignSamples;
    const double v = normal(s);
    if ((prev < 0.0 && v > 0.0) || (prev > 0.0 && v < 0.0)) {
      std::uintmax_t iterations = 100;
      const auto root = boost::math::tools::toms748_solve(normal, prev_s, s, prev, v,
                                                          boost::math::tools::eps_tolerance<double>(52),
                                                          iterations);
      cuts.push_back(0.5 * (root.first + root.second));
    }
    prev_s = s;
    prev = v;
  }
  cuts.push_back(hi);

  double total = 0.0;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    const QuadratureResult r = integrate(outflow, cuts[k], cuts[k + 1], quadrature);
    if (!r.converged)
      throw NumericalError("face quadrature did not converge on face " + std::to_string(face.from) +
                           "->" + std::to_string(face.to) + " (error estimate " +
                           std::to_string(r.error) + ")");
    total += r.value;
  }
  return face.scale * total;
}

}  // namespace

GeneratorMatrix ulam_generator(std::shared_ptr<const Grid> grid, const VelocityField& field,
                               double t, double epsilon, const QuadratureOptions& quadrature) {
  if (!grid) throw DomainError("generator needs a grid");
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw DomainError("epsilon must be >= 0");

  const std::size_t n = grid->size();
  const double diffusion = 0.5 * epsilon * epsilon;
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(grid->faces().size() + n);

  for (std::size_t i = 0; i < n; ++i) {
    const Box& bi = grid->box(i);
    double diagonal = 0.0;
    for (const Face& face : grid->faces_of(i)) {
      const Box& bj = grid->box(face.to);
      const double side = face.normal_axis == Axis::x ? bi.len_x : bi.len_y;
      const double rate =
          face_flux(face, field, t, quadrature) / bj.area + diffusion / (side * side);
      triplets.emplace_back(static_cast<int>(i), static_cast<int>(face.to), rate);
      diagonal -= (bj.area / bi.area) * rate;
    }
    triplets.emplace_back(static_cast<int>(i), static_cast<int>(i), diagonal);
  }

  GeneratorMatrix g;
  g.matrix.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  g.matrix.setFromTriplets(triplets.begin(), triplets.end());
  g.matrix.makeCompressed();
  g.label = "t=" + std::to_string(t);
  g.epsilon = epsilon;
  g.grid = std::move(grid);
  return g;
}

GeneratorMatrix averaged_generator(std::shared_ptr<const Grid> grid, FieldPtr field,
                                   std::span<const double> times, double epsilon,
                                   const QuadratureOptions& quadrature) {
  const FieldPtr mean = time_average(std::move(field), times);
  GeneratorMatrix g = ulam_generator(std::move(grid), *mean, times.front(), epsilon, quadrature);
  g.label = "averaged";
  return g;
}

void write_coordinate(const SparseMatrix& matrix, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << matrix.rows() << ' ' << matrix.nonZeros() << '\n';
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (Eigen::Index r = 0; r < matrix.outerSize(); ++r)
    for (SparseMatrix::InnerIterator it(matrix, r); it; ++it)
      out << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
  if (!out) throw IoError("short write to " + path.string());
}

SparseMatrix read_coordinate(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  Eigen::Index n = 0, nnz = 0;
  if (!(in >> n >> nnz) || n < 0 || nnz < 0) throw IoError("bad coordinate header in " + path.string());
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(nnz));
  for (Eigen::Index k = 0; k < nnz; ++k) {
    Eigen::Index r, c;
    double v;
    if (!(in >> r >> c >> v) || r < 0 || c < 0 || r >= n || c >= n)
      throw IoError("bad coordinate entry in " + path.string());
    triplets.emplace_back(static_cast<int>(r), static_cast<int>(c), v);
  }
  SparseMatrix m(n, n);
  m.setFromTriplets(triplets.begin(), triplets.end());
  return m;
}

}  // namespace infgen
