#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"

#include "infgen/errors.hpp"
#include "infgen/generator.hpp"
#include "infgen/grid.hpp"
#include "infgen/quadrature.hpp"
#include "infgen/seba.hpp"
#include "infgen/spectrum.hpp"
#include "infgen/velocity.hpp"

namespace infgen {

using Json = nlohmann::json;

inline constexpr const char* kVersion = "1.0.0";

enum class Mode { inflated, averaged };

struct VelocitySpec {
  std::string source = "builtin";  // builtin | vgrid
  std::string name;                // builtin name
  std::filesystem::path path;      // vgrid manifest or csv, resolved against the config directory
  Json params = Json::object();
};

/// Parsed run configuration (JSON, "version": 1). Calendar timestamps are
/// converted to days since 1970-01-01.
struct RunConfig {
  Json raw;
  std::filesystem::path base = ".";

  Geometry geometry = Geometry::planar;
  Interval x_range;
  Interval y_range;
  double earth_radius = kEarthRadius;
  std::size_t nx = 0;
  std::size_t ny = 0;

  double t_start = 0.0;
  double t_end = 1.0;
  std::size_t steps = 0;  // T; there are T + 1 nodes
  bool calendar = false;

  VelocitySpec velocity;
  std::optional<double> epsilon;  // empty = heuristic
  std::optional<double> a;
  Mode mode = Mode::inflated;
  QuadratureOptions quadrature;

  int eigen_count = 10;
  EigenOptions eigen;
  ClassifyOptions classify;

  std::vector<int> seba_vectors;  // 1-based; empty = no SEBA
  std::optional<double> seba_mu;
  double cutoff = 0.1;

  std::filesystem::path output = "run";
  std::optional<std::vector<std::size_t>> export_times;

  static RunConfig from_json(const Json& j, const std::filesystem::path& base = ".");
  static RunConfig load(const std::filesystem::path& path);

  std::vector<double> times() const;
  double tau() const { return t_end - t_start; }
  double h() const { return tau() / static_cast<double>(steps); }
};

/// Days since 1970-01-01 for "YYYY-MM-DD" or "YYYY-MM-DDTHH:MM[:SS][Z]".
double parse_timestamp(const std::string& text);

std::shared_ptr<const Grid> make_grid(const RunConfig& config);
FieldPtr make_field(const RunConfig& config);

struct Resolved {
  double median_speed = 0.0;
  double median_side = 0.0;
  double longest_extent = 0.0;
  double epsilon = 0.0;
  double epsilon_total = 0.0;
  double a = 0.0;
  std::optional<double> a_heuristic;
  std::optional<double> a_heuristic_seconds;  // tau in seconds, spherical runs only
  double h = 0.0;
  double tau = 0.0;
  std::size_t n_t = 0;
};

struct RunResult {
  std::shared_ptr<const Grid> grid;
  std::vector<double> times;  // one entry per exported fibre
  Resolved resolved;
  SparseMatrix matrix;
  EigenSolution solution;
  std::vector<Classification> classes;
  std::optional<SebaBasis> seba;
  std::vector<Family> families;
  Json manifest;
  Json timings;
};

enum class StopAfter { classification, everything };

/// Raised by the pipeline and the run-directory commands; names the failing
/// stage and carries the process exit code.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what, int exit_code)
      : Error("stage " + stage + ": " + what), stage_(std::move(stage)), code_(exit_code) {}
  const std::string& stage() const noexcept { return stage_; }
  int exit_code() const noexcept { return code_; }

 private:
  std::string stage_;
  int code_;
};

/// 2 for configuration and domain errors, 3 for numerical failures, 4 for I/O.
int exit_code_for(const std::exception& e);

RunResult run_pipeline(const RunConfig& config, StopAfter stop = StopAfter::everything);

/// Indices (0-based) of the vectors that may enter SEBA; throws ConfigError
/// for temporal or complex ones.
void check_seba_candidates(std::span<const int> indices, std::span<const Classification> classes);

struct RunData {
  Json manifest;
  std::shared_ptr<const Grid> grid;
  std::vector<double> times;
  std::vector<std::complex<double>> values;
  Eigen::MatrixXcd vectors;
  std::vector<Classification> classes;
};

RunData load_run(const std::filesystem::path& dir);

struct SebaRun {
  SebaBasis basis;
  std::vector<Family> families;
};

/// SEBA on stored eigenvectors of a finished run; writes seba.bin, the
/// seba_NNN exports and families.json.
SebaRun seba_from_run(const std::filesystem::path& dir, std::span<const int> indices,
                      std::optional<double> mu, double cutoff);

/// Exports one stored vector ("vec:2" or "seba:1") at the given fibres
/// (all when empty). Returns the CSV path.
std::filesystem::path export_selection(const std::filesystem::path& dir, const std::string& selection,
                                       std::span<const std::size_t> fibres);

/// One CSV row per (fibre, box) with columns t,x,y,value (t,lon,lat,value in
/// spherical mode) plus a JSON sidecar with the same stem.
void export_field(const Eigen::VectorXd& values, const Grid& grid, std::span<const double> times,
                  std::span<const std::size_t> fibres, const std::filesystem::path& csv,
                  const Json& sidecar);

struct FieldTable {
  std::vector<double> t, x, y, value;
};
FieldTable read_field_csv(const std::filesystem::path& csv);

/// Column-major little-endian float64 blocks; the shape lives in the manifest.
void write_doubles(const std::filesystem::path& path, std::span<const double> data);
std::vector<double> read_doubles(const std::filesystem::path& path, std::size_t count);

}  // namespace infgen
