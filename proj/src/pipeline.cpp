#include "infgen/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <regex>
#include <sstream>
#include <thread>

#include "infgen/inflated.hpp"

namespace infgen {

namespace fs = std::filesystem;

namespace {

const char* to_string(Geometry g) { return g == Geometry::planar ? "planar" : "spherical"; }

template <typename T>
T need(const Json& j, const char* key, const char* where) {
  if (!j.contains(key)) throw ConfigError(std::string(where) + "." + key + " is required");
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw ConfigError(std::string(where) + "." + key + " has the wrong type");
  }
}

template <typename T>
T maybe(const Json& j, const char* key, T fallback, const char* where) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  return need<T>(j, key, where);
}

Interval range(const Json& j, const char* key) {
  const auto v = need<std::vector<double>>(j, key, "domain");
  if (v.size() != 2) throw ConfigError(std::string("domain.") + key + " needs two numbers");
  return {v[0], v[1]};
}

std::optional<double> auto_or_value(const Json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  const Json& v = j.at(key);
  if (v.is_string()) {
    if (v.get<std::string>() == "auto") return std::nullopt;
    throw ConfigError(std::string(key) + " must be \"auto\" or a number");
  }
  if (!v.is_number()) throw ConfigError(std::string(key) + " must be \"auto\" or a number");
  return v.get<double>();
}

double time_value(const Json& v, bool& calendar, const char* key) {
  if (v.is_string()) {
    calendar = true;
    return parse_timestamp(v.get<std::string>());
  }
  if (!v.is_number()) throw ConfigError(std::string("time.") + key + " must be a number or ISO-8601 timestamp");
  return v.get<double>();
}

std::string format_double(double x) {
  std::ostringstream s;
  s << std::setprecision(std::numeric_limits<double>::max_digits10) << x;
  return s.str();
}

std::string numbered(const char* stem, std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%03zu", stem, k);
  return buf;
}

// Removes exports named <stem>_NNN.csv / .json left by an earlier run.
void clear_numbered(const fs::path& dir, const std::string& stem) {
  if (!fs::is_directory(dir)) return;
  static const std::regex pattern(R"((vec|seba)_[0-9]{3}\.(csv|json))");
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, pattern) && name.starts_with(stem + "_")) fs::remove(entry.path());
  }
}

void write_json(const fs::path& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("short write to " + path.string());
}

Json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw IoError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

Json grid_json(const Grid& grid) {
  return {{"geometry", to_string(grid.geometry())},
          {"x_range", {grid.x_range().lo, grid.x_range().hi}},
          {"y_range", {grid.y_range().lo, grid.y_range().hi}},
          {"nx", grid.nx()},
          {"ny", grid.ny()},
          {"N", grid.size()}};
}

Json complex_json(std::complex<double> z) { return {z.real(), z.imag()}; }

class RotatingCell final : public VelocityField {
 public:
  RotatingCell(Interval x, Interval y, Interval t, double speed, VelocityUnits units)
      : x_(x), y_(y), t_(t), speed_(speed), units_(units) {}

  Interval time_domain() const override { return t_; }
  VelocityUnits units() const override { return units_; }

 protected:
  Vec2 evaluate(double t, double x, double y) const override {
    const double pi = std::numbers::pi;
    const double xi = (x - x_.lo) / x_.width();
    const double eta = (y - y_.lo) / y_.width();
    const double s = speed_ * (1.0 + 0.25 * std::sin(2.0 * pi * (t - t_.lo) / std::max(t_.width(), 1e-300)));
    return {-s * std::sin(pi * xi) * std::cos(pi * eta), s * std::cos(pi * xi) * std::sin(pi * eta)};
  }

 private:
  Interval x_, y_, t_;
  double speed_;
  VelocityUnits units_;
};

std::vector<GeneratorMatrix> assemble_slices(std::shared_ptr<const Grid> grid, const VelocityField& field,
                                             std::span<const double> times, double epsilon,
                                             const QuadratureOptions& quadrature) {
  std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("INFGEN_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap >= 1) threads = std::min(threads, static_cast<std::size_t>(cap));
  }
  threads = std::min(threads, times.size());

  std::vector<GeneratorMatrix> slices(times.size());
  std::vector<std::exception_ptr> errors(times.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t l = next++; l < times.size(); l = next++) {
      try {
        slices[l] = ulam_generator(grid, field, times[l], epsilon, quadrature);
      } catch (...) {
        errors[l] = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t k = 0; k < threads; ++k) pool.emplace_back(worker);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return slices;
}

Json spectrum_json(const EigenSolution& s, std::span<const Classification> classes) {
  Json out = Json::array();
  for (std::size_t j = 0; j < s.size(); ++j) {
    out.push_back({{"index", j + 1},
                   {"re", s.values[j].real()},
                   {"im", s.values[j].imag()},
                   {"class", to_string(classes[j].cls)},
                   {"residual", s.residuals[j]},
                   {"fibre_std_max", classes[j].fibre_std_max},
                   {"integral_variance", classes[j].integral_variance}});
  }
  return out;
}

Json families_json(const std::vector<Family>& families, std::span<const double> times, double cutoff,
                   const Grid& grid) {
  Json list = Json::array();
  for (std::size_t k = 0; k < families.size(); ++k) {
    const Family& f = families[k];
    Json item = {{"family", k + 1}, {"areas", f.areas}, {"support_change", support_changes(f, grid)}};
    item["birth"] = f.birth ? Json(*f.birth) : Json("none");
    item["death"] = f.death ? Json(*f.death) : Json("none");
    item["birth_time"] = f.birth ? Json(times[*f.birth]) : Json(nullptr);
    item["death_time"] = f.death ? Json(times[*f.death]) : Json(nullptr);
    list.push_back(std::move(item));
  }
  return {{"cutoff", cutoff}, {"families", list}};
}

void write_seba_artifacts(const fs::path& dir, const SebaBasis& basis, const std::vector<Family>& families,
                          const Grid& grid, std::span<const double> times, std::span<const int> indices,
                          double cutoff, std::span<const std::size_t> fibres) {
  clear_numbered(dir, "seba");
  write_doubles(dir / "seba.bin", std::span<const double>(basis.vectors.data(),
                                                          static_cast<std::size_t>(basis.vectors.size())));
  for (Eigen::Index j = 0; j < basis.vectors.cols(); ++j) {
    const std::string stem = numbered("seba", static_cast<std::size_t>(j) + 1);
    Json side = {{"kind", "seba"},
                 {"index", j + 1},
                 {"inputs", indices},
                 {"minimum", basis.minima[j]},
                 {"cutoff", cutoff},
                 {"grid", grid_json(grid)}};
    export_field(basis.vectors.col(j), grid, times, fibres, dir / (stem + ".csv"), side);
  }
  write_json(dir / "families.json", families_json(families, times, cutoff, grid));
}

Json seba_json(const SebaBasis& basis, std::span<const int> indices, double cutoff) {
  return {{"inputs", indices},
          {"mu", basis.mu},
          {"iterations", basis.iterations},
          {"converged", basis.converged},
          {"cutoff", cutoff},
          {"minima", std::vector<double>(basis.minima.data(), basis.minima.data() + basis.minima.size())},
          {"shape", {basis.vectors.rows(), basis.vectors.cols()}},
          {"file", "seba.bin"}};
}

std::vector<std::size_t> all_fibres(std::size_t n) {
  std::vector<std::size_t> f(n);
  for (std::size_t l = 0; l < n; ++l) f[l] = l;
  return f;
}

}  // namespace

double parse_timestamp(const std::string& text) {
  int y = 0, mo = 0, d = 0, hh = 0, mm = 0;
  double ss = 0.0;
  int consumed = 0;
  const int fields = std::sscanf(text.c_str(), "%4d-%2d-%2d%n", &y, &mo, &d, &consumed);
  if (fields != 3) throw ConfigError("bad timestamp '" + text + "'");
  std::string rest = text.substr(static_cast<std::size_t>(consumed));
  if (!rest.empty()) {
    if (rest.back() == 'Z') rest.pop_back();
    int used = 0;
    if (rest.size() < 6 || (rest[0] != 'T' && rest[0] != ' ') ||
        std::sscanf(rest.c_str() + 1, "%2d:%2d%n", &hh, &mm, &used) != 2)
      throw ConfigError("bad timestamp '" + text + "'");
    const std::string tail = rest.substr(1 + static_cast<std::size_t>(used));
    if (!tail.empty()) {
      char* end = nullptr;
      if (tail[0] != ':') throw ConfigError("bad timestamp '" + text + "'");
      ss = std::strtod(tail.c_str() + 1, &end);
      if (*end != '\0') throw ConfigError("bad timestamp '" + text + "'");
    }
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(mo)},
                                        std::chrono::day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || hh > 23 || mm > 59 || ss < 0.0 || ss >= 61.0)
    throw ConfigError("bad timestamp '" + text + "'");
  const double days = static_cast<double>(std::chrono::sys_days{ymd}.time_since_epoch().count());
  return days + (hh * 3600.0 + mm * 60.0 + ss) / 86400.0;
}

RunConfig RunConfig::from_json(const Json& j, const fs::path& base) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::vector<std::string> known = {"version", "domain", "grid", "time", "velocity", "epsilon", "a",
                                                 "mode", "quadrature", "eigen", "classify", "seba", "output"};
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError("unknown config key '" + key + "'");
  if (maybe<int>(j, "version", 1, "config") != 1) throw ConfigError("unsupported config version");

  RunConfig c;
  c.raw = j;
  c.base = base;

  const Json& domain = j.contains("domain") ? j.at("domain") : throw ConfigError("domain is required");
  const auto geometry = maybe<std::string>(domain, "geometry", "planar", "domain");
  if (geometry == "planar") c.geometry = Geometry::planar;
  else if (geometry == "spherical") c.geometry = Geometry::spherical;
  else throw ConfigError("domain.geometry must be planar or spherical");
  c.x_range = range(domain, "x_range");
  c.y_range = range(domain, "y_range");
  c.earth_radius = maybe<double>(domain, "earth_radius", kEarthRadius, "domain");

  const Json& grid = j.contains("grid") ? j.at("grid") : throw ConfigError("grid is required");
  const int nx = need<int>(grid, "nx", "grid");
  const int ny = need<int>(grid, "ny", "grid");
  if (nx < 1 || ny < 1) throw ConfigError("grid.nx and grid.ny must be >= 1");
  c.nx = static_cast<std::size_t>(nx);
  c.ny = static_cast<std::size_t>(ny);

  const Json& time = j.contains("time") ? j.at("time") : throw ConfigError("time is required");
  if (!time.contains("start") || !time.contains("end")) throw ConfigError("time.start and time.end are required");
  bool cal_start = false, cal_end = false;
  c.t_start = time_value(time.at("start"), cal_start, "start");
  c.t_end = time_value(time.at("end"), cal_end, "end");
  if (cal_start != cal_end) throw ConfigError("time.start and time.end must both be timestamps or both numbers");
  c.calendar = cal_start;
  if (!(c.t_end > c.t_start)) throw ConfigError("time.end must be after time.start");
  if (time.contains("steps")) {
    const int steps = need<int>(time, "steps", "time");
    if (steps < 1) throw ConfigError("time.steps must be >= 1");
    c.steps = static_cast<std::size_t>(steps);
  } else if (time.contains("step")) {
    const double step = need<double>(time, "step", "time");
    if (!(step > 0.0)) throw ConfigError("time.step must be > 0");
    const double count = c.tau() / step;
    const double rounded = std::round(count);
    if (rounded < 1.0 || std::abs(count - rounded) > 1e-9 * std::max(1.0, count))
      throw ConfigError("time.step must divide the time interval");
    c.steps = static_cast<std::size_t>(rounded);
  } else {
    throw ConfigError("time needs steps or step");
  }

  const Json& vel = j.contains("velocity") ? j.at("velocity") : throw ConfigError("velocity is required");
  c.velocity.source = maybe<std::string>(vel, "source", "builtin", "velocity");
  if (c.velocity.source == "builtin") {
    c.velocity.name = need<std::string>(vel, "name", "velocity");
    static const std::vector<std::string> builtins = {"switching_double_gyre", "rotating_cell", "still", "uniform"};
    if (std::find(builtins.begin(), builtins.end(), c.velocity.name) == builtins.end())
      throw ConfigError("unknown builtin velocity '" + c.velocity.name + "'");
  } else if (c.velocity.source == "vgrid") {
    c.velocity.path = base / need<std::string>(vel, "path", "velocity");
    if (!fs::exists(c.velocity.path)) throw ConfigError("velocity file " + c.velocity.path.string() + " does not exist");
  } else {
    throw ConfigError("velocity.source must be builtin or vgrid");
  }
  if (vel.contains("params")) {
    if (!vel.at("params").is_object()) throw ConfigError("velocity.params must be an object");
    c.velocity.params = vel.at("params");
  }

  c.epsilon = auto_or_value(j, "epsilon");
  c.a = auto_or_value(j, "a");
  if (c.epsilon && *c.epsilon < 0.0) throw ConfigError("epsilon must be >= 0");
  if (c.a && *c.a < 0.0) throw ConfigError("a must be >= 0");

  const auto mode = maybe<std::string>(j, "mode", "inflated", "config");
  if (mode == "inflated") c.mode = Mode::inflated;
  else if (mode == "averaged") c.mode = Mode::averaged;
  else throw ConfigError("mode must be inflated or averaged");

  if (j.contains("quadrature")) {
    const Json& q = j.at("quadrature");
    c.quadrature.nodes = maybe<int>(q, "nodes", c.quadrature.nodes, "quadrature");
    c.quadrature.abs_tol = maybe<double>(q, "abs_tol", c.quadrature.abs_tol, "quadrature");
    c.quadrature.rel_tol = maybe<double>(q, "rel_tol", c.quadrature.rel_tol, "quadrature");
    c.quadrature.max_panels = maybe<int>(q, "max_panels", c.quadrature.max_panels, "quadrature");
    if (c.quadrature.nodes < 1 || c.quadrature.max_panels < 1) throw ConfigError("bad quadrature settings");
  }

  if (j.contains("eigen")) {
    const Json& e = j.at("eigen");
    c.eigen_count = maybe<int>(e, "count", c.eigen_count, "eigen");
    c.eigen.tol = maybe<double>(e, "tol", c.eigen.tol, "eigen");
    c.eigen.seed = maybe<unsigned>(e, "seed", c.eigen.seed, "eigen");
    c.eigen.extra = maybe<int>(e, "extra", c.eigen.extra, "eigen");
    c.eigen.max_iterations = maybe<int>(e, "max_iterations", c.eigen.max_iterations, "eigen");
    if (e.contains("shift") && !e.at("shift").is_null()) c.eigen.shift = need<double>(e, "shift", "eigen");
  }
  if (c.eigen_count < 1) throw ConfigError("eigen.count must be >= 1");
  if (!(c.eigen.tol > 0.0)) throw ConfigError("eigen.tol must be > 0");

  if (j.contains("classify")) {
    const Json& k = j.at("classify");
    c.classify.temporal_threshold = maybe<double>(k, "temporal_threshold", c.classify.temporal_threshold, "classify");
    c.classify.imag_tol = maybe<double>(k, "imag_tol", c.classify.imag_tol, "classify");
  }

  if (j.contains("seba")) {
    const Json& s = j.at("seba");
    c.seba_vectors = maybe<std::vector<int>>(s, "vectors", {}, "seba");
    if (s.contains("mu") && !s.at("mu").is_null()) c.seba_mu = need<double>(s, "mu", "seba");
    c.cutoff = maybe<double>(s, "cutoff", c.cutoff, "seba");
    for (int v : c.seba_vectors)
      if (v < 1 || v > c.eigen_count) throw ConfigError("seba.vectors entries must lie in 1..eigen.count");
    if (!(c.cutoff >= 0.0 && c.cutoff < 1.0)) throw ConfigError("seba.cutoff must lie in [0, 1)");
  }

  if (j.contains("output")) {
    const Json& o = j.at("output");
    c.output = base / maybe<std::string>(o, "directory", "run", "output");
    if (o.contains("export_times") && !o.at("export_times").is_null() &&
        !(o.at("export_times").is_string() && o.at("export_times").get<std::string>() == "all")) {
      c.export_times = need<std::vector<std::size_t>>(o, "export_times", "output");
      for (std::size_t l : *c.export_times)
        if (l > c.steps) throw ConfigError("output.export_times index out of range");
    }
  } else {
    c.output = base / "run";
  }
  return c;
}

RunConfig RunConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j, path.parent_path().empty() ? fs::path(".") : path.parent_path());
}

std::vector<double> RunConfig::times() const {
  std::vector<double> t(steps + 1);
  for (std::size_t l = 0; l <= steps; ++l)
    t[l] = l == steps ? t_end : t_start + static_cast<double>(l) * h();
  return t;
}

std::shared_ptr<const Grid> make_grid(const RunConfig& c) {
  return std::make_shared<const Grid>(build_grid(c.geometry, c.x_range, c.y_range, c.nx, c.ny, c.earth_radius));
}

FieldPtr make_field(const RunConfig& c) {
  if (c.velocity.source == "vgrid") return load_gridded(c.velocity.path);
  const Json& p = c.velocity.params;
  const Interval span{c.t_start, c.t_end};
  const VelocityUnits units =
      c.geometry == Geometry::spherical ? VelocityUnits::metres_per_second : VelocityUnits::nondimensional;
  if (c.velocity.name == "switching_double_gyre")
    return switching_double_gyre(maybe<double>(p, "amplitude", kDoubleGyreAmplitude, "velocity.params"));
  if (c.velocity.name == "rotating_cell")
    return std::make_shared<RotatingCell>(c.x_range, c.y_range, span,
                                          maybe<double>(p, "speed", 10.0, "velocity.params"), units);
  if (c.velocity.name == "uniform") {
    const Vec2 v(maybe<double>(p, "u", 0.0, "velocity.params"), maybe<double>(p, "v", 0.0, "velocity.params"));
    return std::make_shared<AnalyticField>([v](double, double, double) { return v; }, span, true, units);
  }
  return std::make_shared<AnalyticField>([](double, double, double) { return Vec2::Zero().eval(); }, span, true,
                                         units);
}

int exit_code_for(const std::exception& e) {
  if (const auto* s = dynamic_cast<const StageError*>(&e)) return s->exit_code();
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const DomainError*>(&e)) return 2;
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const IngestionError*>(&e)) return 4;
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return 4;
  return 3;
}

void check_seba_candidates(std::span<const int> indices, std::span<const Classification> classes) {
  if (indices.empty()) throw ConfigError("SEBA needs at least one vector index");
  for (int k : indices) {
    if (k < 1 || static_cast<std::size_t>(k) > classes.size())
      throw ConfigError("vector index " + std::to_string(k) + " is out of range");
    const EigenClass cls = classes[static_cast<std::size_t>(k) - 1].cls;
    if (cls != EigenClass::trivial && cls != EigenClass::spatial_real)
      throw ConfigError("vector " + std::to_string(k) + " is " + to_string(cls) +
                        "; SEBA takes only the trivial and real spatial vectors");
  }
}

RunResult run_pipeline(const RunConfig& config, StopAfter stop) {
  using Clock = std::chrono::steady_clock;
  RunResult r;
  std::string stage = "setup";
  Json timings = Json::object();
  auto clock = Clock::now();
  auto lap = [&](const std::string& name) {
    const auto now = Clock::now();
    timings[name] = std::chrono::duration<double>(now - clock).count();
    clock = now;
  };

  const fs::path dir = config.output;
  Json& m = r.manifest;
  m = {{"schema", "infgen-run/1"}, {"version", kVersion}, {"status", "running"}, {"config", config.raw}};

  try {
    stage = "output";
    fs::create_directories(dir);
    clear_numbered(dir, "vec");
    clear_numbered(dir, "seba");
    for (const char* stale : {"seba.bin", "families.json"}) fs::remove(dir / stale);

    stage = "grid";
    r.grid = make_grid(config);
    const Grid& grid = *r.grid;

    stage = "velocity";
    const FieldPtr field = make_field(config);
    const std::vector<double> nodes = config.times();
    lap("setup");

    stage = "heuristics";
    Resolved& res = r.resolved;
    res.n_t = nodes.size();
    res.h = config.h();
    res.tau = config.tau();
    res.median_speed = median_speed(*field, grid, nodes);
    res.median_side = median_side_length(grid);
    res.longest_extent = longest_domain_extent(grid);
    res.epsilon_total = epsilon_total(res.median_speed, res.median_side);
    res.epsilon = config.epsilon.value_or(epsilon_heuristic(res.median_speed, res.median_side));
    if (res.median_speed > 0.0) {
      res.a_heuristic = a_heuristic(res.tau, res.median_speed, res.median_side, res.longest_extent);
      if (grid.geometry() == Geometry::spherical)
        res.a_heuristic_seconds = a_heuristic(res.tau * 86400.0, res.median_speed, res.median_side, res.longest_extent);
    }
    if (config.a) {
      res.a = *config.a;
    } else if (res.a_heuristic) {
      res.a = *res.a_heuristic;
    } else {
      throw ConfigError("a = \"auto\" needs a nonzero median speed");
    }
    Json resolved = {{"median_speed", res.median_speed},
                     {"median_side", res.median_side},
                     {"longest_extent", res.longest_extent},
                     {"epsilon", res.epsilon},
                     {"epsilon_source", config.epsilon ? "config" : "heuristic"},
                     {"epsilon_total", res.epsilon_total},
                     {"a", res.a},
                     {"a_source", config.a ? "config" : "heuristic"},
                     {"h", res.h},
                     {"tau", res.tau},
                     {"n_t", res.n_t},
                     {"N", grid.size()},
                     {"times", nodes},
                     {"time_units", grid.geometry() == Geometry::spherical ? "days" : "model"},
                     {"velocity_units", to_string(field->units())},
                     {"mode", config.mode == Mode::inflated ? "inflated" : "averaged"}};
    if (res.a_heuristic) resolved["a_heuristic"] = *res.a_heuristic;
    if (res.a_heuristic_seconds) {
      resolved["a_heuristic_convention"] = "tau in days, speeds in m/s, lengths in m";
      resolved["a_heuristic_tau_seconds"] = *res.a_heuristic_seconds;
    }
    m["resolved"] = resolved;
    lap("heuristics");

    stage = "assembly";
    std::size_t n_t = nodes.size();
    if (config.mode == Mode::inflated) {
      const auto slices = assemble_slices(r.grid, *field, nodes, res.epsilon, config.quadrature);
      r.matrix = assemble(slices, res.a, res.h).matrix;
      r.times = nodes;
    } else {
      r.matrix = averaged_generator(r.grid, field, nodes, res.epsilon, config.quadrature).matrix;
      r.times = {nodes.front()};
      n_t = 1;
    }
    m["matrix"] = {{"size", r.matrix.rows()}, {"nnz", r.matrix.nonZeros()}};
    lap("assembly");

    stage = "eigensolve";
    if (static_cast<Eigen::Index>(config.eigen_count) > r.matrix.rows())
      throw ConfigError("eigen.count exceeds the matrix dimension " + std::to_string(r.matrix.rows()));
    const Eigen::VectorXd areas = grid.areas();
    r.solution = function_side_eigenpairs(r.matrix, areas, config.eigen_count, config.eigen);
    for (std::size_t j = 0; j < r.solution.size(); ++j) {
      const double bound = config.eigen.tol * r.solution.matrix_norm;
      if (!(r.solution.residuals[j] <= std::max(bound, 1e-12 * r.solution.matrix_norm)))
        throw NumericalError("eigenpair " + std::to_string(j + 1) + " residual " +
                             format_double(r.solution.residuals[j]) + " exceeds tol * ||A||_F = " +
                             format_double(bound));
    }
    lap("eigensolve");

    stage = "classification";
    r.classes = classify(r.solution, grid.size(), n_t, areas, config.classify);
    m["eigen"] = {{"method", r.solution.method},
                  {"shift", r.solution.shift},
                  {"iterations", r.solution.iterations},
                  {"matrix_norm", r.solution.matrix_norm},
                  {"seed", config.eigen.seed},
                  {"tol", config.eigen.tol},
                  {"side", grid.uniform() ? "right eigenvectors" : "D^-1 G D right eigenvectors"},
                  {"shape", {r.solution.vectors.rows(), r.solution.vectors.cols()}},
                  {"file", "eigenvectors.bin"}};
    m["spectrum"] = spectrum_json(r.solution, r.classes);
    if (config.mode == Mode::inflated) {
      Json match = {{"continuous", temporal_eigenvalue(res.a, res.tau, 1)},
                    {"discrete", discrete_temporal_eigenvalue(res.a, res.h, n_t, 1)}};
      std::optional<double> temporal, spatial;
      for (std::size_t j = 0; j < r.classes.size(); ++j) {
        const EigenClass cls = r.classes[j].cls;
        if (cls == EigenClass::temporal && !temporal) temporal = r.solution.values[j].real();
        if ((cls == EigenClass::spatial_real || cls == EigenClass::spatial_complex) && !spatial)
          spatial = r.solution.values[j].real();
      }
      match["leading_temporal"] = temporal ? Json(*temporal) : Json(nullptr);
      match["leading_spatial"] = spatial ? Json(*spatial) : Json(nullptr);
      match["gap"] = temporal && spatial ? Json(std::abs(*temporal - *spatial)) : Json(nullptr);
      m["temporal_matching"] = match;
    }
    write_spectrum_csv(r.solution, r.classes, dir / "spectrum.csv");
    {
      std::vector<double> flat(static_cast<std::size_t>(r.solution.vectors.size()) * 2);
      const Eigen::MatrixXd re = r.solution.vectors.real();
      const Eigen::MatrixXd im = r.solution.vectors.imag();
      std::copy(re.data(), re.data() + re.size(), flat.begin());
      std::copy(im.data(), im.data() + im.size(), flat.begin() + re.size());
      write_doubles(dir / "eigenvectors.bin", flat);
    }
    lap("classification");

    if (stop == StopAfter::everything) {
      stage = "export";
      const std::vector<std::size_t> fibres =
          config.export_times && config.mode == Mode::inflated ? *config.export_times : all_fibres(n_t);
      for (std::size_t j = 0; j < r.solution.size(); ++j) {
        const std::string stem = numbered("vec", j + 1);
        Json side = {{"kind", "eigenvector"},
                     {"index", j + 1},
                     {"eigenvalue", complex_json(r.solution.values[j])},
                     {"class", to_string(r.classes[j].cls)},
                     {"component", "real"},
                     {"normalisation", "sup"},
                     {"cutoff", config.cutoff},
                     {"grid", grid_json(grid)}};
        export_field(sup_normalised(r.solution.vectors.col(static_cast<Eigen::Index>(j))), grid, r.times, fibres,
                     dir / (stem + ".csv"), side);
      }
      lap("export");

      if (!config.seba_vectors.empty()) {
        stage = "seba";
        check_seba_candidates(config.seba_vectors, r.classes);
        Eigen::MatrixXd v(r.solution.vectors.rows(), static_cast<Eigen::Index>(config.seba_vectors.size()));
        for (std::size_t k = 0; k < config.seba_vectors.size(); ++k)
          v.col(static_cast<Eigen::Index>(k)) = r.solution.vectors.col(config.seba_vectors[k] - 1).real();
        SebaOptions opts;
        opts.mu = config.seba_mu;
        opts.seed = config.eigen.seed;
        r.seba = seba(v, opts);
        r.families = extract_families(r.seba->vectors, grid, n_t, config.cutoff);
        write_seba_artifacts(dir, *r.seba, r.families, grid, r.times, config.seba_vectors, config.cutoff, fibres);
        m["seba"] = seba_json(*r.seba, config.seba_vectors, config.cutoff);
        lap("seba");
      }
    } else {
      m["stopped_after"] = "classification";
    }

    m["status"] = "ok";
    write_json(dir / "manifest.json", m);
    r.timings = timings;
    write_json(dir / "timings.json", timings);
  } catch (const std::exception& e) {
    m["status"] = "failed";
    m["failed_stage"] = stage;
    m["error"] = e.what();
    if (stage != "output") {
      try {
        write_json(dir / "manifest.json", m);
        write_json(dir / "timings.json", timings);
      } catch (...) {
      }
    }
    throw StageError(stage, e.what(), exit_code_for(e));
  }
  return r;
}

RunData load_run(const fs::path& dir) {
  RunData d;
  d.manifest = read_json(dir / "manifest.json");
  const Json& m = d.manifest;
  if (m.value("status", "") != "ok") throw IoError("run in " + dir.string() + " did not complete");
  if (!m.contains("eigen") || !m.contains("spectrum") || !m.contains("resolved"))
    throw IoError("manifest in " + dir.string() + " has no spectrum");
  RunConfig config;
  try {
    config = RunConfig::from_json(m.at("config"), dir);
  } catch (const ConfigError&) {
    // Input files may have moved since the run; only the grid is needed here.
    Json j = m.at("config");
    j["velocity"] = {{"source", "builtin"}, {"name", "still"}};
    config = RunConfig::from_json(j, dir);
  }
  d.grid = make_grid(config);
  const bool averaged = m.at("resolved").value("mode", "inflated") == "averaged";
  const auto nodes = m.at("resolved").at("times").get<std::vector<double>>();
  d.times = averaged ? std::vector<double>{nodes.front()} : nodes;

  const auto shape = m.at("eigen").at("shape").get<std::vector<std::size_t>>();
  if (shape.size() != 2 || shape[0] != d.grid->size() * d.times.size())
    throw IoError("eigenvector shape in manifest does not match the grid");
  const std::size_t count = shape[0] * shape[1];
  const auto flat = read_doubles(dir / "eigenvectors.bin", 2 * count);
  const auto rows = static_cast<Eigen::Index>(shape[0]);
  const auto cols = static_cast<Eigen::Index>(shape[1]);
  d.vectors.resize(rows, cols);
  d.vectors.real() = Eigen::Map<const Eigen::MatrixXd>(flat.data(), rows, cols);
  d.vectors.imag() = Eigen::Map<const Eigen::MatrixXd>(flat.data() + count, rows, cols);

  static const std::vector<std::pair<std::string, EigenClass>> names = {
      {"trivial", EigenClass::trivial},
      {"temporal", EigenClass::temporal},
      {"spatial-real", EigenClass::spatial_real},
      {"spatial-complex", EigenClass::spatial_complex}};
  for (const Json& row : m.at("spectrum")) {
    d.values.emplace_back(row.at("re").get<double>(), row.at("im").get<double>());
    Classification c;
    const auto name = row.at("class").get<std::string>();
    const auto it = std::find_if(names.begin(), names.end(), [&](const auto& p) { return p.first == name; });
    if (it == names.end()) throw IoError("unknown class '" + name + "' in manifest");
    c.cls = it->second;
    c.fibre_std_max = row.value("fibre_std_max", 0.0);
    c.integral_variance = row.value("integral_variance", 0.0);
    d.classes.push_back(c);
  }
  if (d.values.size() != shape[1]) throw IoError("spectrum and eigenvector counts differ in manifest");
  return d;
}

SebaRun seba_from_run(const fs::path& dir, std::span<const int> indices, std::optional<double> mu, double cutoff) {
  std::string stage = "load";
  try {
    RunData d = load_run(dir);
    stage = "seba";
    check_seba_candidates(indices, d.classes);
    if (!(cutoff >= 0.0 && cutoff < 1.0)) throw ConfigError("cutoff must lie in [0, 1)");
    Eigen::MatrixXd v(d.vectors.rows(), static_cast<Eigen::Index>(indices.size()));
    for (std::size_t k = 0; k < indices.size(); ++k)
      v.col(static_cast<Eigen::Index>(k)) = d.vectors.col(indices[k] - 1).real();
    SebaOptions opts;
    opts.mu = mu;
    opts.seed = d.manifest.at("eigen").value("seed", 42u);
    SebaRun out;
    out.basis = seba(v, opts);
    out.families = extract_families(out.basis.vectors, *d.grid, d.times.size(), cutoff);
    stage = "export";
    write_seba_artifacts(dir, out.basis, out.families, *d.grid, d.times, indices, cutoff,
                         all_fibres(d.times.size()));
    d.manifest["seba"] = seba_json(out.basis, indices, cutoff);
    write_json(dir / "manifest.json", d.manifest);
    return out;
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what(), exit_code_for(e));
  }
}

fs::path export_selection(const fs::path& dir, const std::string& selection, std::span<const std::size_t> fibres) {
  std::string stage = "load";
  try {
    const auto colon = selection.find(':');
    if (colon == std::string::npos) throw ConfigError("selection must look like vec:2 or seba:1");
    const std::string kind = selection.substr(0, colon);
    std::size_t index = 0;
    try {
      std::size_t used = 0;
      index = std::stoul(selection.substr(colon + 1), &used);
      if (used != selection.size() - colon - 1) throw std::invalid_argument("trailing text");
    } catch (const std::logic_error&) {
      throw ConfigError("bad index in selection '" + selection + "'");
    }
    if (index < 1) throw ConfigError("selection indices start at 1");

    RunData d = load_run(dir);
    for (std::size_t l : fibres)
      if (l >= d.times.size()) throw ConfigError("time fibre t" + std::to_string(l) + " is out of range");
    const std::vector<std::size_t> chosen =
        fibres.empty() ? all_fibres(d.times.size()) : std::vector<std::size_t>(fibres.begin(), fibres.end());

    stage = "export";
    const Json& m = d.manifest;
    if (kind == "vec") {
      if (index > d.values.size()) throw ConfigError("run has only " + std::to_string(d.values.size()) + " vectors");
      const std::size_t j = index - 1;
      const fs::path csv = dir / (numbered("vec", index) + ".csv");
      Json side = {{"kind", "eigenvector"},
                   {"index", index},
                   {"eigenvalue", complex_json(d.values[j])},
                   {"class", to_string(d.classes[j].cls)},
                   {"component", "real"},
                   {"normalisation", "sup"},
                   {"cutoff", m.at("config").contains("seba") ? m.at("config").at("seba").value("cutoff", 0.1) : 0.1},
                   {"grid", grid_json(*d.grid)}};
      export_field(sup_normalised(d.vectors.col(static_cast<Eigen::Index>(j))), *d.grid, d.times, chosen, csv, side);
      return csv;
    }
    if (kind == "seba") {
      if (!m.contains("seba")) throw ConfigError("run has no SEBA basis; run the seba command first");
      const auto shape = m.at("seba").at("shape").get<std::vector<std::size_t>>();
      if (index > shape[1]) throw ConfigError("run has only " + std::to_string(shape[1]) + " SEBA vectors");
      const auto flat = read_doubles(dir / "seba.bin", shape[0] * shape[1]);
      const Eigen::Map<const Eigen::MatrixXd> s(flat.data(), static_cast<Eigen::Index>(shape[0]),
                                                static_cast<Eigen::Index>(shape[1]));
      const fs::path csv = dir / (numbered("seba", index) + ".csv");
      Json side = {{"kind", "seba"},
                   {"index", index},
                   {"inputs", m.at("seba").at("inputs")},
                   {"minimum", m.at("seba").at("minima").at(index - 1)},
                   {"cutoff", m.at("seba").at("cutoff")},
                   {"grid", grid_json(*d.grid)}};
      export_field(s.col(static_cast<Eigen::Index>(index - 1)), *d.grid, d.times, chosen, csv, side);
      return csv;
    }
    throw ConfigError("selection kind must be vec or seba");
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what(), exit_code_for(e));
  }
}

void export_field(const Eigen::VectorXd& values, const Grid& grid, std::span<const double> times,
                  std::span<const std::size_t> fibres, const fs::path& csv, const Json& sidecar) {
  const std::size_t n = grid.size();
  if (static_cast<std::size_t>(values.size()) != n * times.size())
    throw DomainError("field length does not match the spacetime grid");
  std::ofstream out(csv);
  if (!out) throw IoError("cannot write " + csv.string());
  out << (grid.geometry() == Geometry::spherical ? "t,lon,lat,value\n" : "t,x,y,value\n");
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t l : fibres) {
    if (l >= times.size()) throw DomainError("time fibre out of range");
    for (std::size_t i = 0; i < n; ++i) {
      const Box& b = grid.box(i);
      out << times[l] << ',' << b.cx << ',' << b.cy << ',' << values[static_cast<Eigen::Index>(l * n + i)] << '\n';
    }
  }
  if (!out) throw IoError("short write to " + csv.string());
  Json side = sidecar;
  std::vector<double> selected;
  for (std::size_t l : fibres) selected.push_back(times[l]);
  side["fibres"] = std::vector<std::size_t>(fibres.begin(), fibres.end());
  side["times"] = selected;
  side["rows"] = fibres.size() * n;
  fs::path json_path = csv;
  json_path.replace_extension(".json");
  write_json(json_path, side);
}

FieldTable read_field_csv(const fs::path& csv) {
  std::ifstream in(csv);
  if (!in) throw IoError("cannot open " + csv.string());
  std::string line;
  if (!std::getline(in, line) || (line != "t,x,y,value" && line != "t,lon,lat,value"))
    throw IoError("unexpected header in " + csv.string());
  FieldTable t;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    double cols[4];
    for (int k = 0; k < 4; ++k) {
      std::string cell;
      if (!std::getline(row, cell, ',')) throw IoError("short row in " + csv.string());
      char* end = nullptr;
      cols[k] = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str() || *end != '\0') throw IoError("bad number in " + csv.string());
    }
    t.t.push_back(cols[0]);
    t.x.push_back(cols[1]);
    t.y.push_back(cols[2]);
    t.value.push_back(cols[3]);
  }
  return t;
}

void write_doubles(const fs::path& path, std::span<const double> data) {
  static_assert(std::endian::native == std::endian::little, "binary artifacts assume a little-endian host");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size_bytes()));
  if (!out) throw IoError("short write to " + path.string());
}

std::vector<double> read_doubles(const fs::path& path, std::size_t count) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open " + path.string());
  const auto size = static_cast<std::size_t>(in.tellg());
  if (size != count * sizeof(double))
    throw IoError(path.string() + " holds " + std::to_string(size) + " bytes, expected " +
                  std::to_string(count * sizeof(double)));
  in.seekg(0);
  std::vector<double> data(count);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(size));
  if (!in) throw IoError("short read from " + path.string());
  return data;
}

}  // namespace infgen
