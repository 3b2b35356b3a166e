#include "infgen/velocity.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <tuple>

#include "json.hpp"

#include "infgen/errors.hpp"

namespace infgen {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr const char* kOrder = "time-major, then lat, then lon";

class FrozenField final : public VelocityField {
 public:
  FrozenField(FieldPtr inner, double t) : inner_(std::move(inner)), t_(t) {
    inner_->eval(t_, 0.0, 0.0);  // validates t
  }
  Interval time_domain() const override {
    return {-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  }
  VelocityUnits units() const override { return inner_->units(); }
  bool steady() const override { return true; }

 protected:
  Vec2 evaluate(double, double x, double y) const override { return inner_->eval(t_, x, y); }

 private:
  FieldPtr inner_;
  double t_;
};

class AveragedField final : public VelocityField {
 public:
  AveragedField(FieldPtr inner, std::vector<double> times, std::vector<double> weights)
      : inner_(std::move(inner)), times_(std::move(times)), weights_(std::move(weights)) {}
  Interval time_domain() const override {
    return {-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  }
  VelocityUnits units() const override { return inner_->units(); }
  bool steady() const override { return true; }

 protected:
  Vec2 evaluate(double, double x, double y) const override {
    Vec2 acc = Vec2::Zero();
    for (std::size_t l = 0; l < times_.size(); ++l) acc += weights_[l] * inner_->eval(times_[l], x, y);
    return acc;
  }

 private:
  FieldPtr inner_;
  std::vector<double> times_;
  std::vector<double> weights_;
};

// Cell index and fractional position of v on a strictly increasing axis,
// clamped to the axis ends.
std::pair<std::size_t, double> bracket(const std::vector<double>& axis, double v) {
  if (axis.size() == 1) return {0, 0.0};
  if (v <= axis.front()) return {0, 0.0};
  if (v >= axis.back()) return {axis.size() - 2, 1.0};
  const auto it = std::upper_bound(axis.begin(), axis.end(), v);
  const std::size_t i = static_cast<std::size_t>(it - axis.begin()) - 1;
  return {i, (v - axis[i]) / (axis[i + 1] - axis[i])};
}

void require_increasing(const std::vector<double>& axis, const std::string& name) {
  if (axis.empty()) throw IngestionError(name, "axis is empty");
  for (std::size_t i = 0; i < axis.size(); ++i) {
    if (!std::isfinite(axis[i])) throw IngestionError(name, "non-finite axis value");
    if (i > 0 && !(axis[i] > axis[i - 1]))
      throw IngestionError(name, "axis is not strictly increasing at index " + std::to_string(i));
  }
}

void require_finite(const std::vector<double>& data, const std::string& name) {
  for (std::size_t i = 0; i < data.size(); ++i)
    if (!std::isfinite(data[i]))
      throw IngestionError(name, "non-finite sample at flat index " + std::to_string(i));
}

std::vector<double> axis_from_json(const nlohmann::json& manifest, const std::string& key) {
  if (!manifest.contains(key)) throw IngestionError(key, "missing key");
  const auto& node = manifest.at(key);
  if (!node.is_array()) throw IngestionError(key, "expected an array of numbers");
  std::vector<double> axis;
  axis.reserve(node.size());
  for (const auto& v : node) {
    if (!v.is_number()) throw IngestionError(key, "expected an array of numbers");
    axis.push_back(v.get<double>());
  }
  require_increasing(axis, key);
  return axis;
}

std::string string_field(const nlohmann::json& manifest, const std::string& key) {
  if (!manifest.contains(key) || !manifest.at(key).is_string())
    throw IngestionError(key, "missing or non-string value");
  return manifest.at(key).get<std::string>();
}

double byteswap_double(double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  bits = __builtin_bswap64(bits);
  std::memcpy(&v, &bits, sizeof bits);
  return v;
}

VelocityUnits parse_units(const std::string& s) {
  if (s == "m/s") return VelocityUnits::metres_per_second;
  if (s == "nondimensional") return VelocityUnits::nondimensional;
  throw IngestionError("units", "unknown units '" + s + "'");
}

std::shared_ptr<GriddedVelocity> load_vgrid(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open velocity manifest " + path.string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw IngestionError("manifest", std::string("invalid JSON: ") + e.what());
  }
  if (!manifest.is_object()) throw IngestionError("manifest", "top level must be an object");
  if (!manifest.contains("version") || !manifest.at("version").is_number_integer() ||
      manifest.at("version").get<int>() != 1)
    throw IngestionError("version", "expected version 1");

  auto lon = axis_from_json(manifest, "lon");
  auto lat = axis_from_json(manifest, "lat");
  auto time = axis_from_json(manifest, "time");
  const VelocityUnits units = parse_units(string_field(manifest, "units"));
  if (string_field(manifest, "order") != kOrder)
    throw IngestionError("order", std::string("expected \"") + kOrder + "\"");
  const std::string endianness = string_field(manifest, "endianness");
  if (endianness != "little") throw IngestionError("endianness", "only little-endian payloads");

  const std::filesystem::path payload = path.parent_path() / string_field(manifest, "payload");
  std::ifstream bin(payload, std::ios::binary | std::ios::ate);
  if (!bin) throw IngestionError("payload", "cannot open " + payload.string());
  const std::size_t count = lon.size() * lat.size() * time.size();
  const auto bytes = static_cast<std::size_t>(bin.tellg());
  if (bytes != 2 * count * sizeof(double))
    throw IngestionError("payload", "expected " + std::to_string(2 * count * sizeof(double)) +
                                        " bytes for the declared axes, found " +
                                        std::to_string(bytes));
  bin.seekg(0);
  std::vector<double> u(count), v(count);
  bin.read(reinterpret_cast<char*>(u.data()), static_cast<std::streamsize>(count * sizeof(double)));
  bin.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(count * sizeof(double)));
  if (!bin) throw IngestionError("payload", "short read");
  if constexpr (std::endian::native == std::endian::big) {
    for (double& x : u) x = byteswap_double(x);
    for (double& x : v) x = byteswap_double(x);
  }
  return std::make_shared<GriddedVelocity>(std::move(lon), std::move(lat), std::move(time),
                                           std::move(u), std::move(v), units);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  return out;
}

double parse_number(const std::string& s, const std::string& column, std::size_t row) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw IngestionError(column, "unparseable value '" + s + "' on row " + std::to_string(row));
  return value;
}

std::shared_ptr<GriddedVelocity> load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open velocity CSV " + path.string());
  std::string line;
  if (!std::getline(in, line) || split_csv(line) != std::vector<std::string>{"time", "lat", "lon", "u", "v"})
    throw IngestionError("header", "expected header row 'time,lat,lon,u,v'");

  static const char* columns[] = {"time", "lat", "lon", "u", "v"};
  std::map<std::tuple<double, double, double>, std::pair<double, double>> samples;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 5) throw IngestionError("row", "expected 5 columns on row " + std::to_string(row));
    double vals[5];
    for (int c = 0; c < 5; ++c) vals[c] = parse_number(cells[static_cast<std::size_t>(c)], columns[c], row);
    if (!std::isfinite(vals[3])) throw IngestionError("u", "non-finite sample on row " + std::to_string(row));
    if (!std::isfinite(vals[4])) throw IngestionError("v", "non-finite sample on row " + std::to_string(row));
    if (!samples.emplace(std::make_tuple(vals[0], vals[1], vals[2]), std::make_pair(vals[3], vals[4])).second)
      throw IngestionError("row", "duplicate (time,lat,lon) on row " + std::to_string(row));
  }
  if (samples.empty()) throw IngestionError("row", "no data rows");

  std::vector<double> time, lat, lon;
  for (const auto& [key, _] : samples) {
    time.push_back(std::get<0>(key));
    lat.push_back(std::get<1>(key));
    lon.push_back(std::get<2>(key));
  }
  for (auto* axis : {&time, &lat, &lon}) {
    std::sort(axis->begin(), axis->end());
    axis->erase(std::unique(axis->begin(), axis->end()), axis->end());
  }
  const std::size_t count = time.size() * lat.size() * lon.size();
  if (samples.size() != count)
    throw IngestionError("row", "samples do not cover the full time x lat x lon lattice");

  std::vector<double> u, v;
  u.reserve(count);
  v.reserve(count);
  // std::map iterates in (time, lat, lon) lexicographic order = storage order.
  for (const auto& [_, uv] : samples) {
    u.push_back(uv.first);
    v.push_back(uv.second);
  }
  return std::make_shared<GriddedVelocity>(std::move(lon), std::move(lat), std::move(time),
                                           std::move(u), std::move(v));
}

}  // namespace

Vec2 VelocityField::eval(double t, double x, double y) const {
  const Interval dom = time_domain();
  const double slack = 1e-9 * std::max({1.0, std::abs(dom.lo), std::abs(dom.hi)});
  if (!(t >= dom.lo - slack && t <= dom.hi + slack))
    throw DomainError("time " + std::to_string(t) + " outside the field's time domain");
  return evaluate(t, x, y);
}

AnalyticField::AnalyticField(Function f, Interval time_domain, bool steady, VelocityUnits units)
    : f_(std::move(f)), domain_(time_domain), steady_(steady), units_(units) {}

double SwitchingDoubleGyre::switch_profile(double t) { return 0.5 * (1.0 + std::tanh(10.0 * (t - 0.5))); }

double SwitchingDoubleGyre::alpha(double t) {
  const double r = switch_profile(t);
  return (1.0 - 2.0 * r) / (3.0 * (r - 2.0) * (r + 1.0));
}

double SwitchingDoubleGyre::beta(double t) { return (2.0 - 9.0 * alpha(t)) / 3.0; }

Vec2 SwitchingDoubleGyre::evaluate(double t, double x, double y) const {
  const double a = alpha(t);
  const double b = beta(t);
  const double f = a * x * x + b * x;
  const double u = -0.5 * kPi * std::sin(kPi * f) * std::cos(0.5 * kPi * y);
  const double v = (2.0 * x * a + b) * std::cos(kPi * f) * std::sin(0.5 * kPi * y);
  return amplitude_ * Vec2(u, v);
}

FieldPtr switching_double_gyre(double amplitude) {
  return std::make_shared<SwitchingDoubleGyre>(amplitude);
}

FieldPtr frozen(FieldPtr field, double t) { return std::make_shared<FrozenField>(std::move(field), t); }

FieldPtr time_average(FieldPtr field, std::span<const double> times) {
  if (times.size() < 2) throw DomainError("time averaging needs at least two nodes");
  for (std::size_t l = 1; l < times.size(); ++l)
    if (!(times[l] > times[l - 1])) throw DomainError("time nodes must be strictly increasing");
  const double span = times.back() - times.front();
  std::vector<double> weights(times.size(), 0.0);
  for (std::size_t l = 0; l + 1 < times.size(); ++l) {
    const double half = 0.5 * (times[l + 1] - times[l]) / span;
    weights[l] += half;
    weights[l + 1] += half;
  }
  return std::make_shared<AveragedField>(std::move(field),
                                         std::vector<double>(times.begin(), times.end()),
                                         std::move(weights));
}

double median_speed(const VelocityField& field, const Grid& grid, std::span<const double> times) {
  if (times.empty() || grid.size() == 0) throw DomainError("median speed needs samples");
  std::vector<double> speeds;
  speeds.reserve(times.size() * grid.size());
  for (double t : times)
    for (const Box& b : grid.boxes()) speeds.push_back(field.eval(t, b.cx, b.cy).norm());
  return median(std::move(speeds));
}

GriddedVelocity::GriddedVelocity(std::vector<double> lon, std::vector<double> lat,
                                 std::vector<double> time, std::vector<double> u,
                                 std::vector<double> v, VelocityUnits units)
    : lon_(std::move(lon)),
      lat_(std::move(lat)),
      time_(std::move(time)),
      u_(std::move(u)),
      v_(std::move(v)),
      units_(units) {
  require_increasing(lon_, "lon");
  require_increasing(lat_, "lat");
  require_increasing(time_, "time");
  const std::size_t count = lon_.size() * lat_.size() * time_.size();
  if (u_.size() != count) throw IngestionError("u", "array size does not match the axes");
  if (v_.size() != count) throw IngestionError("v", "array size does not match the axes");
  require_finite(u_, "u");
  require_finite(v_, "v");
}

std::size_t GriddedVelocity::nearest_time(double t) const {
  const auto it = std::lower_bound(time_.begin(), time_.end(), t);
  if (it == time_.begin()) return 0;
  if (it == time_.end()) return time_.size() - 1;
  const auto hi = static_cast<std::size_t>(it - time_.begin());
  return (time_[hi] - t < t - time_[hi - 1]) ? hi : hi - 1;
}

Vec2 GriddedVelocity::evaluate(double t, double x, double y) const {
  const std::size_t it = nearest_time(t);
  const auto [ix, sx] = bracket(lon_, x);
  const auto [iy, sy] = bracket(lat_, y);
  const std::size_t ix1 = lon_.size() == 1 ? ix : ix + 1;
  const std::size_t iy1 = lat_.size() == 1 ? iy : iy + 1;
  auto interp = [&](const std::vector<double>& a) {
    const double lower = (1.0 - sx) * a[offset(it, iy, ix)] + sx * a[offset(it, iy, ix1)];
    const double upper = (1.0 - sx) * a[offset(it, iy1, ix)] + sx * a[offset(it, iy1, ix1)];
    return (1.0 - sy) * lower + sy * upper;
  };
  return Vec2(interp(u_), interp(v_));
}

std::shared_ptr<GriddedVelocity> load_gridded(const std::filesystem::path& path) {
  if (path.extension() == ".csv") return load_csv(path);
  return load_vgrid(path);
}

void write_gridded(const GriddedVelocity& field, const std::filesystem::path& manifest_path,
                   const std::string& payload_name) {
  nlohmann::json manifest = {
      {"version", 1},          {"lon", field.lon()},     {"lat", field.lat()},
      {"time", field.time()},  {"units", to_string(field.units())},
      {"payload", payload_name}, {"order", kOrder},      {"endianness", "little"}};
  std::ofstream out(manifest_path);
  if (!out) throw IoError("cannot write " + manifest_path.string());
  out << manifest.dump(2) << '\n';

  const auto payload = manifest_path.parent_path() / payload_name;
  std::ofstream bin(payload, std::ios::binary);
  if (!bin) throw IoError("cannot write " + payload.string());
  auto write_all = [&](const std::vector<double>& data) {
    if constexpr (std::endian::native == std::endian::little) {
      bin.write(reinterpret_cast<const char*>(data.data()),
                static_cast<std::streamsize>(data.size() * sizeof(double)));
    } else {
      for (double x : data) {
        const double s = byteswap_double(x);
        bin.write(reinterpret_cast<const char*>(&s), sizeof s);
      }
    }
  };
  write_all(field.u());
  write_all(field.v());
  if (!bin) throw IoError("short write to " + payload.string());
}

std::string to_string(VelocityUnits units) {
  return units == VelocityUnits::metres_per_second ? "m/s" : "nondimensional";
}

}  // namespace infgen
