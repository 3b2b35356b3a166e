#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "infgen/pipeline.hpp"

using namespace infgen;

namespace {

std::vector<int> parse_indices(const std::string& text) {
  std::vector<int> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = std::min(text.find(',', pos), text.size());
    const std::string item = text.substr(pos, comma - pos);
    try {
      std::size_t used = 0;
      const int v = std::stoi(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::logic_error&) {
      throw ConfigError("bad vector index '" + item + "'");
    }
    pos = comma + 1;
  }
  return out;
}

std::vector<std::size_t> parse_fibres(const std::string& text) {
  std::vector<std::size_t> out;
  if (text.empty() || text == "all") return out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = std::min(text.find(',', pos), text.size());
    std::string item = text.substr(pos, comma - pos);
    if (!item.empty() && item[0] == 't') item.erase(0, 1);
    try {
      std::size_t used = 0;
      const unsigned long v = std::stoul(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::logic_error&) {
      throw ConfigError("bad time fibre '" + text.substr(pos, comma - pos) + "'");
    }
    pos = comma + 1;
  }
  return out;
}

void report(const RunResult& r) {
  const Resolved& s = r.resolved;
  std::printf("grid            %zu boxes x %zu fibres\n", r.grid->size(), r.times.size());
  std::printf("median speed    %.6g\n", s.median_speed);
  std::printf("median side     %.6g\n", s.median_side);
  std::printf("L_max           %.6g\n", s.longest_extent);
  std::printf("epsilon         %.6g (eps_tot %.6g)\n", s.epsilon, s.epsilon_total);
  std::printf("a               %.6g\n", s.a);
  if (s.a_heuristic) std::printf("a heuristic     %.6g\n", *s.a_heuristic);
  if (s.a_heuristic_seconds)
    std::printf("                (tau in days; with tau in seconds: %.6g)\n", *s.a_heuristic_seconds);
  std::printf("\n  k            re            im  class\n");
  for (std::size_t j = 0; j < r.solution.size(); ++j)
    std::printf("%3zu  %12.6g  %12.6g  %s\n", j + 1, r.solution.values[j].real(), r.solution.values[j].imag(),
                to_string(r.classes[j].cls).c_str());
  if (r.manifest.contains("temporal_matching")) {
    const Json& t = r.manifest.at("temporal_matching");
    std::printf("\ntemporal prediction %.6g (continuous), %.6g (discrete)\n", t.at("continuous").get<double>(),
                t.at("discrete").get<double>());
    if (!t.at("gap").is_null()) std::printf("temporal/spatial gap %.6g\n", t.at("gap").get<double>());
  }
  for (std::size_t k = 0; k < r.families.size(); ++k) {
    const Family& f = r.families[k];
    std::printf("family %zu: birth %s death %s\n", k + 1, f.birth ? std::to_string(*f.birth).c_str() : "none",
                f.death ? std::to_string(*f.death).c_str() : "none");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quasi-stationary families of almost-invariant sets from the inflated generator"};
  app.require_subcommand(1);

  std::string config_path;
  auto* run = app.add_subcommand("run", "Full pipeline: assemble, solve, classify, SEBA, export");
  run->add_option("--config", config_path, "Run configuration (JSON)")->required();
  auto* spectrum = app.add_subcommand("spectrum", "Stop after the eigensolve and classification");
  spectrum->add_option("--config", config_path, "Run configuration (JSON)")->required();

  std::string run_dir, vectors, selection, times = "all";
  double cutoff = 0.1;
  std::optional<double> mu;
  auto* seba_cmd = app.add_subcommand("seba", "SEBA on stored eigenvectors of a finished run");
  seba_cmd->add_option("--run", run_dir, "Run directory")->required();
  seba_cmd->add_option("--vectors", vectors, "Comma-separated 1-based eigenvector indices")->required();
  seba_cmd->add_option("--mu", mu, "Soft threshold (default 0.99/sqrt(p))");
  seba_cmd->add_option("--cutoff", cutoff, "Support cutoff for the family report");
  auto* export_cmd = app.add_subcommand("export", "Export a stored vector as CSV");
  export_cmd->add_option("--run", run_dir, "Run directory")->required();
  export_cmd->add_option("--select", selection, "vec:K or seba:K")->required();
  export_cmd->add_option("--times", times, "Fibres such as t0,t4 (default all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (run->parsed() || spectrum->parsed()) {
      const RunConfig config = RunConfig::load(config_path);
      const RunResult r = run_pipeline(config, run->parsed() ? StopAfter::everything : StopAfter::classification);
      report(r);
      std::printf("\nartifacts in %s\n", config.output.string().c_str());
    } else if (seba_cmd->parsed()) {
      const std::vector<int> indices = parse_indices(vectors);
      const SebaRun s = seba_from_run(run_dir, indices, mu, cutoff);
      std::printf("SEBA: %td vectors, %d iterations%s, mu %.6g\n", s.basis.vectors.cols(), s.basis.iterations,
                  s.basis.converged ? "" : " (not converged)", s.basis.mu);
      for (std::size_t k = 0; k < s.families.size(); ++k) {
        const Family& f = s.families[k];
        std::printf("family %zu: min %.4f birth %s death %s\n", k + 1, s.basis.minima[static_cast<Eigen::Index>(k)],
                    f.birth ? std::to_string(*f.birth).c_str() : "none",
                    f.death ? std::to_string(*f.death).c_str() : "none");
      }
    } else {
      const auto path = export_selection(run_dir, selection, parse_fibres(times));
      std::printf("%s\n", path.string().c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "infgen: %s\n", e.what());
    return exit_code_for(e);
  }
  return 0;
}
