// cgb run <scenario> [--out DIR] [--stages LIST] [--eps-override LIST] [--grid N] [--seed N]
//
// Exit codes: 0 success, 2 validation failure, 3 numerical failure,
// 1 invariant failure under --strict.

#include <cstdio>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "cgb/scenario.hpp"

namespace {

std::vector<cgb::Stage> parse_stages(const std::string& list) {
  std::vector<cgb::Stage> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(cgb::parse_stage(item));
  }
  return out;
}

int run_command(const std::string& path, const std::string& out, const std::string& stages, const std::string& eps,
                int grid, long long seed, bool strict, bool quiet) {
  cgb::Scenario s = cgb::load_scenario(path);
  if (!eps.empty()) {
    if (s.fixture_mode()) throw cgb::ValidationError("eps-override", "fixture scenarios have no epsilon sweep");
    cgb::override_epsilons(s, cgb::parse_number_list(eps));
  }
  if (grid > 0) s.options.classify.locate.grid = grid;
  if (seed >= 0) s.options.seed = static_cast<std::uint64_t>(seed);
  const auto st = stages.empty() ? cgb::default_stages(s) : parse_stages(stages);

  const cgb::RunReport rep = cgb::run(s, st);
  const auto files = cgb::emit(rep, out.empty() ? s.output_directory : out, s.output_formats);

  if (!quiet) {
    std::printf("scenario %s (sha256 %s)\n", rep.scenario_name.c_str(), rep.digest.c_str());
    for (const auto& p : rep.charpoints)
      std::printf("  point %s (%.6g, %.6g): order %d, index %d (formula %d)\n", p.chart_id.c_str(), p.u, p.v, p.order,
                  p.index_by_winding, p.index_by_formula);
    if (rep.euler) std::printf("  euler characteristic: %d (formula %d)\n", rep.euler->from_indices, rep.euler->from_formula);
    for (std::size_t i = 0; i < rep.convergence.size(); ++i) {
      const auto& rows = rep.convergence[i].rows;
      if (!rows.empty())
        std::printf("  phi %zu: eps %.3g -> |I - target| = %.3g\n", i, rows.back().epsilon, rows.back().abs_error);
    }
    for (const auto& r : rep.invariants)
      std::printf("  %-32s %s  observed %.3g  tol %.3g\n", r.name.c_str(), r.pass ? "pass" : "FAIL", r.observed,
                  r.tolerance);
    for (const auto& [stage, secs] : rep.timing) std::fprintf(stderr, "  %s: %.2f s\n", stage.c_str(), secs);
    for (const auto& f : files) std::printf("  wrote %s\n", f.string().c_str());
  }
  return (strict && !rep.invariants_pass()) ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Curvature measures of surfaces in 3D contact sub-Riemannian manifolds"};
  app.require_subcommand(1);
  CLI::App* run = app.add_subcommand("run", "Run a scenario and write its artifacts");
  std::string path, out, stages, eps;
  int grid = 0;
  long long seed = -1;
  bool strict = false, quiet = false;
  run->add_option("scenario", path, "Scenario file")->required();
  run->add_option("--out", out, "Output directory (default: the scenario's outputs.directory)");
  run->add_option("--stages", stages, "Comma-separated subset of classify,converge,invariants");
  run->add_option("--eps-override", eps, "Comma-separated epsilon sweep replacing the scenario's");
  run->add_option("--grid", grid, "Characteristic-point search grid size")->check(CLI::Range(4, 4096));
  run->add_option("--seed", seed, "Seed for random validation points")->check(CLI::NonNegativeNumber);
  run->add_flag("--strict", strict, "Exit with status 1 when an invariant fails");
  run->add_flag("--quiet", quiet, "Print nothing on success");

  CLI11_PARSE(app, argc, argv);
  try {
    return run_command(path, out, stages, eps, grid, seed, strict, quiet);
  } catch (const cgb::ValidationFailure& e) {
    std::fprintf(stderr, "cgb: %s\n", e.what());
    return 2;
  } catch (const cgb::NumericalFailure& e) {
    std::fprintf(stderr, "cgb: %s\n", e.what());
    return 3;
  }
}
