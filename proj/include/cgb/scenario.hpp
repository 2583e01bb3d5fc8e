#pragma once

// Declarative scenario files, the classify/converge/invariants pipeline and
// its CSV/JSON artifacts.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cgb/curvature.hpp"

namespace cgb {

struct ScenarioOptions {
  ClassifyOptions classify;
  QuadSpec quadrature;
  int invariant_samples = 5000;  // div² + |X|² = 1 and b_ε samples, split over charts
  int structure_samples = 400;   // dη^ε = K^εσ^ε samples per ε
  int fd_samples = 60;           // jet vs finite-difference samples
  int domination_grid = 40;      // re-verified on a 2× finer grid
  double identity_tol = 1e-8;
  double structure_tol = 1e-6;
  double structure_min_norm = 0.2;
  double fd_tol = 1e-5;
  double fd_step = 1e-5;
  double gauss_bonnet_tol = 1e-3;
  double zero_mass_tol = 1e-4;
  double probe_tol = 1e-3;
  double domination_growth = 1.1;  // allowed C(2n)/C(n)
  double lambda_rel_tol = 1e-4;
  std::uint64_t seed = 1;          // random validation points only
};

// Planted answers of a pure-fixture scenario.
struct FixtureExpectation {
  std::optional<int> order;
  std::optional<double> lambda;
  std::optional<int> index;
};

struct FixtureSpec {
  std::string P, Q;
  ChartDomain domain;
  FixtureExpectation expected;
};

struct Scenario {
  std::string name;
  std::string source;  // raw file content; the digest is taken over it
  std::string origin;  // path or label used in messages
  std::optional<ContactModel> model;
  Atlas atlas;
  std::optional<FixtureSpec> fixture;
  std::vector<double> epsilons;
  std::vector<TestFunction> phis;
  ScenarioOptions options;
  std::string output_directory;
  std::vector<std::string> output_formats{"csv", "json"};

  bool fixture_mode() const { return fixture.has_value(); }
};

// The grammar is JSON (comments allowed). Throws ParseError with line and
// column for malformed text and ValidationError naming the offending field.
Scenario parse_scenario(const std::string& text, const std::string& origin = "<scenario>");
Scenario load_scenario(const std::filesystem::path& path);
// Replaces the ε sweep after validating the new values.
void override_epsilons(Scenario& s, const std::vector<double>& eps);

enum class Stage { Classify, Converge, Invariants };
const char* stage_name(Stage s);
Stage parse_stage(const std::string& name);
// classify, converge, invariants for contact scenarios; no converge for fixtures.
std::vector<Stage> default_stages(const Scenario& s);

struct InvariantResult {
  std::string name;
  bool pass = false;
  double observed = 0;
  double tolerance = 0;
  std::string detail;
};

struct ConvergenceReport {
  std::string phi;
  std::vector<ConvergenceRow> rows;
  std::size_t knee = 0;
  MuLimitCheck mu;
};

struct RunReport {
  std::string scenario_name;
  std::string digest;   // SHA-256 of the scenario text, hex
  std::string version;
  std::vector<std::string> stages;
  std::vector<CharPoint> charpoints;  // distinct points, chart order
  std::optional<EulerResult> euler;
  std::vector<ConvergenceReport> convergence;
  std::vector<InvariantResult> invariants;
  std::map<std::string, double> timing;  // seconds per stage; never written to artifacts

  bool invariants_pass() const;
};

const char* library_version();
std::string sha256_hex(const std::string& data);

// Stages run in dependency order. Requesting converge without classify throws
// StageDependencyError. Module errors are rethrown tagged "stage/chart".
RunReport run(const Scenario& scenario, const std::vector<Stage>& stages);

// Writes charpoints.csv, convergence_<i>.csv, invariants.json and report.json
// into `out_dir` (created if needed) and returns the paths written.
// `formats` selects csv and/or json artifacts.
std::vector<std::filesystem::path> emit(const RunReport& report, const std::filesystem::path& out_dir,
                                        const std::vector<std::string>& formats = {"csv", "json"});

// Helpers shared with the CLI.
std::vector<double> parse_number_list(const std::string& list);

}  // namespace cgb
