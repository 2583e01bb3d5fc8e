#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cgb/scenario.hpp"
#include "doctest.h"

using namespace cgb;
namespace fs = std::filesystem;

namespace {

const std::string kDir = CGB_SCENARIO_DIR;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("cgb_test_scenario_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kMinimal = R"({
  "name": "mini",
  "manifold": {
    "omega": ["-y/2", "x/2", "1"],
    "f1": ["1", "0", "y/2"],
    "f2": ["0", "1", "-x/2"],
    "domain": {"lo": [-3, -3, -3], "hi": [3, 3, 3]}
  },
  "surface": [{"id": "plane", "immersion": ["u", "v", "0"], "domain": {"box": [-1, 1, -1, 1]}}],
  "epsilons": [1, 0.25],
  "phis": [{"expr": "(1 - (u^2 + v^2)/0.81)^2", "support": {"disk": [0, 0, 0.9]}}]
})";

std::string replace(std::string s, const std::string& from, const std::string& to) {
  const auto p = s.find(from);
  REQUIRE(p != std::string::npos);
  return s.replace(p, from.size(), to);
}

}  // namespace

TEST_CASE("shipped scenarios load") {
  const Scenario plane = load_scenario(kDir + "/heisenberg_plane.scn");
  CHECK(plane.atlas.charts.size() == 1);
  CHECK(plane.epsilons.size() == 9);
  CHECK(plane.epsilons.back() == doctest::Approx(std::pow(4.0, -8)));
  CHECK(plane.phis.size() == 2);
  CHECK(plane.phis[0].support.has_value());
  CHECK_FALSE(plane.atlas.compact);

  const Scenario sphere = load_scenario(kDir + "/heisenberg_sphere.scn");
  CHECK(sphere.atlas.charts.size() == 2);
  CHECK(sphere.atlas.compact);
  CHECK(sphere.phis[1].ambient);

  for (const char* k : {"normal_form_k2", "normal_form_k3", "normal_form_k5"}) {
    const Scenario f = load_scenario(kDir + "/" + k + ".scn");
    CHECK(f.fixture_mode());
    CHECK(f.fixture->expected.order.has_value());
  }
}

TEST_CASE("schema errors name the field") {
  CHECK_NOTHROW(parse_scenario(kMinimal));
  try {
    parse_scenario(replace(kMinimal, R"("f2": ["0", "1", "-x/2"],)", ""));
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(e.field() == "manifold.f2");
    CHECK(std::string(e.what()).find("required") != std::string::npos);
  }
  try {
    parse_scenario(replace(kMinimal, "[1, 0.25]", "[1, 0]"));
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(e.field() == "epsilons[1]");
    CHECK(std::string(e.what()).find("epsilon must be positive") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_scenario(replace(kMinimal, "[1, 0.25]", "[1.5]")), ValidationError);
  try {
    parse_scenario(replace(kMinimal, R"("u", "v", "0")", R"("u", "v", "z")"));
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(e.field() == "surface[0].immersion[2]");
  }
  try {
    parse_scenario(replace(kMinimal, R"("epsilons")", R"("epsilon")"));
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(e.field() == "epsilon");
  }
  CHECK_THROWS_AS(parse_scenario(replace(kMinimal, R"("1", "0", "y/2")", R"("1", "0", "-y/2")")), ValidationError);
  CHECK_THROWS_AS(parse_scenario(replace(kMinimal, R"(0.9]})", R"(0]})")), ValidationError);
  CHECK_THROWS_AS(load_scenario(kDir + "/does_not_exist.scn"), IoError);
}

TEST_CASE("malformed text reports line and column") {
  try {
    parse_scenario("{\n  \"name\": \"x\",\n  \"manifold\": ,\n}");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
    CHECK(e.column() == 15);
  }
  // comments are accepted
  CHECK_NOTHROW(parse_scenario(std::string("// header\n") + kMinimal));
}

TEST_CASE("epsilon override and number lists") {
  Scenario s = parse_scenario(kMinimal);
  override_epsilons(s, parse_number_list("0.5,1e-2, 0.001"));
  CHECK(s.epsilons == std::vector<double>{0.5, 0.01, 0.001});
  CHECK_THROWS_AS(override_epsilons(s, {0.5, -1}), ValidationError);
  CHECK_THROWS_AS(override_epsilons(s, {0.5, 0.5}), ValidationError);
  CHECK_THROWS_AS(parse_number_list("0.5,abc"), ValidationError);
}

TEST_CASE("stage ordering and isolation") {
  const Scenario s = parse_scenario(kMinimal);
  CHECK_THROWS_AS(run(s, {Stage::Converge}), StageDependencyError);
  CHECK_THROWS_AS(run(s, {}), ValidationError);
  CHECK_THROWS_AS(parse_stage("plot"), ValidationError);

  const RunReport inv = run(s, {Stage::Invariants});
  CHECK(inv.convergence.empty());
  CHECK(inv.charpoints.empty());
  CHECK_FALSE(inv.invariants.empty());
  CHECK(inv.invariants_pass());
  CHECK(inv.stages == std::vector<std::string>{"invariants"});

  const Scenario fixture = load_scenario(kDir + "/normal_form_k3.scn");
  CHECK_THROWS_AS(run(fixture, {Stage::Classify, Stage::Converge}), ValidationError);
  const RunReport fr = run(fixture, default_stages(fixture));
  REQUIRE(fr.charpoints.size() == 1);
  CHECK(fr.charpoints[0].order == 3);
  CHECK(fr.invariants_pass());
}

TEST_CASE("errors carry stage and chart") {
  const Scenario s = parse_scenario(R"({"name": "line", "fixture": {"P": "x", "Q": "0"}})");
  try {
    run(s, {Stage::Classify});
    FAIL("expected NonIsolatedCharacteristicSet");
  } catch (const NonIsolatedCharacteristicSet& e) {
    CHECK(e.context() == "classify/fixture");
    CHECK(std::string(e.what()).rfind("[classify/fixture]", 0) == 0);
  }
}

TEST_CASE("plane run: one elliptic point and delta convergence") {
  const Scenario s = load_scenario(kDir + "/heisenberg_plane.scn");
  const RunReport r = run(s, default_stages(s));
  REQUIRE(r.charpoints.size() == 1);
  CHECK(r.charpoints[0].index_by_winding == 1);
  CHECK(std::fabs(r.charpoints[0].u) < 1e-12);
  CHECK_FALSE(r.euler.has_value());
  REQUIRE(r.convergence.size() == 2);
  const auto& rows = r.convergence[0].rows;
  CHECK(rows.front().target == doctest::Approx(2 * M_PI));
  CHECK(rows.back().abs_error < 1e-3);
  CHECK(r.convergence[0].knee == 0);
  CHECK(r.convergence[1].rows.back().target == 0.0);
  CHECK(r.invariants_pass());
}

TEST_CASE("sphere run on a short sweep") {
  Scenario s = load_scenario(kDir + "/heisenberg_sphere.scn");
  override_epsilons(s, {1.0, 0.25, 0.0625});
  const RunReport r = run(s, default_stages(s));
  CHECK(r.charpoints.size() == 2);
  REQUIRE(r.euler.has_value());
  CHECK(r.euler->from_indices == 2);
  CHECK(r.euler->from_formula == 2);
  CHECK(std::fabs(r.convergence[0].mu.direct) < 1e-4);
  CHECK(r.invariants_pass());
}

TEST_CASE("artifacts are deterministic and complete") {
  const Scenario s = parse_scenario(kMinimal);
  const auto stages = default_stages(s);
  const fs::path a = scratch("a"), b = scratch("b");
  const auto fa = emit(run(s, stages), a);
  RunReport again = run(s, stages);
  const auto fb = emit(again, b);
  REQUIRE(fa.size() == 4);
  REQUIRE(fb.size() == 4);
  for (std::size_t i = 0; i < fa.size(); ++i) {
    CHECK(fa[i].filename() == fb[i].filename());
    CHECK(slurp(fa[i]) == slurp(fb[i]));
  }
  CHECK(fa[0].filename() == "charpoints.csv");
  CHECK(fa[1].filename() == "convergence_0.csv");
  CHECK(fa[2].filename() == "invariants.json");
  CHECK(fa[3].filename() == "report.json");

  // 17 significant digits round-trip exactly
  const std::string table = slurp(a / "convergence_0.csv");
  CHECK(table.rfind("epsilon,integral,target,abs_error,quad_error\n", 0) == 0);
  std::istringstream lines(table);
  std::string header, row;
  std::getline(lines, header);
  std::getline(lines, row);
  const std::vector<double> cells = parse_number_list(row);
  REQUIRE(cells.size() == 5);
  CHECK(cells[1] == again.convergence[0].rows[0].integral);

  const std::string report = slurp(a / "report.json");
  CHECK(report.find("\"digest\": \"" + sha256_hex(s.source) + "\"") != std::string::npos);
  CHECK(report.find("\"version\": \"") != std::string::npos);

  // the seed moves validation samples but never the tables
  Scenario seeded = s;
  seeded.options.seed = 99;
  const fs::path c = scratch("c");
  emit(run(seeded, stages), c);
  CHECK(slurp(c / "convergence_0.csv") == table);
  CHECK(slurp(c / "charpoints.csv") == slurp(a / "charpoints.csv"));

  const fs::path blocker = scratch("blocker");
  std::ofstream(blocker) << "x";
  try {
    emit(again, blocker / "sub");
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find((blocker / "sub").string()) != std::string::npos);
  }
  for (const fs::path& p : {a, b, c, blocker}) fs::remove_all(p);
}

TEST_CASE("sha256") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("command line exit codes") {
  const std::string cli = CGB_CLI_PATH;
  const fs::path dir = scratch("cli");
  fs::create_directories(dir);
  auto status = [&](const std::string& args) {
    const int st = std::system((cli + " " + args + " > /dev/null 2>&1").c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  };
  std::ofstream(dir / "line.scn") << R"({"name": "line", "fixture": {"P": "x", "Q": "0"}})";
  std::ofstream(dir / "bad.scn") << R"({"name": "bad", "manifold": "heisenberg"})";

  CHECK(status("run " + kDir + "/normal_form_k2.scn --out " + (dir / "k2").string()) == 0);
  CHECK(fs::exists(dir / "k2" / "report.json"));
  CHECK(status("run " + (dir / "bad.scn").string() + " --out " + (dir / "o").string()) == 2);
  CHECK(status("run " + (dir / "line.scn").string() + " --out " + (dir / "o").string()) == 3);
  CHECK(status("run " + kDir + "/heisenberg_plane.scn --stages converge --out " + (dir / "o").string()) == 2);
  CHECK(status("run " + kDir + "/heisenberg_plane.scn --eps-override 0,1 --out " + (dir / "o").string()) == 2);
  CHECK(status("run " + kDir + "/heisenberg_plane.scn --stages classify --grid 32 --out " + (dir / "p").string()) ==
        0);
  CHECK(fs::exists(dir / "p" / "charpoints.csv"));
  fs::remove_all(dir);
}
