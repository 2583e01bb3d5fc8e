#include "cgb/scenario.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

#ifndef CGB_VERSION
#define CGB_VERSION "0.0.0"
#endif

namespace cgb {

using json = nlohmann::ordered_json;

const char* library_version() { return CGB_VERSION; }

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw IoError("SHA-256 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scenario parsing

namespace {

std::string join_path(const std::string& base, const std::string& key) { return base.empty() ? key : base + "." + key; }
std::string index_path(const std::string& base, std::size_t i) { return base + "[" + std::to_string(i) + "]"; }

void allow_keys(const json& obj, const std::string& path, std::initializer_list<const char*> keys) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return it.key() == k; }))
      throw ValidationError(join_path(path, it.key()), "unknown field");
  }
}

const json& require_object(const json& j, const std::string& path) {
  if (!j.is_object()) throw ValidationError(path, "must be an object");
  return j;
}

const json* find(const json& obj, const std::string& key) {
  const auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

const json& require(const json& obj, const std::string& path, const std::string& key) {
  const json* j = find(obj, key);
  if (!j) throw ValidationError(join_path(path, key), "required");
  return *j;
}

double as_number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ValidationError(path, "must be a number");
  const double x = j.get<double>();
  if (!std::isfinite(x)) throw ValidationError(path, "must be finite");
  return x;
}

long long as_integer(const json& j, const std::string& path) {
  if (j.is_number_integer()) return j.get<long long>();
  if (j.is_number_float()) {
    const double x = j.get<double>();
    if (std::isfinite(x) && x == std::floor(x) && std::fabs(x) < 9e15) return static_cast<long long>(x);
  }
  throw ValidationError(path, "must be an integer");
}

std::string as_string(const json& j, const std::string& path) {
  if (!j.is_string()) throw ValidationError(path, "must be a string");
  return j.get<std::string>();
}

bool as_bool(const json& j, const std::string& path) {
  if (!j.is_boolean()) throw ValidationError(path, "must be true or false");
  return j.get<bool>();
}

std::vector<double> as_numbers(const json& j, const std::string& path, std::size_t n) {
  if (!j.is_array() || j.size() != n) throw ValidationError(path, "must be an array of " + std::to_string(n) + " numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(as_number(j[i], index_path(path, i)));
  return out;
}

Expr parse_expr(const std::string& text, const std::string& path, const std::vector<std::string>& vars) {
  try {
    return Expr::parse(text, vars);
  } catch (const ValidationFailure& e) {
    throw ValidationError(path, e.what());
  }
}

std::array<std::string, 3> expr_triple(const json& j, const std::string& path, const std::vector<std::string>& vars) {
  if (!j.is_array() || j.size() != 3) throw ValidationError(path, "must be an array of 3 expressions");
  std::array<std::string, 3> out;
  for (std::size_t i = 0; i < 3; ++i) {
    out[i] = as_string(j[i], index_path(path, i));
    parse_expr(out[i], index_path(path, i), vars);
  }
  return out;
}

ChartDomain parse_domain(const json& j, const std::string& path) {
  require_object(j, path);
  allow_keys(j, path, {"box", "disk"});
  if (j.size() != 1) throw ValidationError(path, "must declare exactly one of box or disk");
  if (const json* b = find(j, "box")) {
    const auto x = as_numbers(*b, join_path(path, "box"), 4);
    if (!(x[0] < x[1] && x[2] < x[3])) throw ValidationError(join_path(path, "box"), "box must satisfy u0 < u1 and v0 < v1");
    return ChartDomain::box(x[0], x[1], x[2], x[3]);
  }
  const auto x = as_numbers(require(j, path, "disk"), join_path(path, "disk"), 3);
  if (!(x[2] > 0)) throw ValidationError(join_path(path, "disk"), "radius must be positive");
  return ChartDomain::disk(x[0], x[1], x[2]);
}

ContactModel parse_manifold(const json& j, const std::string& path) {
  if (j.is_string()) {
    try {
      return builtin_model(j.get<std::string>());
    } catch (const UnknownModel& e) {
      throw ValidationError(path, e.what());
    }
  }
  require_object(j, path);
  allow_keys(j, path, {"name", "omega", "f1", "f2", "domain"});
  const std::vector<std::string> xyz{"x", "y", "z"};
  std::array<std::array<Expr, 3>, 3> fields;
  const char* names[3] = {"omega", "f1", "f2"};
  for (int f = 0; f < 3; ++f) {
    const std::string p = join_path(path, names[f]);
    const auto src = expr_triple(require(j, path, names[f]), p, xyz);
    for (int i = 0; i < 3; ++i) fields[f][i] = parse_expr(src[i], index_path(p, i), xyz);
  }
  const json& d = require(j, path, "domain");
  const std::string dp = join_path(path, "domain");
  require_object(d, dp);
  allow_keys(d, dp, {"lo", "hi"});
  const auto lo = as_numbers(require(d, dp, "lo"), join_path(dp, "lo"), 3);
  const auto hi = as_numbers(require(d, dp, "hi"), join_path(dp, "hi"), 3);
  Box3 box;
  for (int i = 0; i < 3; ++i) {
    if (!(lo[i] < hi[i])) throw ValidationError(dp, "lo must be below hi in every coordinate");
    box.lo[i] = lo[i];
    box.hi[i] = hi[i];
  }
  const std::string name = find(j, "name") ? as_string(j["name"], join_path(path, "name")) : "inline";
  try {
    ContactModel model = normalize(ContactModel(name, fields[0], fields[1], fields[2], box));
    check_model(model);
    return model;
  } catch (const ValidationFailure& e) {
    throw ValidationError(path, e.what());
  }
}

SurfaceChart parse_chart(const json& j, const std::string& path, std::size_t index) {
  require_object(j, path);
  allow_keys(j, path, {"id", "immersion", "domain", "orientation", "periodic", "weight"});
  const std::vector<std::string> uv{"u", "v"};
  const std::string id = find(j, "id") ? as_string(j["id"], join_path(path, "id")) : "chart" + std::to_string(index);
  const auto imm = expr_triple(require(j, path, "immersion"), join_path(path, "immersion"), uv);
  const ChartDomain domain = parse_domain(require(j, path, "domain"), join_path(path, "domain"));
  int orientation = 1;
  if (const json* o = find(j, "orientation")) {
    const long long x = as_integer(*o, join_path(path, "orientation"));
    if (x != 1 && x != -1) throw ValidationError(join_path(path, "orientation"), "must be 1 or -1");
    orientation = static_cast<int>(x);
  }
  std::array<bool, 2> periodic{false, false};
  if (const json* p = find(j, "periodic")) {
    const std::string pp = join_path(path, "periodic");
    if (!p->is_array() || p->size() != 2) throw ValidationError(pp, "must be an array of 2 booleans");
    periodic = {as_bool((*p)[0], index_path(pp, 0)), as_bool((*p)[1], index_path(pp, 1))};
  }
  std::optional<std::string> weight;
  if (const json* w = find(j, "weight")) {
    weight = as_string(*w, join_path(path, "weight"));
    parse_expr(*weight, join_path(path, "weight"), uv);
  }
  return make_chart(id, imm, domain, orientation, weight, periodic);
}

void check_epsilon(double e, const std::string& path) {
  if (!(e > 0.0)) throw ValidationError(path, "epsilon must be positive");
  if (e > 1.0) throw ValidationError(path, "epsilon must not exceed 1");
}

std::vector<double> parse_epsilons(const json& j, const std::string& path) {
  std::vector<double> eps;
  if (j.is_array()) {
    if (j.empty()) throw ValidationError(path, "at least one epsilon required");
    for (std::size_t i = 0; i < j.size(); ++i) eps.push_back(as_number(j[i], index_path(path, i)));
  } else {
    require_object(j, path);
    allow_keys(j, path, {"geometric"});
    const std::string gp = join_path(path, "geometric");
    const json& g = require_object(require(j, path, "geometric"), gp);
    allow_keys(g, gp, {"start", "ratio", "count"});
    const double start = as_number(require(g, gp, "start"), join_path(gp, "start"));
    const double ratio = as_number(require(g, gp, "ratio"), join_path(gp, "ratio"));
    const long long count = as_integer(require(g, gp, "count"), join_path(gp, "count"));
    if (!(ratio > 0.0 && ratio < 1.0)) throw ValidationError(join_path(gp, "ratio"), "must lie in (0, 1)");
    if (count < 1 || count > 64) throw ValidationError(join_path(gp, "count"), "must lie in 1..64");
    for (long long i = 0; i < count; ++i) eps.push_back(start * std::pow(ratio, static_cast<double>(i)));
  }
  for (std::size_t i = 0; i < eps.size(); ++i) check_epsilon(eps[i], index_path(path, i));
  std::set<double> seen(eps.begin(), eps.end());
  if (seen.size() != eps.size()) throw ValidationError(path, "epsilon values must be distinct");
  return eps;
}

TestFunction parse_phi(const json& j, const std::string& path) {
  std::string src;
  bool ambient = false;
  std::optional<ChartDomain> support;
  if (j.is_string()) {
    src = j.get<std::string>();
  } else {
    require_object(j, path);
    allow_keys(j, path, {"expr", "ambient", "support"});
    src = as_string(require(j, path, "expr"), join_path(path, "expr"));
    if (const json* a = find(j, "ambient")) ambient = as_bool(*a, join_path(path, "ambient"));
    if (const json* s = find(j, "support")) support = parse_domain(*s, join_path(path, "support"));
  }
  const std::string ep = j.is_string() ? path : join_path(path, "expr");
  parse_expr(src, ep, ambient ? std::vector<std::string>{"x", "y", "z"} : std::vector<std::string>{"u", "v"});
  return make_test_function(src, ambient, support);
}

void parse_options(const json& j, const std::string& path, ScenarioOptions& o) {
  require_object(j, path);
  struct IntOpt {
    const char* key;
    int* target;
    int lo, hi;
  };
  struct RealOpt {
    const char* key;
    double* target;
  };
  QuadSpec& q = o.quadrature;
  const IntOpt ints[] = {{"locate_grid", &o.classify.locate.grid, 4, 4096},
                         {"newton_iterations", &o.classify.locate.max_iterations, 1, 1000},
                         {"kmax", &o.classify.order.kmax, 1, 7},
                         {"order_nodes", &o.classify.order.nodes, 8, 256},
                         {"winding_samples", &o.classify.winding_samples, 32, 65536},
                         {"invariant_samples", &o.invariant_samples, 0, 10000000},
                         {"structure_samples", &o.structure_samples, 0, 1000000},
                         {"fd_samples", &o.fd_samples, 0, 100000},
                         {"domination_grid", &o.domination_grid, 4, 1000}};
  const IntOpt quad_ints[] = {{"gl_order", &q.gl_order, 2, 64},
                              {"box_panels", &q.box_panels, 1, 1024},
                              {"angular", &q.angular, 8, 4096},
                              {"max_refine", &q.max_refine, 1, 8}};
  const RealOpt reals[] = {{"newton_tol", &o.classify.locate.tol},
                           {"isolation_max", &o.classify.locate.r_max},
                           {"order_r0", &o.classify.order.r0},
                           {"degeneracy_tol", &o.classify.order.degeneracy_tol},
                           {"identity_tol", &o.identity_tol},
                           {"structure_tol", &o.structure_tol},
                           {"structure_min_norm", &o.structure_min_norm},
                           {"fd_tol", &o.fd_tol},
                           {"fd_step", &o.fd_step},
                           {"gauss_bonnet_tol", &o.gauss_bonnet_tol},
                           {"zero_mass_tol", &o.zero_mass_tol},
                           {"probe_tol", &o.probe_tol},
                           {"domination_growth", &o.domination_growth},
                           {"lambda_rel_tol", &o.lambda_rel_tol}};
  const RealOpt quad_reals[] = {{"ratio", &q.ratio}, {"inner", &q.inner}, {"tol", &q.tol}};

  auto set_int = [](const json& v, const std::string& p, const IntOpt& opt) {
    const long long x = as_integer(v, p);
    if (x < opt.lo || x > opt.hi)
      throw ValidationError(p, "must lie in " + std::to_string(opt.lo) + ".." + std::to_string(opt.hi));
    *opt.target = static_cast<int>(x);
  };
  auto set_real = [](const json& v, const std::string& p, const RealOpt& opt) {
    const double x = as_number(v, p);
    if (!(x > 0.0)) throw ValidationError(p, "must be positive");
    *opt.target = x;
  };

  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string p = join_path(path, it.key());
    if (it.key() == "seed") {
      const long long s = as_integer(it.value(), p);
      if (s < 0) throw ValidationError(p, "must be nonnegative");
      o.seed = static_cast<std::uint64_t>(s);
      continue;
    }
    if (it.key() == "quadrature") {
      require_object(it.value(), p);
      for (auto qt = it.value().begin(); qt != it.value().end(); ++qt) {
        const std::string qp = join_path(p, qt.key());
        bool known = false;
        for (const auto& opt : quad_ints)
          if (qt.key() == opt.key) set_int(qt.value(), qp, opt), known = true;
        for (const auto& opt : quad_reals)
          if (qt.key() == opt.key) set_real(qt.value(), qp, opt), known = true;
        if (!known) throw ValidationError(qp, "unknown field");
      }
      if (!(q.ratio < 1.0)) throw ValidationError(join_path(p, "ratio"), "must lie in (0, 1)");
      continue;
    }
    bool known = false;
    for (const auto& opt : ints)
      if (it.key() == opt.key) set_int(it.value(), p, opt), known = true;
    for (const auto& opt : reals)
      if (it.key() == opt.key) set_real(it.value(), p, opt), known = true;
    if (!known) throw ValidationError(p, "unknown field");
  }
}

FixtureSpec parse_fixture(const json& j, const std::string& path) {
  require_object(j, path);
  allow_keys(j, path, {"P", "Q", "domain", "expected"});
  FixtureSpec f;
  const std::vector<std::string> xy{"x", "y"};
  f.P = as_string(require(j, path, "P"), join_path(path, "P"));
  f.Q = as_string(require(j, path, "Q"), join_path(path, "Q"));
  parse_expr(f.P, join_path(path, "P"), xy);
  parse_expr(f.Q, join_path(path, "Q"), xy);
  f.domain = find(j, "domain") ? parse_domain(j["domain"], join_path(path, "domain")) : ChartDomain::box(-1, 1, -1, 1);
  if (const json* e = find(j, "expected")) {
    const std::string ep = join_path(path, "expected");
    require_object(*e, ep);
    allow_keys(*e, ep, {"order", "lambda", "index"});
    if (const json* k = find(*e, "order")) {
      const long long x = as_integer(*k, join_path(ep, "order"));
      if (x < 1) throw ValidationError(join_path(ep, "order"), "must be at least 1");
      f.expected.order = static_cast<int>(x);
    }
    if (const json* l = find(*e, "lambda")) {
      f.expected.lambda = as_number(*l, join_path(ep, "lambda"));
      if (*f.expected.lambda == 0.0) throw ValidationError(join_path(ep, "lambda"), "must be nonzero");
    }
    if (const json* i = find(*e, "index")) f.expected.index = static_cast<int>(as_integer(*i, join_path(ep, "index")));
  }
  return f;
}

std::pair<std::size_t, std::size_t> line_column(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  const std::size_t end = std::min(text.size(), byte > 0 ? byte - 1 : 0);
  for (std::size_t i = 0; i < end; ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace

Scenario parse_scenario(const std::string& text, const std::string& origin) {
  json root;
  try {
    root = json::parse(text, nullptr, true, true);
  } catch (const json::parse_error& e) {
    const auto [line, col] = line_column(text, e.byte);
    std::string msg = e.what();
    if (const auto p = msg.find("parse error"); p != std::string::npos) msg = msg.substr(p);
    throw ParseError(line, col, msg);
  }
  require_object(root, "scenario");
  allow_keys(root, "", {"name", "manifold", "surface", "compact", "epsilons", "phis", "options", "outputs", "fixture"});

  Scenario s;
  s.source = text;
  s.origin = origin;
  s.name = find(root, "name") ? as_string(root["name"], "name") : "scenario";
  if (s.name.empty() || s.name.find_first_of("/\\") != std::string::npos)
    throw ValidationError("name", "must be a nonempty name without path separators");

  if (const json* o = find(root, "options")) parse_options(*o, "options", s.options);

  if (const json* f = find(root, "fixture")) {
    for (const char* k : {"manifold", "surface", "compact", "epsilons", "phis"})
      if (find(root, k)) throw ValidationError(k, "not allowed in a fixture scenario");
    s.fixture = parse_fixture(*f, "fixture");
  } else {
    s.model = parse_manifold(require(root, "", "manifold"), "manifold");
    const json& surf = require(root, "", "surface");
    if (!surf.is_array() || surf.empty()) throw ValidationError("surface", "must be a nonempty array of charts");
    std::set<std::string> ids;
    for (std::size_t i = 0; i < surf.size(); ++i) {
      s.atlas.charts.push_back(parse_chart(surf[i], index_path("surface", i), i));
      if (!ids.insert(s.atlas.charts.back().id).second)
        throw ValidationError(index_path("surface", i) + ".id", "duplicate chart id '" + s.atlas.charts.back().id + "'");
    }
    if (const json* c = find(root, "compact")) s.atlas.compact = as_bool(*c, "compact");
    if (const json* e = find(root, "epsilons")) {
      s.epsilons = parse_epsilons(*e, "epsilons");
    } else {
      for (int j = 0; j <= 8; ++j) s.epsilons.push_back(std::pow(4.0, -j));
    }
    if (const json* p = find(root, "phis")) {
      if (!p->is_array()) throw ValidationError("phis", "must be an array");
      for (std::size_t i = 0; i < p->size(); ++i) s.phis.push_back(parse_phi((*p)[i], index_path("phis", i)));
    }
  }

  s.output_directory = "out/" + s.name;
  if (const json* o = find(root, "outputs")) {
    require_object(*o, "outputs");
    allow_keys(*o, "outputs", {"directory", "formats"});
    if (const json* d = find(*o, "directory")) s.output_directory = as_string(*d, "outputs.directory");
    if (const json* f = find(*o, "formats")) {
      if (!f->is_array() || f->empty()) throw ValidationError("outputs.formats", "must be a nonempty array");
      s.output_formats.clear();
      for (std::size_t i = 0; i < f->size(); ++i) {
        const std::string fmt = as_string((*f)[i], index_path("outputs.formats", i));
        if (fmt != "csv" && fmt != "json") throw ValidationError(index_path("outputs.formats", i), "must be csv or json");
        s.output_formats.push_back(fmt);
      }
    }
  }
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read scenario file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str(), path.string());
}

void override_epsilons(Scenario& s, const std::vector<double>& eps) {
  if (eps.empty()) throw ValidationError("epsilons", "at least one epsilon required");
  for (std::size_t i = 0; i < eps.size(); ++i) check_epsilon(eps[i], index_path("epsilons", i));
  if (std::set<double>(eps.begin(), eps.end()).size() != eps.size())
    throw ValidationError("epsilons", "epsilon values must be distinct");
  s.epsilons = eps;
}

std::vector<double> parse_number_list(const std::string& list) {
  std::vector<double> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double x = 0;
    try {
      x = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used]))) ++used;
    if (used == 0 || used != item.size()) throw ValidationError("epsilons", "'" + item + "' is not a number");
    out.push_back(x);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stages

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::Classify: return "classify";
    case Stage::Converge: return "converge";
    case Stage::Invariants: return "invariants";
  }
  return "?";
}

Stage parse_stage(const std::string& name) {
  for (Stage s : {Stage::Classify, Stage::Converge, Stage::Invariants})
    if (name == stage_name(s)) return s;
  throw ValidationError("stages", "unknown stage '" + name + "' (expected classify, converge or invariants)");
}

std::vector<Stage> default_stages(const Scenario& s) {
  if (s.fixture_mode()) return {Stage::Classify, Stage::Invariants};
  return {Stage::Classify, Stage::Converge, Stage::Invariants};
}

bool RunReport::invariants_pass() const {
  return std::all_of(invariants.begin(), invariants.end(), [](const InvariantResult& r) { return r.pass; });
}

namespace {

// Runs `f`, tagging any library error with the stage and chart it came from.
template <class F>
auto tagged(const char* stage, const std::string& chart, F&& f) {
  try {
    return f();
  } catch (Error& e) {
    if (e.context().empty()) e.add_context(chart.empty() ? std::string(stage) : std::string(stage) + "/" + chart);
    throw;
  }
}

struct Classified {
  std::vector<CharPoint> raw;       // every point found, per chart
  std::vector<CharPoint> distinct;  // ambient duplicates removed
};

Classified classify_scenario(const Scenario& s, const char* stage) {
  Classified out;
  if (s.fixture_mode()) {
    const FixtureField field(s.fixture->P, s.fixture->Q, s.fixture->domain, "fixture");
    out.raw = tagged(stage, "fixture", [&] { return classify(field, s.options.classify); });
    out.distinct = out.raw;
    return out;
  }
  for (const SurfaceChart& chart : s.atlas.charts) {
    const ChartField field(chart, *s.model);
    const auto pts = tagged(stage, chart.id, [&] { return classify(field, s.options.classify); });
    for (const CharPoint& p : pts) {
      out.raw.push_back(p);
      const bool dup = std::any_of(out.distinct.begin(), out.distinct.end(), [&](const CharPoint& q) {
        return p.ambient && q.ambient && (*p.ambient - *q.ambient).norm() < 1e-6;
      });
      if (!dup) out.distinct.push_back(p);
    }
  }
  return out;
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string fmt_short(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

// Uniform points inside a chart domain, kept a little away from its edge.
std::vector<Vec2> sample_domain(const ChartDomain& d, int n, std::mt19937_64& rng) {
  std::vector<Vec2> pts;
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const double shrink = 0.98;
  while (static_cast<int>(pts.size()) < n) {
    if (d.kind == ChartDomain::Kind::Disk) {
      const double r = d.radius * shrink * std::sqrt(U(rng)), t = 2 * M_PI * U(rng);
      pts.emplace_back(d.cu + r * std::cos(t), d.cv + r * std::sin(t));
    } else {
      const double cu = 0.5 * (d.u0 + d.u1), cv = 0.5 * (d.v0 + d.v1);
      const double hu = 0.5 * (d.u1 - d.u0) * shrink, hv = 0.5 * (d.v1 - d.v0) * shrink;
      pts.emplace_back(cu + hu * (2 * U(rng) - 1), cv + hv * (2 * U(rng) - 1));
    }
  }
  return pts;
}

InvariantResult make_result(std::string name, double observed, double tol, std::string detail = {}) {
  InvariantResult r;
  r.name = std::move(name);
  r.observed = observed;
  r.tolerance = tol;
  r.pass = std::isfinite(observed) && observed <= tol;
  r.detail = std::move(detail);
  return r;
}

std::vector<InvariantResult> index_invariants(const std::vector<CharPoint>& pts) {
  int mismatches = 0;
  std::string detail;
  for (const CharPoint& p : pts) {
    if (p.index_by_winding != p.index_by_formula) {
      ++mismatches;
      detail += p.chart_id + " (" + fmt_short(p.u) + ", " + fmt_short(p.v) + "): winding " +
                std::to_string(p.index_by_winding) + " vs formula " + std::to_string(p.index_by_formula) + "; ";
    }
  }
  return {make_result("index_agreement", mismatches, 0, detail.empty() ? std::to_string(pts.size()) + " points" : detail)};
}

InvariantResult probe_invariant(const std::vector<std::pair<const PlanarField*, CharPoint>>& items, double tol) {
  double worst = 0;
  std::string detail;
  bool diverged = false;
  for (const auto& [field, p] : items) {
    try {
      const IntegrabilityProbe pr = inv_norm_integrability_probe(*field, Vec2(p.u, p.v), default_probe_radii(), tol);
      worst = std::max(worst, pr.tail);
      detail += p.chart_id + " (" + fmt_short(p.u) + ", " + fmt_short(p.v) + "): tail " + fmt_short(pr.tail) + "; ";
    } catch (const DivergentTail& e) {
      diverged = true;
      detail += p.chart_id + " (" + fmt_short(p.u) + ", " + fmt_short(p.v) + "): " + e.what() + "; ";
    }
  }
  InvariantResult r = make_result("integrability_probe", diverged ? INFINITY : worst, tol, detail);
  if (diverged) r.pass = false;
  return r;
}

struct SweepCache {
  const Scenario& s;
  const std::vector<CharPoint>& raw;
  std::vector<std::optional<SweepIntegrals>> phis;
  std::optional<SweepIntegrals> unit;

  const SweepIntegrals& for_phi(std::size_t i, const char* stage) {
    if (!phis[i]) {
      phis[i] = tagged(stage, "", [&] {
        return sweep_integrals(s.atlas, *s.model, s.epsilons, s.phis[i], raw, s.options.quadrature);
      });
    }
    return *phis[i];
  }

  const SweepIntegrals& for_unit(const char* stage) {
    for (std::size_t i = 0; i < s.phis.size(); ++i) {
      const TestFunction& f = s.phis[i];
      if (!f.ambient && !f.support && f.source == "1") return for_phi(i, stage);
    }
    if (!unit) {
      unit = tagged(stage, "", [&] {
        return sweep_integrals(s.atlas, *s.model, s.epsilons, make_test_function("1"), raw, s.options.quadrature);
      });
    }
    return *unit;
  }
};

std::vector<InvariantResult> contact_invariants(const Scenario& s, const Classified& cls, SweepCache& cache) {
  const ScenarioOptions& o = s.options;
  const ContactModel& model = *s.model;
  std::vector<InvariantResult> out;
  std::mt19937_64 rng(o.seed);
  const std::size_t nchart = s.atlas.charts.size();
  const char* stage = "invariants";

  // Pointwise identities: div² + |X|² = 1 and the b_ε bounds.
  {
    double identity = 0, bounds = 0;
    int total = 0;
    for (std::size_t c = 0; c < nchart; ++c) {
      const SurfaceChart& chart = s.atlas.charts[c];
      const int n = o.invariant_samples / static_cast<int>(nchart) + (c < o.invariant_samples % nchart ? 1 : 0);
      tagged(stage, chart.id, [&] {
        for (const Vec2& p : sample_domain(chart.domain, n, rng)) {
          const CharFieldSample f = characteristic_field(chart, model, p[0], p[1]);
          identity = std::max(identity, std::fabs(f.divergence * f.divergence + f.sr_norm * f.sr_norm - 1.0));
          const double div = std::clamp(f.divergence, -1.0, 1.0);
          for (double eps : s.epsilons) {
            const double b = b_eps(div, eps), se = std::sqrt(eps);
            bounds = std::max({bounds, se - b, b - 1.0, std::fabs(b - f.sr_norm) - se});
          }
          ++total;
        }
        return 0;
      });
    }
    out.push_back(make_result("div_norm_identity", identity, o.identity_tol, std::to_string(total) + " points"));
    out.push_back(make_result("b_eps_bounds", std::max(0.0, bounds), 1e-12,
                              std::to_string(total) + " points x " + std::to_string(s.epsilons.size()) + " epsilons"));
  }

  // dη^ε = K^εσ^ε and θ2 = ω|_S/|X| away from Σ.
  {
    double rel = 0, coframe = 0;
    int used = 0;
    const std::vector<double> eps_set{1.0, 0.25, 0.0625};
    for (std::size_t c = 0; c < nchart; ++c) {
      const SurfaceChart& chart = s.atlas.charts[c];
      const int n = std::max(1, o.structure_samples / static_cast<int>(nchart));
      tagged(stage, chart.id, [&] {
        for (const Vec2& p : sample_domain(chart.domain, n, rng)) {
          const SurfaceJets sj = surface_jets(chart, model, p[0], p[1]);
          const CharFieldSample f = characteristic_field(sj);
          if (f.sr_norm <= o.structure_min_norm) continue;
          for (double eps : eps_set) {
            const EpsFrameSample fr = connection_form_eps(sj, eps);
            const double k = k_sigma_density(sj, eps);
            rel = std::max(rel, std::fabs(fr.d_eta - k) / std::max(1.0, std::fabs(k)));
            if (eps == 1.0) {
              const Vec2 w(sj.wu.value(), sj.wv.value());
              coframe = std::max(coframe, (fr.theta2 - w / f.sr_norm).norm() / std::max(1.0, w.norm() / f.sr_norm));
            }
          }
          ++used;
        }
        return 0;
      });
    }
    out.push_back(make_result("structure_equation", rel, o.structure_tol,
                              std::to_string(used) + " points with |X| > " + fmt_short(o.structure_min_norm) +
                                  ", eps in {1, 0.25, 0.0625}"));
    out.push_back(make_result("coframe_relation", coframe, o.structure_tol, std::to_string(used) + " points"));
  }

  // Jets against central finite differences.
  {
    double worst = 0;
    const double h = o.fd_step;
    for (std::size_t c = 0; c < nchart; ++c) {
      const SurfaceChart& chart = s.atlas.charts[c];
      const ChartField field(chart, model);
      const int n = std::max(1, o.fd_samples / static_cast<int>(nchart));
      tagged(stage, chart.id, [&] {
        ChartDomain inner = chart.domain;
        for (const Vec2& p : sample_domain(inner, n, rng)) {
          if (!chart.domain.contains(p[0] - 2 * h, p[1]) || !chart.domain.contains(p[0] + 2 * h, p[1]) ||
              !chart.domain.contains(p[0], p[1] - 2 * h) || !chart.domain.contains(p[0], p[1] + 2 * h))
            continue;
          const FieldJets j0 = field.jets(p[0], p[1]);
          for (int dir = 0; dir < 2; ++dir) {
            const Vec2 step = dir == 0 ? Vec2(h, 0) : Vec2(0, h);
            const FieldJets jp = field.jets(p[0] + step[0], p[1] + step[1]);
            const FieldJets jm = field.jets(p[0] - step[0], p[1] - step[1]);
            auto check = [&](const SJet<2>& a, const SJet<2>& ap, const SJet<2>& am) {
              const double fd1 = (ap.value() - am.value()) / (2 * h);
              worst = std::max(worst, std::fabs(a.gradient(dir) - fd1) / std::max(1.0, std::fabs(a.gradient(dir))));
              for (int k = 0; k < 2; ++k) {
                const double fd2 = (ap.gradient(k) - am.gradient(k)) / (2 * h);
                const double jet2 = a.d(k).gradient(dir);
                worst = std::max(worst, std::fabs(jet2 - fd2) / std::max(1.0, std::fabs(jet2)));
              }
            };
            check(j0.Xu, jp.Xu, jm.Xu);
            check(j0.Xv, jp.Xv, jm.Xv);
            check(j0.E, jp.E, jm.E);
            check(j0.F, jp.F, jm.F);
            check(j0.G, jp.G, jm.G);
            check(j0.area, jp.area, jm.area);
            check(j0.div, jp.div, jm.div);
          }
        }
        return 0;
      });
    }
    out.push_back(make_result("jet_vs_finite_difference", worst, o.fd_tol, "step " + fmt_short(h)));
  }

  // Characteristic points: indices and |X|⁻¹ integrability.
  {
    for (auto& r : index_invariants(cls.distinct)) out.push_back(r);
    std::vector<std::unique_ptr<ChartField>> fields;
    std::vector<std::pair<const PlanarField*, CharPoint>> items;
    for (const CharPoint& p : cls.distinct) {
      const auto it = std::find_if(s.atlas.charts.begin(), s.atlas.charts.end(),
                                   [&](const SurfaceChart& c) { return c.id == p.chart_id; });
      fields.push_back(std::make_unique<ChartField>(*it, model));
      items.emplace_back(fields.back().get(), p);
    }
    out.push_back(tagged(stage, "", [&] { return probe_invariant(items, o.probe_tol); }));
  }

  // Domination constant at the smallest ε, re-verified on a finer grid.
  {
    const double eps = *std::min_element(s.epsilons.begin(), s.epsilons.end());
    double ratio = 0;
    std::string detail = "eps " + fmt_short(eps) + ";";
    for (const SurfaceChart& chart : s.atlas.charts) {
      std::vector<Vec2> sing;
      for (const CharPoint& p : cls.raw)
        if (p.chart_id == chart.id) sing.emplace_back(p.u, p.v);
      const auto [c1, c2] = tagged(stage, chart.id, [&] {
        return std::pair{domination_constant(chart, model, eps, o.domination_grid, sing),
                         domination_constant(chart, model, eps, 2 * o.domination_grid, sing)};
      });
      ratio = std::max(ratio, c2 / std::max(c1, 1e-300));
      detail += " " + chart.id + ": C = " + fmt_short(c1) + " (n = " + std::to_string(o.domination_grid) +
                "), " + fmt_short(c2) + " (n = " + std::to_string(2 * o.domination_grid) + ");";
    }
    out.push_back(make_result("domination_constant", ratio, o.domination_growth, detail));
  }

  // Euler characteristic and Gauss-Bonnet on compact surfaces.
  if (s.atlas.compact) {
    const EulerResult e = euler_characteristic(cls.distinct);
    out.push_back(make_result("euler_characteristic", std::abs(e.from_indices - e.from_formula), 0,
                              "indices " + std::to_string(e.from_indices) + ", formula " +
                                  std::to_string(e.from_formula)));
    const SweepIntegrals& unit = cache.for_unit(stage);
    const double target = 2 * M_PI * e.from_indices;
    for (std::size_t i = 0; i < unit.epsilons.size(); ++i) {
      out.push_back(make_result("gauss_bonnet[eps=" + fmt_short(unit.epsilons[i]) + "]",
                                std::fabs(unit.k_sigma[i].value - target), o.gauss_bonnet_tol,
                                "integral " + fmt(unit.k_sigma[i].value) + ", 2 pi chi " + fmt(target)));
    }
    out.push_back(make_result("zero_singular_mass", std::fabs(unit.mu_minus_one.value), o.zero_mass_tol,
                              "integral " + fmt(unit.mu_minus_one.value) + " +/- " + fmt_short(unit.mu_minus_one.error)));
  }

  // μ₋₁ computed directly and as the limit of √ε∫φK^εσ^ε.
  if (s.epsilons.size() >= 2) {
    for (std::size_t i = 0; i < s.phis.size(); ++i) {
      const MuLimitCheck m = mu_limit_check(cache.for_phi(i, stage));
      const double tol = 5 * (m.quad_error + m.extrapolation_error);
      InvariantResult r = make_result("mu_consistency[phi=" + std::to_string(i) + "]",
                                      std::fabs(m.direct - m.extrapolated), tol,
                                      "direct " + fmt(m.direct) + ", extrapolated " + fmt(m.extrapolated));
      r.pass = m.consistent;
      out.push_back(r);
    }
  }
  return out;
}

std::vector<InvariantResult> fixture_invariants(const Scenario& s, const Classified& cls) {
  std::vector<InvariantResult> out = index_invariants(cls.distinct);
  const FixtureExpectation& ex = s.fixture->expected;
  if (ex.order || ex.lambda || ex.index) {
    if (cls.distinct.size() != 1) {
      InvariantResult r = make_result("planted_point", static_cast<double>(cls.distinct.size()), 1,
                                      "expected exactly one characteristic point");
      r.pass = false;
      out.push_back(r);
    } else {
      const CharPoint& p = cls.distinct.front();
      if (ex.order)
        out.push_back(make_result("order_recovery", std::abs(p.order - *ex.order), 0,
                                  "order " + std::to_string(p.order) + ", planted " + std::to_string(*ex.order)));
      if (ex.lambda) {
        // Λ is defined up to sign for even order.
        const double got = p.lambda_sign_ambiguous ? std::fabs(p.lambda) : p.lambda;
        const double want = p.lambda_sign_ambiguous ? std::fabs(*ex.lambda) : *ex.lambda;
        out.push_back(make_result("lambda_recovery", std::fabs(got - want) / std::fabs(want), s.options.lambda_rel_tol,
                                  "lambda " + fmt(p.lambda) + ", planted " + fmt(*ex.lambda)));
      }
      if (ex.index)
        out.push_back(make_result("planted_index", std::abs(p.index_by_winding - *ex.index), 0,
                                  "winding " + std::to_string(p.index_by_winding) + ", planted " +
                                      std::to_string(*ex.index)));
    }
  }
  const FixtureField field(s.fixture->P, s.fixture->Q, s.fixture->domain, "fixture");
  std::vector<std::pair<const PlanarField*, CharPoint>> items;
  for (const CharPoint& p : cls.distinct) items.emplace_back(&field, p);
  out.push_back(tagged("invariants", "fixture", [&] { return probe_invariant(items, s.options.probe_tol); }));
  return out;
}

}  // namespace

RunReport run(const Scenario& s, const std::vector<Stage>& stages) {
  auto has = [&](Stage st) { return std::find(stages.begin(), stages.end(), st) != stages.end(); };
  if (stages.empty()) throw ValidationError("stages", "no stage requested");
  if (has(Stage::Converge) && !has(Stage::Classify))
    throw StageDependencyError("stage converge requires classify: the characteristic points anchor the quadrature");
  if (has(Stage::Converge) && s.fixture_mode())
    throw ValidationError("stages", "converge is not available for fixture scenarios (no contact structure)");
  if (has(Stage::Converge) && s.phis.empty())
    throw ValidationError("phis", "at least one test function is required for convergence runs");

  RunReport rep;
  rep.scenario_name = s.name;
  rep.digest = sha256_hex(s.source);
  rep.version = library_version();
  for (Stage st : {Stage::Classify, Stage::Converge, Stage::Invariants})
    if (has(st)) rep.stages.push_back(stage_name(st));

  using clock = std::chrono::steady_clock;
  auto seconds = [](clock::time_point t0) { return std::chrono::duration<double>(clock::now() - t0).count(); };

  std::optional<Classified> cls;
  auto t0 = clock::now();
  if (has(Stage::Classify)) {
    cls = classify_scenario(s, "classify");
    rep.charpoints = cls->distinct;
    if (!s.fixture_mode() && s.atlas.compact)
      rep.euler = tagged("classify", "", [&] { return euler_characteristic(cls->distinct); });
    rep.timing["classify"] = seconds(t0);
  }

  std::optional<SweepCache> cache;
  if (!s.fixture_mode() && (has(Stage::Converge) || has(Stage::Invariants))) {
    if (!cls) cls = classify_scenario(s, "invariants");
    cache.emplace(SweepCache{s, cls->raw, std::vector<std::optional<SweepIntegrals>>(s.phis.size()), std::nullopt});
  }

  if (has(Stage::Converge)) {
    t0 = clock::now();
    for (std::size_t i = 0; i < s.phis.size(); ++i) {
      const SweepIntegrals& sw = cache->for_phi(i, "converge");
      ConvergenceReport c;
      c.phi = s.phis[i].source;
      const double target = tagged("converge", "", [&] { return delta_target(s.atlas, s.phis[i], cls->raw); });
      c.rows = convergence_table(sw, target);
      c.knee = convergence_knee(c.rows);
      if (sw.epsilons.size() >= 2) c.mu = mu_limit_check(sw);
      rep.convergence.push_back(std::move(c));
    }
    rep.timing["converge"] = seconds(t0);
  }

  if (has(Stage::Invariants)) {
    t0 = clock::now();
    if (s.fixture_mode()) {
      if (!cls) cls = classify_scenario(s, "invariants");
      rep.invariants = fixture_invariants(s, *cls);
    } else {
      rep.invariants = contact_invariants(s, *cls, *cache);
    }
    rep.timing["invariants"] = seconds(t0);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Artifacts

namespace {

// JSON with every floating-point number printed to 17 significant digits;
// non-finite values become null.
void write_json(std::ostream& os, const json& j, int indent) {
  const std::string pad(indent, ' '), pad2(indent + 2, ' ');
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) {
        os << "{}";
        return;
      }
      os << "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) os << ",\n";
        first = false;
        os << pad2 << json(it.key()).dump() << ": ";
        write_json(os, it.value(), indent + 2);
      }
      os << "\n" << pad << "}";
      return;
    }
    case json::value_t::array: {
      if (j.empty()) {
        os << "[]";
        return;
      }
      os << "[\n";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) os << ",\n";
        os << pad2;
        write_json(os, j[i], indent + 2);
      }
      os << "\n" << pad << "]";
      return;
    }
    case json::value_t::number_float: {
      const double x = j.get<double>();
      os << (std::isfinite(x) ? fmt(x) : "null");
      return;
    }
    default:
      os << j.dump();
  }
}

json charpoint_json(const CharPoint& p) {
  json j;
  j["chart"] = p.chart_id;
  j["u"] = p.u;
  j["v"] = p.v;
  j["ambient"] = p.ambient ? json::array({p.ambient->x(), p.ambient->y(), p.ambient->z()}) : json(nullptr);
  j["trace"] = p.trace;
  j["det"] = p.det;
  j["order"] = p.order;
  j["lambda"] = p.lambda;
  j["lambda_sign_ambiguous"] = p.lambda_sign_ambiguous;
  j["index_formula"] = p.index_by_formula;
  j["index_winding"] = p.index_by_winding;
  j["hat_K"] = p.hat_K;
  j["isolation_radius"] = p.isolation_radius;
  j["residual"] = p.residual;
  return j;
}

json invariant_json(const InvariantResult& r) {
  json j;
  j["name"] = r.name;
  j["pass"] = r.pass;
  j["observed"] = r.observed;
  j["tolerance"] = r.tolerance;
  j["detail"] = r.detail;
  return j;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  out.close();
  if (!out) throw IoError("failed writing " + path.string());
}

std::string json_text(const json& j) {
  std::ostringstream os;
  write_json(os, j, 0);
  os << "\n";
  return os.str();
}

}  // namespace

std::vector<std::filesystem::path> emit(const RunReport& rep, const std::filesystem::path& out_dir,
                                        const std::vector<std::string>& formats) {
  auto wants = [&](const char* f) { return std::find(formats.begin(), formats.end(), f) != formats.end(); };
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir))
    throw IoError("cannot create output directory " + out_dir.string() + (ec ? ": " + ec.message() : ""));

  std::vector<std::filesystem::path> files;
  std::vector<std::string> names;
  auto put = [&](const std::string& name, const std::string& content) {
    const auto path = out_dir / name;
    write_file(path, content);
    files.push_back(path);
    names.push_back(name);
  };

  if (wants("csv")) {
    std::string cp =
        "chart,u,v,x,y,z,trace,det,order,lambda,lambda_sign_ambiguous,index_formula,index_winding,hat_K,"
        "isolation_radius,residual\n";
    for (const CharPoint& p : rep.charpoints) {
      cp += p.chart_id + "," + fmt(p.u) + "," + fmt(p.v) + ",";
      cp += p.ambient ? fmt(p.ambient->x()) + "," + fmt(p.ambient->y()) + "," + fmt(p.ambient->z()) + "," : ",,,";
      cp += fmt(p.trace) + "," + fmt(p.det) + "," + std::to_string(p.order) + "," + fmt(p.lambda) + "," +
            (p.lambda_sign_ambiguous ? "1" : "0") + "," + std::to_string(p.index_by_formula) + "," +
            std::to_string(p.index_by_winding) + "," + fmt(p.hat_K) + "," + fmt(p.isolation_radius) + "," +
            fmt(p.residual) + "\n";
    }
    put("charpoints.csv", cp);
    for (std::size_t i = 0; i < rep.convergence.size(); ++i) {
      std::string t = "epsilon,integral,target,abs_error,quad_error\n";
      for (const ConvergenceRow& r : rep.convergence[i].rows)
        t += fmt(r.epsilon) + "," + fmt(r.integral) + "," + fmt(r.target) + "," + fmt(r.abs_error) + "," +
             fmt(r.quad_error) + "\n";
      put("convergence_" + std::to_string(i) + ".csv", t);
    }
  }

  if (wants("json")) {
    json inv = json::array();
    for (const InvariantResult& r : rep.invariants) inv.push_back(invariant_json(r));
    put("invariants.json", json_text(inv));

    json j;
    j["scenario"] = rep.scenario_name;
    j["digest"] = rep.digest;
    j["version"] = rep.version;
    j["stages"] = rep.stages;
    json cps = json::array();
    for (const CharPoint& p : rep.charpoints) cps.push_back(charpoint_json(p));
    j["charpoints"] = cps;
    if (rep.euler) {
      j["euler"] = {{"from_indices", rep.euler->from_indices},
                    {"from_formula", rep.euler->from_formula},
                    {"contact_topology_warning", rep.euler->contact_topology_warning}};
    } else {
      j["euler"] = nullptr;
    }
    json conv = json::array();
    for (std::size_t i = 0; i < rep.convergence.size(); ++i) {
      const ConvergenceReport& c = rep.convergence[i];
      json rows = json::array();
      for (const ConvergenceRow& r : c.rows)
        rows.push_back({{"epsilon", r.epsilon},
                        {"integral", r.integral},
                        {"target", r.target},
                        {"abs_error", r.abs_error},
                        {"quad_error", r.quad_error}});
      conv.push_back({{"phi", c.phi},
                      {"table", "convergence_" + std::to_string(i) + ".csv"},
                      {"knee", c.knee},
                      {"rows", rows},
                      {"mu_minus_one", {{"direct", c.mu.direct},
                                        {"extrapolated", c.mu.extrapolated},
                                        {"extrapolation_error", c.mu.extrapolation_error},
                                        {"quad_error", c.mu.quad_error},
                                        {"max_deviation", c.mu.max_deviation},
                                        {"consistent", c.mu.consistent}}}});
    }
    j["convergence"] = conv;
    if (!rep.convergence.empty())
      j["convergence_note"] =
          "pairings with a finite test-function battery; they do not certify convergence in the C^1 dual norm";
    j["invariants_pass"] = rep.invariants_pass();
    json listed = names;
    listed.push_back("report.json");
    j["files"] = listed;
    put("report.json", json_text(j));
  }
  return files;
}

}  // namespace cgb
