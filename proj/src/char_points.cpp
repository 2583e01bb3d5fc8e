#include "cgb/char_points.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace cgb {

namespace {

constexpr double kPi = std::numbers::pi;

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Mat2 jacobian(const FieldJets& j) {
  Mat2 m;
  m << j.Xu.gradient(0), j.Xu.gradient(1), j.Xv.gradient(0), j.Xv.gradient(1);
  return m;
}

Mat2 metric(const FieldJets& j) {
  Mat2 g;
  g << j.E.value(), j.F.value(), j.F.value(), j.G.value();
  return g;
}

// Periodic-aware displacement a - b in chart coordinates.
Vec2 displacement(const PlanarField& f, const Vec2& a, const Vec2& b) {
  Vec2 d = a - b;
  const auto bd = f.domain().bounds();
  const std::array<double, 2> period{bd[1] - bd[0], bd[3] - bd[2]};
  for (int i = 0; i < 2; ++i)
    if (f.periodic()[i]) d[i] -= period[i] * std::round(d[i] / period[i]);
  return d;
}

Vec2 wrap(const PlanarField& f, Vec2 x) {
  const auto bd = f.domain().bounds();
  const std::array<double, 2> lo{bd[0], bd[2]}, period{bd[1] - bd[0], bd[3] - bd[2]};
  for (int i = 0; i < 2; ++i)
    if (f.periodic()[i]) x[i] = lo[i] + std::fmod(std::fmod(x[i] - lo[i], period[i]) + period[i], period[i]);
  return x;
}

bool inside(const PlanarField& f, const Vec2& x, double slack = 0.0) {
  const ChartDomain& d = f.domain();
  if (d.kind == ChartDomain::Kind::Disk) return d.contains(x[0], x[1], slack);
  const bool uin = f.periodic()[0] || (x[0] >= d.u0 - slack && x[0] <= d.u1 + slack);
  const bool vin = f.periodic()[1] || (x[1] >= d.v0 - slack && x[1] <= d.v1 + slack);
  return uin && vin;
}

// Distance from x to the edge of the chart domain (periodic sides excluded).
double distance_to_edge(const PlanarField& f, const Vec2& x) {
  const ChartDomain& d = f.domain();
  if (d.kind == ChartDomain::Kind::Disk) return d.radius - std::hypot(x[0] - d.cu, x[1] - d.cv);
  double r = std::numeric_limits<double>::infinity();
  if (!f.periodic()[0]) r = std::min({r, x[0] - d.u0, d.u1 - x[0]});
  if (!f.periodic()[1]) r = std::min({r, x[1] - d.v0, d.v1 - x[1]});
  return r;
}

double safe_norm(const PlanarField& f, const Vec2& x) {
  try {
    return f.value(x[0], x[1]).norm();
  } catch (const Error&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

struct NewtonResult {
  Vec2 x;
  double residual;
  bool ok;
};

NewtonResult newton(const PlanarField& f, Vec2 x, const LocateOptions& o) {
  Vec2 F = f.value(x[0], x[1]);
  double f2 = F.squaredNorm();
  std::vector<double> plain_steps;
  for (int it = 0; it < o.max_iterations && f2 > 0.0; ++it) {
    const Mat2 J = jacobian(f.jets(x[0], x[1]));
    Vec2 d;
    const double scale = J.squaredNorm();
    if (J.determinant() != 0.0) d = J.partialPivLu().solve(-F);
    if (J.determinant() == 0.0 || !d.allFinite()) {
      const double lambda = 1e-8 * std::max(scale, 1e-300);
      d = (J.transpose() * J + lambda * Mat2::Identity()).ldlt().solve(-J.transpose() * F);
    }
    if (!d.allFinite()) break;

    // Linear convergence with a steady ratio r signals a multiple root; the
    // step scaled by 1/(1 - r) restores fast convergence.
    double mult = 1.0;
    const double dn = d.norm();
    if (plain_steps.size() >= 2) {
      const double r1 = dn / plain_steps.back();
      const double r0 = plain_steps.back() / plain_steps[plain_steps.size() - 2];
      if (r1 > 0.3 && r1 < 0.97 && std::fabs(r1 - r0) < 0.05) mult = std::round(1.0 / (1.0 - r1));
    }
    plain_steps.push_back(dn);

    auto trial = [&](double t) {
      const Vec2 y = wrap(f, x + t * d);
      if (!inside(f, y, 1e-9)) return std::numeric_limits<double>::infinity();
      const double n = safe_norm(f, y);
      return std::isnan(n) ? std::numeric_limits<double>::infinity() : n * n;
    };
    double t = 1.0;
    double best = trial(1.0);
    if (mult > 1.0) {
      const double acc = trial(mult);
      if (acc < best) {
        best = acc;
        t = mult;
      }
    }
    while (!(best < f2) && t > 1e-10) {
      t *= 0.5;
      best = trial(t);
    }
    if (!(best < f2)) break;
    x = wrap(f, x + t * d);
    F = f.value(x[0], x[1]);
    f2 = F.squaredNorm();
    if (std::sqrt(f2) < o.tol && t * dn < 1e-13 * (1.0 + x.norm())) break;
  }
  const double res = std::sqrt(f2);
  return {x, res, res < o.tol && inside(f, x)};
}

double ring_min(const PlanarField& f, const Vec2& q, double r) {
  constexpr int M = 128;
  auto at = [&](double th) { return safe_norm(f, Vec2(q[0] + r * std::cos(th), q[1] + r * std::sin(th))); };
  std::array<double, M> vals;
  int imin = 0;
  for (int i = 0; i < M; ++i) {
    vals[i] = at(2 * kPi * i / M);
    if (std::isnan(vals[i])) return 0.0;
    if (vals[i] < vals[imin]) imin = i;
  }
  // golden-section refinement around the sampled minimum
  double a = 2 * kPi * (imin - 1) / M, b = 2 * kPi * (imin + 1) / M;
  const double g = (std::sqrt(5.0) - 1) / 2;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = at(c), fd = at(d);
  for (int it = 0; it < 40; ++it) {
    if (fc < fd) {
      b = d, d = c, fd = fc;
      c = b - g * (b - a);
      fc = at(c);
    } else {
      a = c, c = d, fc = fd;
      d = a + g * (b - a);
      fd = at(d);
    }
  }
  return std::min({vals[imin], fc, fd});
}

struct CurveFit {
  std::vector<double> derivative;  // d^m/ds^m at 0
  std::vector<double> coeff;       // coefficients in t = s / r0
  double sup = 0.0;                // max |quantity| over the nodes
  double split_ratio = 0.0;        // max |λ0/λ1| over the nodes
};

double curve_quantity(const PlanarField& f, const Vec2& p, CurveQuantity what) {
  const Mat2 M = covariant_jacobian(f.jets(p[0], p[1]));
  const double tr = M.trace();
  if (std::fabs(tr) < 1e-12) throw TraceVanishes("trace of ∇X vanishes on the v0 curve");
  return what == CurveQuantity::Rho ? M.determinant() / tr : M.determinant() / (tr * tr);
}

CurveFit fit_along_v0(const PlanarField& f, const Vec2& q, CurveQuantity what, double r0, int nodes, int degree) {
  if (nodes < degree + 1) throw InvalidArgument("need more nodes than the fit degree");
  std::vector<double> s(nodes);
  for (int i = 0; i < nodes; ++i) s[i] = r0 * std::cos(kPi * (i + 0.5) / nodes);
  std::vector<double> val(nodes);
  double split_ratio = 0.0;

  const EigenSplit at_q = eigen_split(f, q);
  const double h = r0 / 128.0;
  for (int dir : {1, -1}) {
    std::vector<int> idx;
    for (int i = 0; i < nodes; ++i)
      if (s[i] * dir > 0) idx.push_back(i);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return std::fabs(s[a]) < std::fabs(s[b]); });
    Vec2 p = q;
    Vec2 last = dir * at_q.v0;
    double pos = 0.0;
    auto field = [&](const Vec2& y) {
      const Vec2 v = eigen_split(f, y, last).v0;
      return v;
    };
    for (int i : idx) {
      const double target = std::fabs(s[i]);
      while (pos < target - 1e-15) {
        const double step = std::min(h, target - pos);
        const Vec2 k1 = field(p);
        const Vec2 k2 = field(p + 0.5 * step * k1);
        const Vec2 k3 = field(p + 0.5 * step * k2);
        const Vec2 k4 = field(p + step * k3);
        p += step / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
        if (!p.allFinite() || !inside(f, p)) throw CurveTracingFailed("v0 curve left the chart domain");
        last = field(p);
        pos += step;
      }
      val[i] = curve_quantity(f, p, what);
      const EigenSplit e = eigen_split(f, p, last);
      split_ratio = std::max(split_ratio, std::fabs(e.lambda0 / e.lambda1));
    }
  }

  Eigen::MatrixXd V(nodes, degree + 1);
  Eigen::VectorXd y(nodes);
  CurveFit out;
  out.split_ratio = split_ratio;
  for (int i = 0; i < nodes; ++i) {
    const double t = s[i] / r0;
    double pw = 1.0;
    for (int m = 0; m <= degree; ++m, pw *= t) V(i, m) = pw;
    y[i] = val[i];
    out.sup = std::max(out.sup, std::fabs(val[i]));
  }
  const Eigen::VectorXd c = V.colPivHouseholderQr().solve(y);
  double fact = 1.0;
  for (int m = 0; m <= degree; ++m) {
    if (m > 0) fact *= m;
    out.coeff.push_back(c[m]);
    out.derivative.push_back(c[m] * fact / std::pow(r0, m));
  }
  return out;
}

}  // namespace

Vec2 ChartField::value(double u, double v) const { return characteristic_field(surface_jets(chart_, model_, u, v)).X; }

FieldSample ChartField::sample(double u, double v) const {
  const std::array<double, 2> at{u, v};
  Vec3 p, pu, pv;
  for (int i = 0; i < 3; ++i) {
    const SJet<1> c = eval_taylor<2, 1>(chart_.immersion[i], at);
    p[i] = c.value();
    pu[i] = c.gradient(0);
    pv[i] = c.gradient(1);
  }
  const Vec3 w = model_.omega(p), W = model_.curl(p), a = model_.f1(p), b = model_.f2(p);
  const Vec3 f0 = W / w.dot(W);
  const double det = a.dot(b.cross(f0));
  const Vec3 nu1 = b.cross(f0) / det, nu2 = f0.cross(a) / det;
  const double a1 = nu1.dot(pu), a2 = nu2.dot(pu), b1 = nu1.dot(pv), b2 = nu2.dot(pv);
  const double wu = w.dot(pu), wv = w.dot(pv);
  Mat2 g;
  g << a1 * a1 + a2 * a2 + wu * wu, a1 * b1 + a2 * b2 + wu * wv, a1 * b1 + a2 * b2 + wu * wv,
      b1 * b1 + b2 * b2 + wv * wv;
  const double area = chart_.orientation * std::sqrt(g.determinant());
  return {Vec2(wv / area, -wu / area), g, area};
}

FieldSample PlanarField::sample(double u, double v) const {
  const FieldJets j = jets(u, v);
  Mat2 g;
  g << j.E.value(), j.F.value(), j.F.value(), j.G.value();
  return {Vec2(j.Xu.value(), j.Xv.value()), g, j.area.value()};
}

FixtureField::FixtureField(const std::string& P, const std::string& Q, ChartDomain domain, std::string id)
    : P_(Expr::parse(P, {"x", "y"})), Q_(Expr::parse(Q, {"x", "y"})), domain_(domain), id_(std::move(id)) {}

FieldJets FixtureField::jets(double u, double v) const {
  const std::array<double, 2> at{u, v};
  const SJet<3> P = eval_taylor<2, 3>(P_, at), Q = eval_taylor<2, 3>(Q_, at);
  FieldJets j;
  j.Xu = P.truncate<2>();
  j.Xv = Q.truncate<2>();
  j.E = 1.0;
  j.F = 0.0;
  j.G = 1.0;
  j.area = 1.0;
  j.div = P.d(0) + Q.d(1);
  return j;
}

Vec2 FixtureField::value(double u, double v) const { return Vec2(P_({u, v}), Q_({u, v})); }

FixtureField normal_form_fixture(int k, double nu, double mu, const std::string& a1, const std::string& a0,
                                 const std::string& b0) {
  if (k < 1) throw InvalidOrder("order must be at least 1");
  double fact = 1.0;
  for (int i = 2; i <= k; ++i) fact *= i;
  std::string P = "x*(" + num(nu) + (a1.empty() ? "" : " + (" + a1 + ")") + ")";
  std::string Q = num(mu / fact) + "*y^" + std::to_string(k);
  if (!a0.empty()) Q += " + x*(" + a0 + ")";
  if (!b0.empty()) Q += " + (" + b0 + ")";
  return FixtureField(P, Q, ChartDomain::box(-1, 1, -1, 1),
                      "normal_form_k" + std::to_string(k) + "_nu" + num(nu) + "_mu" + num(mu));
}

std::vector<CharPointSeed> locate_characteristic_points(const PlanarField& field, const LocateOptions& o) {
  const auto bd = field.domain().bounds();
  const int N = o.grid;
  std::vector<double> norm(N * N, std::numeric_limits<double>::quiet_NaN());
  auto node = [&](int i, int j) {
    return Vec2(bd[0] + (bd[1] - bd[0]) * (i + 0.5) / N, bd[2] + (bd[3] - bd[2]) * (j + 0.5) / N);
  };
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j)
      if (inside(field, node(i, j))) norm[i * N + j] = safe_norm(field, node(i, j));

  std::vector<CharPointSeed> roots;
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j < N; ++j) {
      const double c = norm[i * N + j];
      if (std::isnan(c)) continue;
      bool is_min = true;
      for (int di = -1; di <= 1 && is_min; ++di) {
        for (int dj = -1; dj <= 1; ++dj) {
          if (di == 0 && dj == 0) continue;
          int a = i + di, b = j + dj;
          if (field.periodic()[0]) a = (a + N) % N;
          if (field.periodic()[1]) b = (b + N) % N;
          if (a < 0 || b < 0 || a >= N || b >= N) continue;
          const double nb = norm[a * N + b];
          if (!std::isnan(nb) && nb < c) {
            is_min = false;
            break;
          }
        }
      }
      if (!is_min) continue;
      const NewtonResult r = newton(field, node(i, j), o);
      if (!r.ok) continue;
      bool dup = false;
      for (auto& existing : roots) {
        if (displacement(field, r.x, Vec2(existing.u, existing.v)).norm() < 1e-6) {
          dup = true;
          if (r.residual < existing.residual) existing = {r.x[0], r.x[1], r.residual, 0.0};
          break;
        }
      }
      if (!dup) roots.push_back({r.x[0], r.x[1], r.residual, 0.0});
    }
  }
  std::sort(roots.begin(), roots.end(), [](const auto& a, const auto& b) { return a.u != b.u ? a.u < b.u : a.v < b.v; });

  for (auto& r : roots) {
    const Vec2 q(r.u, r.v);
    double cap = o.r_max;
    for (const auto& other : roots)
      if (&other != &r) cap = std::min(cap, 0.5 * displacement(field, q, Vec2(other.u, other.v)).norm());
    cap = std::min(cap, distance_to_edge(field, q));
    r.isolation_radius = isolation_radius(field, q, cap, o.tol);
  }
  return roots;
}

double isolation_radius(const PlanarField& field, const Vec2& q, double r_max, double tol) {
  for (double r = r_max; r >= 1e-6; r *= 0.5)
    if (ring_min(field, q, r) > 10.0 * tol) return r;
  throw NonIsolatedCharacteristicSet("|X| stays below " + num(10 * tol) + " on every circle around (" + num(q[0]) +
                                     ", " + num(q[1]) + ") of radius >= 1e-6");
}

Mat2 differential_at_zero(const PlanarField& field, const Vec2& q, double tol) {
  const double r = field.value(q[0], q[1]).norm();
  if (!(r < tol)) throw NotACharacteristicPoint("|X| = " + num(r) + " at (" + num(q[0]) + ", " + num(q[1]) + ")");
  return jacobian(field.jets(q[0], q[1]));
}

EigenSplit eigen_split(const PlanarField& field, const Vec2& p, const std::optional<Vec2>& previous_v0) {
  const FieldJets j = field.jets(p[0], p[1]);
  const Mat2 M = covariant_jacobian(j);
  const Mat2 g = metric(j);
  const double tr = M.trace(), det = M.determinant();
  const double disc = 0.25 * tr * tr - det;
  EigenSplit e;
  if (disc > 0.0) {
    e.lambda1 = 0.5 * tr + std::copysign(std::sqrt(disc), tr);
    e.lambda0 = det / e.lambda1;
  }
  if (!(disc > 0.0) || !(std::fabs(e.lambda0) < 0.8 * std::fabs(e.lambda1)))
    throw EigenvaluesCoalesce("eigenvalues of ∇X are not well separated at (" + num(p[0]) + ", " + num(p[1]) + ")");
  auto eigvec = [&](double lam) {
    const Vec2 a(M(0, 1), lam - M(0, 0)), b(lam - M(1, 1), M(1, 0));
    Vec2 v = a.squaredNorm() >= b.squaredNorm() ? a : b;
    return Vec2(v / std::sqrt(v.dot(g * v)));
  };
  e.v0 = eigvec(e.lambda0);
  e.v1 = eigvec(e.lambda1);
  if (previous_v0) {
    if (e.v0.dot(g * *previous_v0) < 0) e.v0 = -e.v0;
  } else {
    const int big = std::fabs(e.v0[0]) >= std::fabs(e.v0[1]) ? 0 : 1;
    if (e.v0[big] < 0) e.v0 = -e.v0;
  }
  const int big1 = std::fabs(e.v1[0]) >= std::fabs(e.v1[1]) ? 0 : 1;
  if (e.v1[big1] < 0) e.v1 = -e.v1;
  return e;
}

std::vector<double> v0_curve_derivatives(const PlanarField& field, const Vec2& q, CurveQuantity what, int max_order,
                                         double r0, int nodes, int degree) {
  CurveFit fit = fit_along_v0(field, q, what, r0, nodes, degree);
  fit.derivative.resize(std::min<std::size_t>(fit.derivative.size(), max_order + 1));
  return fit.derivative;
}

OrderResult order_and_lambda(const PlanarField& field, const Vec2& q, double isolation, const OrderOptions& o) {
  if (o.kmax < 1) throw InvalidOrder("kmax must be at least 1");
  const Mat2 D = covariant_jacobian(field.jets(q[0], q[1]));
  OrderResult r;
  r.trace = D.trace();
  r.det = D.determinant();
  if (std::fabs(r.trace) < 1e-12) throw TraceVanishes("trace of D_qX vanishes");
  if (std::fabs(r.det) >= o.degeneracy_tol * r.trace * r.trace) {
    r.k = 1;
    r.lambda = r.det / r.trace;
    return r;
  }
  // The window shrinks until λ0 stays well below λ1 on it: det/trace has a
  // pole where the trace vanishes, and the fit needs to stay clear of it.
  double r0 = std::min(o.r0, 0.5 * isolation);
  const int degree = std::min(o.kmax + 6, o.nodes - 1);
  CurveFit fit;
  for (int attempt = 0;; ++attempt, r0 *= 0.5) {
    try {
      fit = fit_along_v0(field, q, CurveQuantity::Rho, r0, o.nodes, degree);
      if (fit.split_ratio <= 0.25) break;
    } catch (const EigenvaluesCoalesce&) {
    } catch (const TraceVanishes&) {
    } catch (const CurveTracingFailed&) {
    }
    if (attempt >= 6) throw CurveTracingFailed("no window around q keeps the eigenvalues of ∇X separated");
  }
  const double floor = o.noise * std::max(1.0, fit.sup);
  for (int m = 1; m + 1 <= o.kmax; ++m) {
    if (std::fabs(fit.coeff[m]) >= floor) {
      r.k = m + 1;
      r.lambda = fit.derivative[m];
      if (r.k % 2 == 0) {
        r.sign_ambiguous = true;
        r.lambda = std::fabs(r.lambda);
      }
      return r;
    }
  }
  throw OrderExceedsKmax("no derivative of det/trace along v0 above the noise floor up to order " +
                         std::to_string(o.kmax));
}

int index_formula(int k, double trace, double lambda) {
  if (k < 1) throw InvalidOrder("order must be at least 1, got " + std::to_string(k));
  if (k % 2 == 0) return 0;
  const double s = trace * lambda;
  if (s == 0.0) throw InvalidArgument("trace·Λ vanishes for odd order");
  return s > 0 ? 1 : -1;
}

int winding_index(const PlanarField& field, const Vec2& q, double radius, int samples) {
  if (samples < 64) throw InvalidArgument("winding index needs at least 64 samples");
  auto X = [&](double th) {
    const Vec2 x = field.value(q[0] + radius * std::cos(th), q[1] + radius * std::sin(th));
    if (!(x.norm() > 1e-300)) throw AngleUnwrapFailed("X vanishes on the winding circle");
    return x;
  };
  auto angle_between = [](const Vec2& a, const Vec2& b) {
    return std::atan2(a[0] * b[1] - a[1] * b[0], a.dot(b));
  };
  // Adds the angle swept from th_a to th_b, bisecting while a step exceeds π/4.
  auto sweep = [&](auto&& self, double ta, const Vec2& xa, double tb, const Vec2& xb, int depth) -> double {
    const double d = angle_between(xa, xb);
    if (std::fabs(d) <= kPi / 4) return d;
    if (depth >= 40) throw AngleUnwrapFailed("angle of X jumps on the winding circle even after refinement");
    const double tm = 0.5 * (ta + tb);
    const Vec2 xm = X(tm);
    return self(self, ta, xa, tm, xm, depth + 1) + self(self, tm, xm, tb, xb, depth + 1);
  };
  double total = 0.0;
  Vec2 prev = X(0.0);
  const Vec2 first = prev;
  for (int i = 1; i <= samples; ++i) {
    const double th = 2 * kPi * i / samples;
    const Vec2 cur = i == samples ? first : X(th);
    total += sweep(sweep, 2 * kPi * (i - 1) / samples, prev, th, cur, 0);
    prev = cur;
  }
  const double turns = total / (2 * kPi);
  const double n = std::round(turns);
  if (std::fabs(turns - n) >= 0.05) throw AngleUnwrapFailed("winding number " + num(turns) + " is not near an integer");
  return static_cast<int>(n);
}

double hat_K(const PlanarField& field, const Vec2& p) {
  const Mat2 M = covariant_jacobian(field.jets(p[0], p[1]));
  const double tr = M.trace();
  if (std::fabs(tr) < 1e-12) throw TraceVanishes("trace of ∇X vanishes at (" + num(p[0]) + ", " + num(p[1]) + ")");
  return -1.0 + M.determinant() / (tr * tr);
}

CharPoint classify_point(const PlanarField& field, const CharPointSeed& seed, const ClassifyOptions& opts) {
  CharPoint c;
  c.chart_id = field.id();
  c.u = seed.u;
  c.v = seed.v;
  c.ambient = field.ambient(seed.u, seed.v);
  c.isolation_radius = seed.isolation_radius;
  c.residual = seed.residual;
  const Vec2 q(seed.u, seed.v);
  c.D = differential_at_zero(field, q, std::max(1e-8, 10 * opts.locate.tol));
  c.trace = c.D.trace();
  c.det = c.D.determinant();
  c.hat_K = -1.0 + c.det / (c.trace * c.trace);
  try {
    const OrderResult o = order_and_lambda(field, q, seed.isolation_radius, opts.order);
    c.order = o.k;
    c.lambda = o.lambda;
    c.lambda_sign_ambiguous = o.sign_ambiguous;
    c.index_by_formula = index_formula(o.k, o.trace, o.lambda);
  } catch (const OrderExceedsKmax&) {
    c.order_exceeds_kmax = true;
  }
  c.index_by_winding = winding_index(field, q, 0.5 * seed.isolation_radius, opts.winding_samples);
  return c;
}

std::vector<CharPoint> classify(const PlanarField& field, const ClassifyOptions& opts) {
  std::vector<CharPoint> out;
  for (const auto& s : locate_characteristic_points(field, opts.locate)) out.push_back(classify_point(field, s, opts));
  return out;
}

EulerResult euler_characteristic(const std::vector<CharPoint>& points) {
  EulerResult e;
  e.contact_topology_warning = points.empty();
  for (const auto& p : points) {
    if (p.order < 1)
      throw UnclassifiedPoint("characteristic point at (" + num(p.u) + ", " + num(p.v) + ") in chart " + p.chart_id +
                              " has no order");
    e.from_indices += p.index_by_winding;
    if (p.order % 2 == 1) e.from_formula += index_formula(p.order, p.trace, p.lambda);
  }
  return e;
}

std::vector<double> lambda_gamma_fixture(const FixtureField& field, const std::string& gx, const std::string& gy,
                                         int order) {
  constexpr int kMax = 8;
  if (order < 0 || order > kMax) throw OrderUnsupported("curve derivative order must be in 0..8");
  using T = Taylor<1, kMax + 1>;
  const std::array<double, 1> t0{0.0};
  const std::array<T, 2> gam{eval_taylor<1, kMax + 1>(Expr::parse(gx, {"t"}), t0),
                             eval_taylor<1, kMax + 1>(Expr::parse(gy, {"t"}), t0)};
  const Vec2 q(gam[0].value(), gam[1].value());
  const Mat2 D = differential_at_zero(field, q, 1e-8);
  const Vec2 tangent(gam[0].gradient(0), gam[1].gradient(0));
  if (!(tangent.norm() > 0.0) || (D * tangent).norm() > 1e-8 * std::max(1.0, D.norm()) * tangent.norm())
    throw NotAKernelExtension("γ'(0) = (" + num(tangent[0]) + ", " + num(tangent[1]) + ") is not in ker D_qX");
  const T P = field.P().evaluate<T>(gam), Q = field.Q().evaluate<T>(gam);
  const Taylor<1, kMax> lam = P * gam[0].d(0) + Q * gam[1].d(0);
  std::vector<double> out;
  for (int j = 0; j <= order; ++j) out.push_back(lam.partial({j}));
  return out;
}

}  // namespace cgb
