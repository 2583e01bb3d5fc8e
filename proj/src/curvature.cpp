#include "cgb/curvature.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <queue>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace cgb {

double b_eps(double div, double eps) {
  if (!(eps > 0.0 && eps <= 1.0)) throw InvalidArgument("ε must lie in (0, 1]");
  if (!(std::fabs(div) <= 1.0 + 1e-12)) throw DivergenceOutOfRange("|div X| = " + std::to_string(std::fabs(div)));
  return std::sqrt(std::max(0.0, 1.0 - div * div * (1.0 - eps)));
}

namespace {

SJet<1> t1(const SJet<2>& j) { return j.truncate<1>(); }

SJet<2> norm_sq(const FieldJets& f) {
  return f.Xu * (f.E * f.Xu + f.F * f.Xv) + f.Xv * (f.F * f.Xu + f.G * f.Xv);
}

void require_off_sigma(double norm, double frame_tol) {
  if (!(norm > frame_tol))
    throw TooCloseToCharacteristicSet("|X| = " + std::to_string(norm) + " is below the frame tolerance");
}

}  // namespace

EpsFrameSample connection_form_eps(const SurfaceJets& s, double eps, double frame_tol) {
  if (!(eps > 0.0)) throw InvalidArgument("ε must be positive");
  const FieldJets f = field_jets(s);
  const SJet<2> n = sqrt(norm_sq(f));
  require_off_sigma(n.value(), frame_tol);

  const SJet<1> E = t1(f.E), F = t1(f.F), G = t1(f.G), A = t1(f.area);
  const SJet<1> e1u = t1(f.Xu / n), e1v = t1(f.Xv / n);
  const SJet<1> th1u = E * e1u + F * e1v, th1v = F * e1u + G * e1v;
  const SJet<1> e2u = -th1v / A, e2v = th1u / A;
  const SJet<1> th2u = E * e2u + F * e2v, th2v = F * e2u + G * e2v;

  const auto nab = covariant_jacobian<2>(f.Xu, f.Xv, f.E, f.F, f.G);
  auto g_nabla_e1 = [&](const SJet<1>& wu, const SJet<1>& wv) {  // g(∇_w X, e1)
    return (nab[0][0] * wu + nab[0][1] * wv) * th1u + (nab[1][0] * wu + nab[1][1] * wv) * th1v;
  };
  const SJet<2> lu = f.E * f.Xu + f.F * f.Xv, lv = f.F * f.Xu + f.G * f.Xv;
  const SJet<1> div_jx = (lu.d(1) - lv.d(0)) / A;
  const SJet<1> n1 = t1(n), div1 = t1(f.div);
  const SJet<1> c2 = (div1 - g_nabla_e1(e1u, e1v)) / n1;
  const SJet<1> c1 = (g_nabla_e1(e2u, e2v) - div_jx) / n1;

  const SJet<2> b = sqrt(1.0 - (1.0 - eps) * (f.div * f.div));
  const SJet<1> b1 = t1(b);
  const SJet<1> e1b = e1u * b.d(0) + e1v * b.d(1);
  const double se = std::sqrt(eps);
  const SJet<1> k1 = -(se / b1) * c1;
  const SJet<1> k2 = -(c2 * b1 + e1b) / se;
  const SJet<1> eta_u = k1 * th1u + k2 * th2u, eta_v = k1 * th1v + k2 * th2v;

  EpsFrameSample out;
  out.b_eps = b1.value();
  out.theta1 = Vec2(th1u.value(), th1v.value());
  out.theta2 = Vec2(th2u.value(), th2v.value());
  out.c1 = c1.value();
  out.c2 = c2.value();
  out.eta_eps = Vec2(eta_u.value(), eta_v.value());
  out.d_eta = eta_v.d(0).value() - eta_u.d(1).value();
  out.sr_norm = n.value();
  return out;
}

EpsFrameSample connection_form_eps(const SurfaceChart& chart, const ContactModel& model, double eps, double u,
                                   double v, double frame_tol) {
  return connection_form_eps(surface_jets(chart, model, u, v), eps, frame_tol);
}

namespace {

std::array<SJet<1>, 2> alpha_jets(const SurfaceJets& s, double frame_tol) {
  const FieldJets f = field_jets(s);
  const SJet<2> n = sqrt(norm_sq(f));
  require_off_sigma(n.value(), frame_tol);
  const SJet<1> k = -t1(f.div / n);
  return {k * t1(s.wu), k * t1(s.wv)};
}

}  // namespace

Vec2 alpha_form(const SurfaceJets& s, double frame_tol) {
  const auto a = alpha_jets(s, frame_tol);
  return {a[0].value(), a[1].value()};
}

double k_sigma_density(const SurfaceJets& s, double eps) {
  const FundamentalForm I = first_fundamental_form(s, eps);
  return brioschi(I) * s.orientation * std::sqrt(I.det());
}

double mu_minus_one_density(const SurfaceJets& s, double frame_tol) {
  const auto a = alpha_jets(s, frame_tol);
  return a[1].d(0).value() - a[0].d(1).value();
}

double mu_minus_one_density(const SurfaceChart& chart, const ContactModel& model, double u, double v,
                            double frame_tol) {
  return mu_minus_one_density(surface_jets(chart, model, u, v), frame_tol);
}

const char* density_kind_name(DensityKind kind) {
  switch (kind) {
    case DensityKind::KSigma: return "K_eps_sigma_eps";
    case DensityKind::MuMinusOne: return "mu_minus_one";
    case DensityKind::Difference: return "difference";
    case DensityKind::InvNorm: return "inv_norm";
  }
  return "?";
}

MeasureDensity measure_density(const SurfaceJets& s, DensityKind kind, std::optional<double> eps) {
  const bool needs_eps = kind == DensityKind::KSigma || kind == DensityKind::Difference;
  if (needs_eps && !eps) throw InvalidArgument(std::string(density_kind_name(kind)) + " needs ε");
  MeasureDensity m;
  m.kind = kind;
  if (needs_eps) m.epsilon = eps;
  switch (kind) {
    case DensityKind::KSigma: m.density = k_sigma_density(s, *eps); break;
    case DensityKind::MuMinusOne: m.density = mu_minus_one_density(s); break;
    case DensityKind::Difference:
      m.density = k_sigma_density(s, *eps) - mu_minus_one_density(s) / std::sqrt(*eps);
      break;
    case DensityKind::InvNorm: {
      const CharFieldSample c = characteristic_field(s);
      require_off_sigma(c.sr_norm, kFrameTolerance);
      m.density = s.orientation * std::sqrt(first_fundamental_form(s, 1.0).det()) / c.sr_norm;
      break;
    }
  }
  return m;
}

double TestFunction::operator()(const SurfaceChart& chart, double u, double v) const {
  if (support && !support->contains(u, v)) return 0.0;
  if (!ambient) return expr({u, v});
  const Vec3 p = chart.point(u, v);
  return expr({p.x(), p.y(), p.z()});
}

TestFunction make_test_function(const std::string& source, bool ambient, std::optional<ChartDomain> support) {
  TestFunction t;
  t.source = source;
  t.ambient = ambient;
  t.expr = ambient ? Expr::parse(source, {"x", "y", "z"}) : Expr::parse(source, {"u", "v"});
  t.support = support;
  return t;
}

// ---------------------------------------------------------------------------
// Quadrature

namespace {

struct Rule {
  std::vector<double> x, w;  // on [0, 1]
};

// Golub-Welsch.
Rule gauss_legendre(int n) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) J(i, i - 1) = J(i - 1, i) = i / std::sqrt(4.0 * i * i - 1.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  Rule r;
  for (int i = 0; i < n; ++i) {
    const double v0 = es.eigenvectors()(0, i);
    r.x.push_back(0.5 * (es.eigenvalues()[i] + 1.0));
    r.w.push_back(v0 * v0);  // weights on [-1,1] are 2v0², halved for [0,1]
  }
  return r;
}

// Irrational lattice shift so periodic nodes never land on special angles.
const double kAngularShift = 0.5 * (std::sqrt(5.0) - 1.0);

class Accumulator {
 public:
  Accumulator(int components, const VectorDensity& f) : sum_(components, 0.0), buf_(components), f_(f) {}
  void add(double u, double v, double weight) {
    f_(u, v, buf_.data());
    for (std::size_t i = 0; i < sum_.size(); ++i) sum_[i] += weight * buf_[i];
  }
  // Largest |density|·jacobian seen through `probe` (for dropped-disk bounds).
  void probe(double u, double v, double scale, std::vector<double>& worst) {
    f_(u, v, buf_.data());
    for (std::size_t i = 0; i < sum_.size(); ++i) worst[i] = std::max(worst[i], std::fabs(buf_[i]) * scale);
  }
  std::vector<double>& sum() { return sum_; }

 private:
  std::vector<double> sum_, buf_;
  const VectorDensity& f_;
};

struct LevelResult {
  std::vector<double> value;
  std::vector<double> dropped;  // bound on the part of the region left out near singular points
};

// Geometric panels on [s_min, 1] with ratio q, outermost first.
std::vector<std::pair<double, double>> graded_panels(double s_min, double q) {
  std::vector<std::pair<double, double>> p;
  double hi = 1.0;
  while (hi > s_min) {
    const double lo = std::max(hi * q, s_min);
    p.emplace_back(lo, hi);
    hi = lo;
  }
  return p;
}

// Triangle (c, c + a, c + b) with a singular vertex at c, via the Duffy map
// x = c + s((1 − t)a + t b), dA = s|a × b| ds dt.
void duffy_triangle(const Vec2& c, const Vec2& a, const Vec2& b, int level, double r_in, const QuadSpec& spec,
                    const Rule& gl, Accumulator& acc, std::vector<double>& dropped) {
  const double jac = std::fabs(a[0] * b[1] - a[1] * b[0]);
  if (jac == 0.0) return;
  const double len = std::max(a.norm(), b.norm());
  const double s_min = std::min(0.5, r_in / len);
  const double q = std::pow(spec.ratio, 1.0 / (1 << level));
  const int t_panels = 2 << level;
  const auto panels = graded_panels(s_min, q);
  for (const auto& [lo, hi] : panels)
    for (std::size_t i = 0; i < gl.x.size(); ++i) {
      const double s = lo + (hi - lo) * gl.x[i];
      const double ws = (hi - lo) * gl.w[i];
      for (int tp = 0; tp < t_panels; ++tp)
        for (std::size_t j = 0; j < gl.x.size(); ++j) {
          const double t = (tp + gl.x[j]) / t_panels;
          const Vec2 x = c + s * ((1 - t) * a + t * b);
          acc.add(x[0], x[1], ws * gl.w[j] / t_panels * s * jac);
        }
    }
  // ∫_0^{s_min} of a density bounded by C/(s·len) contributes at most C·s_min·jac/len.
  std::vector<double> worst(dropped.size(), 0.0);
  for (int j = 0; j < 8; ++j) {
    const double t = (j + 0.5) / 8;
    const Vec2 x = c + s_min * ((1 - t) * a + t * b);
    acc.probe(x[0], x[1], s_min * s_min * jac, worst);
  }
  for (std::size_t i = 0; i < dropped.size(); ++i) dropped[i] += worst[i];
}

void tensor_cell(double u0, double u1, double v0, double v1, int nu, int nv, const Rule& gl, Accumulator& acc) {
  const double hu = (u1 - u0) / nu, hv = (v1 - v0) / nv;
  for (int pu = 0; pu < nu; ++pu)
    for (std::size_t i = 0; i < gl.x.size(); ++i) {
      const double u = u0 + hu * (pu + gl.x[i]);
      for (int pv = 0; pv < nv; ++pv)
        for (std::size_t j = 0; j < gl.x.size(); ++j) acc.add(u, v0 + hv * (pv + gl.x[j]), hu * hv * gl.w[i] * gl.w[j]);
    }
}

double inner_radius(const QuadSpec& spec, double patch) { return spec.inner * std::min(patch, 0.1); }

LevelResult box_level(const ChartDomain& box, const std::vector<Vec2>& singular, int components,
                      const VectorDensity& f, const QuadSpec& spec, const Rule& gl, int level) {
  std::vector<double> us{box.u0, box.u1}, vs{box.v0, box.v1};
  std::vector<Vec2> inside;
  for (const Vec2& q : singular)
    if (box.contains(q[0], q[1])) {
      inside.push_back(q);
      us.push_back(q[0]);
      vs.push_back(q[1]);
    }
  auto uniq = [](std::vector<double>& w) {
    std::sort(w.begin(), w.end());
    w.erase(std::unique(w.begin(), w.end()), w.end());
  };
  uniq(us);
  uniq(vs);
  Accumulator acc(components, f);
  LevelResult out{{}, std::vector<double>(components, 0.0)};
  const double W = box.u1 - box.u0, H = box.v1 - box.v0;
  const int per_side = spec.box_panels << level;

  // Cells may still have more than one singular corner when points share a
  // coordinate; such cells are quartered until each has at most one.
  std::function<void(double, double, double, double, int)> cell = [&](double a, double b, double c, double d,
                                                                       int depth) {
    if (b - a <= 0 || d - c <= 0) return;
    const std::array<Vec2, 4> corners{Vec2(a, c), Vec2(b, c), Vec2(b, d), Vec2(a, d)};
    std::vector<int> hits;
    for (int k = 0; k < 4; ++k)
      for (const Vec2& q : inside)
        if ((corners[k] - q).norm() < 1e-14 * (1 + q.norm())) hits.push_back(k);
    if (hits.size() > 1 && depth < 4) {
      const double mu = 0.5 * (a + b), mv = 0.5 * (c + d);
      cell(a, mu, c, mv, depth + 1);
      cell(mu, b, c, mv, depth + 1);
      cell(a, mu, mv, d, depth + 1);
      cell(mu, b, mv, d, depth + 1);
      return;
    }
    if (hits.empty()) {
      const int nu = std::max(1, static_cast<int>(std::ceil(per_side * (b - a) / W)));
      const int nv = std::max(1, static_cast<int>(std::ceil(per_side * (d - c) / H)));
      tensor_cell(a, b, c, d, nu, nv, gl, acc);
      return;
    }
    const int k = hits.front();
    const Vec2 q = corners[k], opp = corners[(k + 2) % 4];
    const Vec2 n1 = corners[(k + 1) % 4], n2 = corners[(k + 3) % 4];
    const double r_in = inner_radius(spec, std::min(b - a, d - c));
    duffy_triangle(q, n1 - q, opp - q, level, r_in, spec, gl, acc, out.dropped);
    duffy_triangle(q, opp - q, n2 - q, level, r_in, spec, gl, acc, out.dropped);
  };
  for (std::size_t i = 0; i + 1 < us.size(); ++i)
    for (std::size_t j = 0; j + 1 < vs.size(); ++j) cell(us[i], us[i + 1], vs[j], vs[j + 1], 0);
  out.value = acc.sum();
  return out;
}

// Disk region in polar form around c (its centre, or the single singular
// point inside it): x = c + s R(θ) e(θ), s ∈ [0, 1].
LevelResult disk_level(const ChartDomain& disk, const std::vector<Vec2>& singular, int components,
                       const VectorDensity& f, const QuadSpec& spec, const Rule& gl, int level) {
  const Vec2 centre(disk.cu, disk.cv);
  Vec2 c = centre;
  int count = 0;
  for (const Vec2& q : singular)
    if ((q - centre).norm() < disk.radius * (1 - 1e-12)) {
      c = q;
      ++count;
    }
  if (count > 1)
    throw InvalidArgument("a disk integration region may contain at most one characteristic point");
  const Vec2 d = c - centre;
  auto R = [&](double th) {
    const Vec2 e(std::cos(th), std::sin(th));
    const double de = d.dot(e);
    return -de + std::sqrt(de * de - d.squaredNorm() + disk.radius * disk.radius);
  };
  const double r_in = inner_radius(spec, disk.radius - d.norm());
  const double s_min = std::min(0.5, r_in / (disk.radius + d.norm()));
  const double q = std::pow(spec.ratio, 1.0 / (1 << level));
  const auto panels = graded_panels(s_min, q);
  const int nt = spec.angular << level;
  Accumulator acc(components, f);
  LevelResult out{{}, std::vector<double>(components, 0.0)};
  std::vector<double> worst(components, 0.0);
  for (int k = 0; k < nt; ++k) {
    const double th = 2 * M_PI * (k + kAngularShift) / nt;
    const Vec2 e(std::cos(th), std::sin(th));
    const double Rt = R(th);
    const double wt = 2 * M_PI / nt * Rt * Rt;
    for (const auto& [lo, hi] : panels)
      for (std::size_t i = 0; i < gl.x.size(); ++i) {
        const double s = lo + (hi - lo) * gl.x[i];
        const Vec2 x = c + s * Rt * e;
        acc.add(x[0], x[1], wt * (hi - lo) * gl.w[i] * s);
      }
    const Vec2 x = c + s_min * Rt * e;
    acc.probe(x[0], x[1], 2 * M_PI * s_min * s_min * Rt * Rt, worst);
  }
  out.value = acc.sum();
  out.dropped = worst;
  return out;
}

}  // namespace

std::vector<QuadResult> integrate_region(const ChartDomain& region, const std::vector<Vec2>& singular, int components,
                                         const VectorDensity& f, const QuadSpec& spec) {
  if (components <= 0) return {};
  const Rule gl = gauss_legendre(spec.gl_order);
  auto level = [&](int L) {
    return region.kind == ChartDomain::Kind::Box ? box_level(region, singular, components, f, spec, gl, L)
                                                 : disk_level(region, singular, components, f, spec, gl, L);
  };
  LevelResult prev = level(0);
  std::vector<QuadResult> out(components);
  double worst_ratio = 0.0;
  for (int L = 1; L <= spec.max_refine; ++L) {
    const LevelResult cur = level(L);
    worst_ratio = 0.0;
    for (int i = 0; i < components; ++i) {
      out[i].value = cur.value[i];
      out[i].error = std::fabs(cur.value[i] - prev.value[i]) + cur.dropped[i];
      worst_ratio = std::max(worst_ratio, out[i].error / (spec.tol * std::max(1.0, std::fabs(cur.value[i]))));
    }
    if (worst_ratio <= 1.0) return out;
    prev = cur;
  }
  throw QuadratureNotConverged("error estimate " + std::to_string(worst_ratio) + "× the tolerance after " +
                               std::to_string(spec.max_refine) + " refinements");
}

namespace {

std::vector<Vec2> singular_in_chart(const SurfaceChart& chart, const std::vector<CharPoint>& points) {
  std::vector<Vec2> out;
  for (const CharPoint& p : points)
    if (p.chart_id == chart.id) out.emplace_back(p.u, p.v);
  return out;
}

ChartDomain region_for(const SurfaceChart& chart, const TestFunction& phi) {
  if (!phi.support) return chart.domain;
  const auto b = phi.support->bounds();
  const double slack = 1e-12;
  const bool inside = phi.support->kind == ChartDomain::Kind::Disk
                          ? chart.domain.kind == ChartDomain::Kind::Box
                                ? chart.domain.contains(b[0], b[2], slack) && chart.domain.contains(b[1], b[3], slack)
                                : std::hypot(phi.support->cu - chart.domain.cu, phi.support->cv - chart.domain.cv) +
                                          phi.support->radius <=
                                      chart.domain.radius + slack
                          : chart.domain.contains(b[0], b[2], slack) && chart.domain.contains(b[1], b[3], slack);
  if (!inside) throw InvalidArgument("test function support leaves chart '" + chart.id + "'");
  return *phi.support;
}

// Runs `per_node` over every chart of the atlas and sums the weighted results.
std::vector<QuadResult> integrate_atlas(
    const Atlas& atlas, const ContactModel& model, const TestFunction& phi, const std::vector<CharPoint>& points,
    int components, const std::function<void(const SurfaceJets&, double phi_w, double* out)>& per_node,
    const QuadSpec& spec) {
  std::vector<QuadResult> total(components);
  for (const SurfaceChart& chart : atlas.charts) {
    const VectorDensity f = [&](double u, double v, double* out) {
      const double w = phi(chart, u, v) * chart.weight_at(u, v) * chart.orientation;
      if (w == 0.0) {
        std::fill(out, out + components, 0.0);
        return;
      }
      per_node(surface_jets(chart, model, u, v), w, out);
    };
    const auto part = integrate_region(region_for(chart, phi), singular_in_chart(chart, points), components, f, spec);
    for (int i = 0; i < components; ++i) {
      total[i].value += part[i].value;
      total[i].error += part[i].error;
    }
  }
  return total;
}

}  // namespace

QuadResult integrate_measure(const Atlas& atlas, const ContactModel& model, DensityKind kind,
                             std::optional<double> eps, const TestFunction& phi, const std::vector<CharPoint>& points,
                             const QuadSpec& spec) {
  return integrate_atlas(
      atlas, model, phi, points, 1,
      [&](const SurfaceJets& s, double w, double* out) { out[0] = w * measure_density(s, kind, eps).density; },
      spec)[0];
}

SweepIntegrals sweep_integrals(const Atlas& atlas, const ContactModel& model, const std::vector<double>& epsilons,
                               const TestFunction& phi, const std::vector<CharPoint>& points, const QuadSpec& spec) {
  for (double e : epsilons)
    if (!(e > 0.0)) throw InvalidArgument("ε must be positive");
  const int n = static_cast<int>(epsilons.size());
  const auto r = integrate_atlas(
      atlas, model, phi, points, 2 * n + 1,
      [&](const SurfaceJets& s, double w, double* out) {
        const double mu = mu_minus_one_density(s);
        for (int i = 0; i < n; ++i) {
          const double k = k_sigma_density(s, epsilons[i]);
          out[i] = w * (k - mu / std::sqrt(epsilons[i]));
          out[n + i] = w * k;
        }
        out[2 * n] = w * mu;
      },
      spec);
  SweepIntegrals sw;
  sw.epsilons = epsilons;
  sw.difference.assign(r.begin(), r.begin() + n);
  sw.k_sigma.assign(r.begin() + n, r.begin() + 2 * n);
  sw.mu_minus_one = r[2 * n];
  return sw;
}

double delta_target(const Atlas& atlas, const TestFunction& phi, const std::vector<CharPoint>& points) {
  double sum = 0.0;
  std::vector<Vec3> seen;
  for (const CharPoint& p : points) {
    if (p.ambient) {
      bool dup = false;
      for (const Vec3& s : seen) dup = dup || (s - *p.ambient).norm() < 1e-6;
      if (dup) continue;
      seen.push_back(*p.ambient);
    }
    for (const SurfaceChart& c : atlas.charts)
      if (c.id == p.chart_id) {
        sum += phi(c, p.u, p.v) * p.index_by_winding;
        break;
      }
  }
  return 2 * M_PI * sum;
}

std::vector<ConvergenceRow> convergence_table(const SweepIntegrals& sweep, double target) {
  std::vector<ConvergenceRow> rows;
  for (std::size_t i = 0; i < sweep.epsilons.size(); ++i) {
    ConvergenceRow r;
    r.epsilon = sweep.epsilons[i];
    r.integral = sweep.difference[i].value;
    r.target = target;
    r.abs_error = std::fabs(r.integral - target);
    r.quad_error = sweep.difference[i].error;
    rows.push_back(r);
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const ConvergenceRow& a, const ConvergenceRow& b) { return a.epsilon > b.epsilon; });
  return rows;
}

std::vector<ConvergenceRow> convergence_table(const Atlas& atlas, const ContactModel& model,
                                              const std::vector<double>& epsilons, const TestFunction& phi,
                                              const std::vector<CharPoint>& points, const QuadSpec& spec) {
  return convergence_table(sweep_integrals(atlas, model, epsilons, phi, points, spec), delta_target(atlas, phi, points));
}

std::size_t convergence_knee(const std::vector<ConvergenceRow>& rows) {
  if (rows.empty()) return 0;
  std::size_t knee = rows.size() - 1;
  while (knee > 0 && rows[knee - 1].abs_error >= rows[knee].abs_error) --knee;
  return knee;
}

MuLimitCheck mu_limit_check(const SweepIntegrals& sweep) {
  MuLimitCheck m;
  const std::size_t n = sweep.epsilons.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return sweep.epsilons[a] > sweep.epsilons[b]; });
  m.direct = sweep.mu_minus_one.value;
  std::vector<double> y, r;
  for (std::size_t i : order) {
    const double se = std::sqrt(sweep.epsilons[i]);
    m.epsilons.push_back(sweep.epsilons[i]);
    y.push_back(se * sweep.k_sigma[i].value);
    r.push_back(se);
    m.deviation.push_back(std::fabs(y.back() - m.direct));
    m.max_deviation = std::max(m.max_deviation, m.deviation.back());
  }
  if (n == 0) return m;
  // y(√ε) = L + a√ε + O(ε^{3/2}); eliminate the linear term from the two smallest ε.
  auto richardson = [&](std::size_t i, std::size_t j, double* coef_i, double* coef_j) {
    *coef_i = -r[j] / (r[i] - r[j]);
    *coef_j = r[i] / (r[i] - r[j]);
    return *coef_i * y[i] + *coef_j * y[j];
  };
  m.quad_error = sweep.mu_minus_one.error;
  if (n == 1) {
    m.extrapolated = y[0];
    m.extrapolation_error = std::fabs(y[0] - m.direct);
    m.quad_error += r[0] * sweep.k_sigma[order[0]].error;
  } else {
    double ci, cj;
    m.extrapolated = richardson(n - 2, n - 1, &ci, &cj);
    m.quad_error += std::fabs(ci) * r[n - 2] * sweep.k_sigma[order[n - 2]].error +
                    std::fabs(cj) * r[n - 1] * sweep.k_sigma[order[n - 1]].error;
    if (n >= 3) {
      double a, b;
      m.extrapolation_error = std::fabs(m.extrapolated - richardson(n - 3, n - 2, &a, &b));
    } else {
      m.extrapolation_error = std::fabs(m.extrapolated - y[n - 1]);
    }
  }
  m.consistent = std::fabs(m.direct - m.extrapolated) <= 5.0 * (m.quad_error + m.extrapolation_error);
  return m;
}

// ---------------------------------------------------------------------------
// Integrability of |X|⁻¹

namespace {

using GK15 = boost::math::quadrature::gauss_kronrod<double, 15>;

struct Adaptive {
  double value = 0, error = 0;
  bool converged = false;
};

// Globally adaptive G7K15: bisect the interval with the largest error estimate
// until the total error is below rel·|I| or the interval budget runs out.
template <class F>
Adaptive adaptive_gk(F&& f, double a, double b, double rel, int max_intervals) {
  struct Piece {
    double a, b, value, error;
    bool operator<(const Piece& o) const { return error < o.error; }
  };
  auto eval = [&](double lo, double hi) {
    double err = 0.0;
    const double v = GK15::integrate(f, lo, hi, 0, 0.0, &err);
    return Piece{lo, hi, v, err};
  };
  std::priority_queue<Piece> heap;
  heap.push(eval(a, b));
  Adaptive out;
  out.value = heap.top().value;
  out.error = heap.top().error;
  for (int n = 1;; ++n) {
    if (!std::isfinite(out.value)) return out;
    if (out.error <= rel * std::fabs(out.value)) {
      out.converged = true;
      return out;
    }
    if (n >= max_intervals) return out;
    const Piece worst = heap.top();
    heap.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    if (!(mid > worst.a && mid < worst.b)) return out;
    const Piece l = eval(worst.a, mid), r = eval(mid, worst.b);
    out.value += l.value + r.value - worst.value;
    out.error += l.error + r.error - worst.error;
    heap.push(l);
    heap.push(r);
  }
}

double inv_norm_density(const PlanarField& field, double u, double v) {
  const FieldSample j = field.sample(u, v);
  const Vec2 X = j.X;
  return std::fabs(j.area) / std::sqrt(X.dot(j.metric * X));
}

}  // namespace

IntegrabilityProbe inv_norm_integrability_probe(const PlanarField& field, const Vec2& q,
                                                const std::vector<double>& radii, double tol) {
  if (radii.size() < 3) throw InvalidArgument("the probe needs at least three radii");
  for (std::size_t i = 0; i + 1 < radii.size(); ++i)
    if (!(radii[i + 1] < radii[i] && radii[i + 1] > 0)) throw InvalidArgument("probe radii must decrease to > 0");
  IntegrabilityProbe p;
  p.radii = radii;
  constexpr int kMaxAnglePanels = 1000;
  auto fail = [&](double r, const std::string& why) {
    throw DivergentTail("∫|X|⁻¹ near (" + std::to_string(q[0]) + ", " + std::to_string(q[1]) + ") at radius " +
                        std::to_string(r) + ": " + why);
  };
  // Angles are measured from ker D_qX and antipodal points are paired, so the
  // direction where |X| is smallest sits at θ = 0 where doubles resolve it.
  Vec2 v0(1.0, 0.0);
  {
    const Mat2 D = covariant_jacobian(field.jets(q[0], q[1]));
    Eigen::JacobiSVD<Mat2> svd(D, Eigen::ComputeFullV);
    if (svd.singularValues()[0] > 0.0) v0 = svd.matrixV().col(1);
  }
  const Vec2 v1(-v0[1], v0[0]);
  // Geometric panels toward θ = 0 on both sides; for an integrable density
  // the innermost panels contribute nothing, otherwise the ring diverges.
  const Rule gl = gauss_legendre(10);
  auto ring = [&](double r) {
    auto h = [&](double th) {
      const Vec2 d = r * (std::cos(th) * v0 + std::sin(th) * v1);
      return r * (inv_norm_density(field, q[0] + d[0], q[1] + d[1]) +
                  inv_norm_density(field, q[0] - d[0], q[1] - d[1]));
    };
    double total = 0.0;
    for (double side : {1.0, -1.0}) {
      double hi = 0.5 * M_PI;
      int quiet = 0;
      for (int j = 0;; ++j) {
        if (j == kMaxAnglePanels) fail(r, "angular integral diverges");
        const double lo = 0.5 * hi;
        double c = 0.0;
        for (std::size_t i = 0; i < gl.x.size(); ++i) c += gl.w[i] * h(side * (lo + (hi - lo) * gl.x[i]));
        c *= hi - lo;
        if (!std::isfinite(c)) fail(r, "angular integral diverges");
        total += c;
        quiet = std::fabs(c) < 1e-13 * std::fabs(total) ? quiet + 1 : 0;
        if (quiet == 3) break;
        hi = lo;
      }
    }
    return total;
  };
  double cum = 0.0;
  for (std::size_t i = 0; i + 1 < radii.size(); ++i) {
    const Adaptive res = adaptive_gk(ring, radii[i + 1], radii[i], 1e-5, 50);
    if (!res.converged) fail(radii[i + 1], "radial integral does not converge");
    const double a = res.value;
    p.annulus.push_back(a);
    cum += a;
    p.cumulative.push_back(cum);
  }
  const std::size_t m = p.annulus.size();
  const double qratio = p.annulus[m - 1] / p.annulus[m - 2];
  if (!(qratio < 0.95)) fail(radii.back(), "annulus integrals do not shrink (ratio " + std::to_string(qratio) + ")");
  p.tail = p.annulus[m - 1] * qratio / (1.0 - qratio);
  if (p.tail > tol) fail(radii.back(), "tail " + std::to_string(p.tail) + " exceeds " + std::to_string(tol));
  return p;
}

std::vector<double> default_probe_radii(double r0, int levels) {
  std::vector<double> r;
  for (int j = 0; j <= levels; ++j) r.push_back(r0 * std::ldexp(1.0, -j));
  return r;
}

double domination_constant(const SurfaceChart& chart, const ContactModel& model, double eps, int n,
                           const std::vector<Vec2>& singular) {
  double worst = 0.0;
  auto visit = [&](double u, double v) {
    if (!chart.domain.contains(u, v)) return;
    const SurfaceJets s = surface_jets(chart, model, u, v);
    const double norm = characteristic_field(s).sr_norm;
    if (norm < kFrameTolerance) return;
    const double d = k_sigma_density(s, eps) - mu_minus_one_density(s) / std::sqrt(eps);
    worst = std::max(worst, std::fabs(d) * norm / std::sqrt(first_fundamental_form(s, 1.0).det()));
  };
  const auto b = chart.domain.bounds();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      visit(b[0] + (b[1] - b[0]) * (i + kAngularShift) / n, b[2] + (b[3] - b[2]) * (j + kAngularShift) / n);
  // Graded rings resolve the neighbourhood of each characteristic point.
  const double step = std::pow(0.5, 20.0 / n);
  for (const Vec2& q : singular)
    for (double r = 0.5; r > 1e-8; r *= step)
      for (int k = 0; k < n; ++k) {
        const double th = 2 * M_PI * (k + kAngularShift) / n;
        visit(q[0] + r * std::cos(th), q[1] + r * std::sin(th));
      }
  return worst;
}

}  // namespace cgb
