#include "cgb/surface.hpp"

#include <cmath>

namespace cgb {

ChartDomain ChartDomain::box(double u0, double u1, double v0, double v1) {
  if (!(u0 < u1 && v0 < v1)) throw InvalidArgument("empty chart box");
  ChartDomain d;
  d.kind = Kind::Box;
  d.u0 = u0, d.u1 = u1, d.v0 = v0, d.v1 = v1;
  return d;
}

ChartDomain ChartDomain::disk(double cu, double cv, double radius) {
  if (!(radius > 0)) throw InvalidArgument("chart disk radius must be positive");
  ChartDomain d;
  d.kind = Kind::Disk;
  d.cu = cu, d.cv = cv, d.radius = radius;
  return d;
}

bool ChartDomain::contains(double u, double v, double slack) const {
  if (kind == Kind::Box) return u >= u0 - slack && u <= u1 + slack && v >= v0 - slack && v <= v1 + slack;
  return std::hypot(u - cu, v - cv) <= radius + slack;
}

std::array<double, 4> ChartDomain::bounds() const {
  if (kind == Kind::Box) return {u0, u1, v0, v1};
  return {cu - radius, cu + radius, cv - radius, cv + radius};
}

Vec3 SurfaceChart::point(double u, double v) const {
  return {immersion[0]({u, v}), immersion[1]({u, v}), immersion[2]({u, v})};
}

SurfaceChart make_chart(std::string id, const std::array<std::string, 3>& immersion, ChartDomain domain,
                        int orientation, std::optional<std::string> weight, std::array<bool, 2> periodic) {
  if (orientation != 1 && orientation != -1) throw InvalidArgument("orientation must be +1 or -1");
  const std::vector<std::string> uv{"u", "v"};
  SurfaceChart c;
  c.id = std::move(id);
  for (int i = 0; i < 3; ++i) c.immersion[i] = Expr::parse(immersion[i], uv);
  c.domain = domain;
  c.orientation = orientation;
  if (weight) c.weight = Expr::parse(*weight, uv);
  c.periodic = periodic;
  return c;
}

SurfaceJets surface_jets(const SurfaceChart& chart, const ContactModel& model, double u, double v) {
  const std::array<double, 2> at{u, v};
  std::array<SJet<4>, 3> psi;
  for (int i = 0; i < 3; ++i) psi[i] = eval_taylor<2, 4>(chart.immersion[i], at);
  std::array<SJet<3>, 3> pu, pv, dx;
  for (int i = 0; i < 3; ++i) {
    pu[i] = psi[i].d(0);
    pv[i] = psi[i].d(1);
    dx[i] = psi[i].truncate<3>();
    dx[i][0] = 0.0;
  }
  SurfaceJets s;
  s.point = Vec3(psi[0].value(), psi[1].value(), psi[2].value());
  s.orientation = chart.orientation;
  const AmbientFrame fr = model.frame_jets(s.point);

  SJet<3> wu, wv;
  for (int i = 0; i < 3; ++i) {
    const SJet<3> om = compose(fr.omega[i], dx);
    wu += om * pu[i];
    wv += om * pv[i];
  }
  s.wu = wu.truncate<2>();
  s.wv = wv.truncate<2>();
  s.dw = wv.d(0) - wu.d(1);

  std::array<SJet<2>, 3> dx2;
  for (int i = 0; i < 3; ++i) dx2[i] = dx[i].truncate<2>();
  SJet<2> a1, a2, b1, b2;
  for (int i = 0; i < 3; ++i) {
    const SJet<2> n1 = compose(fr.nu1[i], dx2);
    const SJet<2> n2 = compose(fr.nu2[i], dx2);
    const SJet<2> ui = pu[i].truncate<2>(), vi = pv[i].truncate<2>();
    a1 += n1 * ui;
    a2 += n2 * ui;
    b1 += n1 * vi;
    b2 += n2 * vi;
  }
  s.huu = a1 * a1 + a2 * a2;
  s.huv = a1 * b1 + a2 * b2;
  s.hvv = b1 * b1 + b2 * b2;
  return s;
}

Mat2 FundamentalForm::matrix() const {
  Mat2 m;
  m << E.value(), F.value(), F.value(), G.value();
  return m;
}

FundamentalForm first_fundamental_form(const SurfaceJets& s, double eps) {
  if (!(eps > 0.0)) throw InvalidArgument("ε must be positive");
  const double k = 1.0 / eps;
  FundamentalForm I{s.huu + k * (s.wu * s.wu), s.huv + k * (s.wu * s.wv), s.hvv + k * (s.wv * s.wv)};
  const double det = I.det();
  if (!(det > 0.0) || !(I.E.value() > 0.0))
    throw DegenerateImmersion("EG - F^2 = " + std::to_string(det) + " at (" + std::to_string(s.point.x()) + ", " +
                              std::to_string(s.point.y()) + ", " + std::to_string(s.point.z()) + ")");
  return I;
}

FundamentalForm first_fundamental_form(const SurfaceChart& chart, const ContactModel& model, double eps, double u,
                                       double v) {
  return first_fundamental_form(surface_jets(chart, model, u, v), eps);
}

double area_density(const SurfaceJets& s, double eps) {
  return s.orientation * std::sqrt(first_fundamental_form(s, eps).det());
}

double area_density(const SurfaceChart& chart, const ContactModel& model, double eps, double u, double v) {
  return area_density(surface_jets(chart, model, u, v), eps);
}

CharFieldSample characteristic_field(const SurfaceJets& s) {
  const FundamentalForm I = first_fundamental_form(s, 1.0);
  const double A = s.orientation * std::sqrt(I.det());
  CharFieldSample out;
  // ι_X σ¹ = ω|_S with σ¹ = A du∧dv
  out.X = Vec2(s.wv.value() / A, -s.wu.value() / A);
  out.sr_norm = std::sqrt(std::max(0.0, out.X.dot(I.matrix() * out.X)));
  out.divergence = s.dw.value() / A;
  return out;
}

CharFieldSample characteristic_field(const SurfaceChart& chart, const ContactModel& model, double u, double v) {
  return characteristic_field(surface_jets(chart, model, u, v));
}

Vec2 complex_structure(const SurfaceJets& s, double eps, const Vec2& w) {
  const FundamentalForm I = first_fundamental_form(s, eps);
  const double A = s.orientation * std::sqrt(I.det());
  const Vec2 low = I.matrix() * w;
  return Vec2(-low[1], low[0]) / A;
}

Vec2 complex_structure(const SurfaceChart& chart, const ContactModel& model, double eps, double u, double v,
                       const Vec2& w) {
  return complex_structure(surface_jets(chart, model, u, v), eps, w);
}

double brioschi(const FundamentalForm& I) {
  auto D = [](const SJet<2>& f, int a, int b) { return f.partial({a, b}); };
  const double E = I.E.value(), F = I.F.value(), G = I.G.value();
  const double Eu = D(I.E, 1, 0), Ev = D(I.E, 0, 1), Evv = D(I.E, 0, 2);
  const double Fu = D(I.F, 1, 0), Fv = D(I.F, 0, 1), Fuv = D(I.F, 1, 1);
  const double Gu = D(I.G, 1, 0), Gv = D(I.G, 0, 1), Guu = D(I.G, 2, 0);
  Eigen::Matrix3d m1, m2;
  m1 << -0.5 * Evv + Fuv - 0.5 * Guu, 0.5 * Eu, Fu - 0.5 * Ev,  //
      Fv - 0.5 * Gu, E, F,                                       //
      0.5 * Gv, F, G;
  m2 << 0.0, 0.5 * Ev, 0.5 * Gu,  //
      0.5 * Ev, E, F,             //
      0.5 * Gu, F, G;
  const double det = E * G - F * F;
  return (m1.determinant() - m2.determinant()) / (det * det);
}

double gaussian_curvature_eps(const SurfaceJets& s, double eps) { return brioschi(first_fundamental_form(s, eps)); }

double gaussian_curvature_eps(const SurfaceChart& chart, const ContactModel& model, double eps, double u, double v) {
  return gaussian_curvature_eps(surface_jets(chart, model, u, v), eps);
}

FieldJets field_jets(const SurfaceJets& s) {
  const FundamentalForm I = first_fundamental_form(s, 1.0);
  FieldJets f;
  f.E = I.E;
  f.F = I.F;
  f.G = I.G;
  f.area = s.orientation * sqrt(I.E * I.G - I.F * I.F);
  f.Xu = s.wv / f.area;
  f.Xv = -s.wu / f.area;
  f.div = s.dw / f.area;
  return f;
}

std::optional<Vec2> invert_chart(const SurfaceChart& chart, const Vec3& p, double tol) {
  const auto b = chart.domain.bounds();
  constexpr int kSeeds = 9;
  std::optional<Vec2> best;
  double best_res = std::numeric_limits<double>::infinity();
  for (int i = 0; i < kSeeds; ++i) {
    for (int j = 0; j < kSeeds; ++j) {
      Vec2 x(b[0] + (b[1] - b[0]) * (i + 0.5) / kSeeds, b[2] + (b[3] - b[2]) * (j + 0.5) / kSeeds);
      if (!chart.domain.contains(x[0], x[1])) continue;
      double res = 0.0;
      for (int it = 0; it < 40; ++it) {
        std::array<SJet<1>, 3> psi;
        const std::array<double, 2> at{x[0], x[1]};
        Eigen::Matrix<double, 3, 2> J;
        Vec3 r;
        for (int k = 0; k < 3; ++k) {
          psi[k] = eval_taylor<2, 1>(chart.immersion[k], at);
          r[k] = psi[k].value() - p[k];
          J(k, 0) = psi[k].gradient(0);
          J(k, 1) = psi[k].gradient(1);
        }
        res = r.norm();
        if (res < tol) break;
        const Vec2 step = (J.transpose() * J).ldlt().solve(-J.transpose() * r);
        if (!step.allFinite()) break;
        x += step;
        if (!chart.domain.contains(x[0], x[1], 0.5 * (b[1] - b[0]))) break;
      }
      if (res < best_res) {
        best_res = res;
        best = x;
      }
      if (best_res < tol) break;
    }
    if (best_res < tol) break;
  }
  if (best_res > 1e-9 || !best || !chart.domain.contains((*best)[0], (*best)[1], 1e-9)) return std::nullopt;
  return best;
}

double partition_defect(const Atlas& atlas, int samples_per_side) {
  bool any = false;
  for (const auto& c : atlas.charts) any = any || c.weight.has_value();
  if (!any) return 0.0;
  double worst = 0.0;
  for (const auto& c : atlas.charts) {
    if (!c.weight) continue;
    const auto b = c.domain.bounds();
    for (int i = 0; i < samples_per_side; ++i) {
      for (int j = 0; j < samples_per_side; ++j) {
        const double u = b[0] + (b[1] - b[0]) * (i + 0.5) / samples_per_side;
        const double v = b[2] + (b[3] - b[2]) * (j + 0.5) / samples_per_side;
        if (!c.domain.contains(u, v)) continue;
        const Vec3 p = c.point(u, v);
        double sum = 0.0;
        for (const auto& other : atlas.charts) {
          if (&other == &c) {
            sum += c.weight_at(u, v);
            continue;
          }
          if (auto q = invert_chart(other, p)) sum += other.weight_at((*q)[0], (*q)[1]);
        }
        worst = std::max(worst, std::fabs(sum - 1.0));
      }
    }
  }
  return worst;
}

}  // namespace cgb
