#pragma once

// Surfaces as chart immersions into a contact model, and the surface
// quantities derived from g^ε: first fundamental form, σ^ε, the
// characteristic field X, div X, J^ε and Gaussian curvature.

#include <optional>
#include <vector>

#include "cgb/contact.hpp"

namespace cgb {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

template <int O>
using SJet = Taylor<2, O>;  // jet in chart coordinates (u, v)

struct ChartDomain {
  enum class Kind { Box, Disk };
  Kind kind = Kind::Box;
  double u0 = -1, u1 = 1, v0 = -1, v1 = 1;  // box
  double cu = 0, cv = 0, radius = 1;        // disk

  static ChartDomain box(double u0, double u1, double v0, double v1);
  static ChartDomain disk(double cu, double cv, double radius);
  bool contains(double u, double v, double slack = 0.0) const;
  // Bounding box (u0, u1, v0, v1).
  std::array<double, 4> bounds() const;
};

struct SurfaceChart {
  std::string id;
  std::array<Expr, 3> immersion;  // ψ(u, v) = (x, y, z)
  ChartDomain domain;
  int orientation = 1;
  std::optional<Expr> weight;  // partition-of-unity weight w(u, v)
  std::array<bool, 2> periodic{false, false};

  Vec3 point(double u, double v) const;
  double weight_at(double u, double v) const { return weight ? (*weight)({u, v}) : 1.0; }
};

// Parse helper: immersion and weight are expressions in (u, v).
SurfaceChart make_chart(std::string id, const std::array<std::string, 3>& immersion, ChartDomain domain,
                        int orientation = 1, std::optional<std::string> weight = std::nullopt,
                        std::array<bool, 2> periodic = {false, false});

// ε-independent jets at a chart point: the horizontal part h of the pullback
// metric, the pulled-back contact form ω|_S = wu du + wv dv and dω|_S = dw du∧dv.
// Then g^ε|_S = h + (1/ε) ω|_S ⊗ ω|_S.
struct SurfaceJets {
  Vec3 point;
  int orientation = 1;
  SJet<2> huu, huv, hvv;
  SJet<2> wu, wv;
  SJet<2> dw;
};
SurfaceJets surface_jets(const SurfaceChart& chart, const ContactModel& model, double u, double v);

struct FundamentalForm {
  SJet<2> E, F, G;
  double det() const { return E.value() * G.value() - F.value() * F.value(); }
  Mat2 matrix() const;
};
FundamentalForm first_fundamental_form(const SurfaceJets& s, double eps);
FundamentalForm first_fundamental_form(const SurfaceChart& chart, const ContactModel& model, double eps, double u,
                                       double v);

// orientation · sqrt(EG - F^2), the σ^ε density in du dv.
double area_density(const SurfaceJets& s, double eps);
double area_density(const SurfaceChart& chart, const ContactModel& model, double eps, double u, double v);

struct CharFieldSample {
  Vec2 X;  // chart components of X
  double sr_norm = 0.0;
  double divergence = 0.0;
};
CharFieldSample characteristic_field(const SurfaceJets& s);
CharFieldSample characteristic_field(const SurfaceChart& chart, const ContactModel& model, double u, double v);

// J^ε w: σ^ε(v, J w) = g^ε(v, w).
Vec2 complex_structure(const SurfaceJets& s, double eps, const Vec2& w);
Vec2 complex_structure(const SurfaceChart& chart, const ContactModel& model, double eps, double u, double v,
                       const Vec2& w);

// Brioschi formula on second-order jets of (E, F, G).
double brioschi(const FundamentalForm& I);
double gaussian_curvature_eps(const SurfaceJets& s, double eps);
double gaussian_curvature_eps(const SurfaceChart& chart, const ContactModel& model, double eps, double u, double v);

// Order-2 jets of X and of the ε = 1 geometry around a chart point. This is
// what characteristic-point classification consumes; fixtures supply the same
// structure with a flat metric.
struct FieldJets {
  SJet<2> Xu, Xv;
  SJet<2> E, F, G;  // metric used for |X|, ∇X and J
  SJet<2> area;     // signed density of the area form
  SJet<2> div;      // divergence of X with respect to that area form
};
FieldJets field_jets(const SurfaceJets& s);

// Christoffel symbols Γ[i][j][k] = Γ^i_jk of the metric (E, F, G).
template <int O>
using Christoffel = std::array<std::array<std::array<SJet<O - 1>, 2>, 2>, 2>;

template <int O>
Christoffel<O> christoffel(const SJet<O>& E, const SJet<O>& F, const SJet<O>& G) {
  const std::array<std::array<SJet<O>, 2>, 2> g{{{E, F}, {F, G}}};
  // dg[l][k][j] = ∂_j g_lk
  std::array<std::array<std::array<SJet<O - 1>, 2>, 2>, 2> dg;
  for (int l = 0; l < 2; ++l)
    for (int k = 0; k < 2; ++k)
      for (int j = 0; j < 2; ++j) dg[l][k][j] = g[l][k].d(j);
  const SJet<O - 1> Et = E.template truncate<O - 1>(), Ft = F.template truncate<O - 1>(),
                    Gt = G.template truncate<O - 1>();
  const SJet<O - 1> inv_det = 1.0 / (Et * Gt - Ft * Ft);
  const std::array<std::array<SJet<O - 1>, 2>, 2> ginv{{{Gt * inv_det, -Ft * inv_det}, {-Ft * inv_det, Et * inv_det}}};
  Christoffel<O> out;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k) {
        SJet<O - 1> acc;
        for (int l = 0; l < 2; ++l) acc += ginv[i][l] * (dg[l][k][j] + dg[l][j][k] - dg[j][k][l]);
        out[i][j][k] = 0.5 * acc;
      }
  return out;
}

// (∇X)[i][j] = (∇_j X)^i = ∂_j X^i + Γ^i_jk X^k, one order lower than the inputs.
template <int O>
std::array<std::array<SJet<O - 1>, 2>, 2> covariant_jacobian(const SJet<O>& Xu, const SJet<O>& Xv, const SJet<O>& E,
                                                             const SJet<O>& F, const SJet<O>& G) {
  const Christoffel<O> gam = christoffel<O>(E, F, G);
  const std::array<SJet<O>, 2> X{Xu, Xv};
  const std::array<SJet<O - 1>, 2> Xt{Xu.template truncate<O - 1>(), Xv.template truncate<O - 1>()};
  std::array<std::array<SJet<O - 1>, 2>, 2> out;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) out[i][j] = X[i].d(j) + gam[i][j][0] * Xt[0] + gam[i][j][1] * Xt[1];
  return out;
}

inline Mat2 covariant_jacobian(const FieldJets& f) {
  const auto n = covariant_jacobian<2>(f.Xu, f.Xv, f.E, f.F, f.G);
  Mat2 m;
  m << n[0][0].value(), n[0][1].value(), n[1][0].value(), n[1][1].value();
  return m;
}

// A compact surface is a list of charts; weights (if any) form a partition of unity.
struct Atlas {
  std::vector<SurfaceChart> charts;
  bool compact = false;
};

// Finds (u, v) in `chart` with ψ(u, v) = p by Gauss-Newton from a coarse
// grid of seeds. Returns nothing when p is not in the chart image.
std::optional<Vec2> invert_chart(const SurfaceChart& chart, const Vec3& p, double tol = 1e-12);

// Max |Σ_charts w - 1| over overlap samples of every weighted chart;
// 0 when no chart declares a weight.
double partition_defect(const Atlas& atlas, int samples_per_side = 24);

}  // namespace cgb
