#pragma once

// Characteristic points: location, D_qX, order of degeneracy and Λ^(k),
// indices (closed formula and winding number), K̂ and the Euler characteristic.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cgb/surface.hpp"

namespace cgb {

struct FieldSample {
  Vec2 X;
  Mat2 metric;
  double area = 1;
};

// A planar vector field X on a chart domain together with the metric and area
// form in which it lives. Scenario charts and synthetic fixtures share it.
class PlanarField {
 public:
  virtual ~PlanarField() = default;
  virtual FieldJets jets(double u, double v) const = 0;
  virtual Vec2 value(double u, double v) const = 0;
  // X, metric and area density without derivatives.
  virtual FieldSample sample(double u, double v) const;
  virtual const ChartDomain& domain() const = 0;
  virtual std::array<bool, 2> periodic() const { return {false, false}; }
  virtual std::string id() const = 0;
  virtual std::optional<Vec3> ambient(double, double) const { return std::nullopt; }
};

// X of a surface chart in a contact model (scenario mode).
class ChartField final : public PlanarField {
 public:
  ChartField(SurfaceChart chart, ContactModel model) : chart_(std::move(chart)), model_(std::move(model)) {}
  FieldJets jets(double u, double v) const override { return field_jets(surface_jets(chart_, model_, u, v)); }
  Vec2 value(double u, double v) const override;
  FieldSample sample(double u, double v) const override;
  const ChartDomain& domain() const override { return chart_.domain; }
  std::array<bool, 2> periodic() const override { return chart_.periodic; }
  std::string id() const override { return chart_.id; }
  std::optional<Vec3> ambient(double u, double v) const override { return chart_.point(u, v); }
  const SurfaceChart& chart() const { return chart_; }
  const ContactModel& model() const { return model_; }

 private:
  SurfaceChart chart_;
  ContactModel model_;
};

// Synthetic field X = P(x, y)∂x + Q(x, y)∂y with the Euclidean metric
// (pure-fixture mode; no contact invariants).
class FixtureField final : public PlanarField {
 public:
  FixtureField(const std::string& P, const std::string& Q, ChartDomain domain = ChartDomain::box(-1, 1, -1, 1),
               std::string id = "fixture");
  FieldJets jets(double u, double v) const override;
  Vec2 value(double u, double v) const override;
  FieldSample sample(double u, double v) const override { return {value(u, v), Mat2::Identity(), 1.0}; }
  const ChartDomain& domain() const override { return domain_; }
  std::string id() const override { return id_; }
  const Expr& P() const { return P_; }
  const Expr& Q() const { return Q_; }

 private:
  Expr P_, Q_;
  ChartDomain domain_;
  std::string id_;
};

// Normal-form fixture x(ν + a1)∂x + ((μ/k!) y^k + x a0 + b0(y))∂y; perturbation
// strings are expressions in (x, y) and may be empty.
FixtureField normal_form_fixture(int k, double nu, double mu, const std::string& a1 = "", const std::string& a0 = "",
                                 const std::string& b0 = "");

struct LocateOptions {
  int grid = 64;
  double tol = 1e-10;   // |X| threshold for a root
  double r_max = 0.5;   // largest isolation radius tried
  int max_iterations = 50;
};

struct CharPointSeed {
  double u = 0, v = 0;
  double residual = 0;  // |X| at the root
  double isolation_radius = 0;
};

std::vector<CharPointSeed> locate_characteristic_points(const PlanarField& field, const LocateOptions& opts = {});

// Largest r = r_max 2^-j (r >= 1e-6) whose circle keeps |X| > 10 tol.
double isolation_radius(const PlanarField& field, const Vec2& q, double r_max, double tol);

// Jacobian of the chart components of X at q.
Mat2 differential_at_zero(const PlanarField& field, const Vec2& q, double tol = 1e-8);

struct EigenSplit {
  double lambda0 = 0, lambda1 = 0;
  Vec2 v0, v1;  // unit in the field's metric
};
// Eigen-decomposition of ∇X at p with |λ0| < |λ1|. v0 is oriented to have a
// nonnegative inner product with `previous_v0` when given.
EigenSplit eigen_split(const PlanarField& field, const Vec2& p, const std::optional<Vec2>& previous_v0 = std::nullopt);

struct OrderOptions {
  int kmax = 7;
  double r0 = 0.25;  // half-length of the sampled arc (capped by isolation radius)
  int nodes = 32;
  double degeneracy_tol = 1e-6;  // |det| < tol·trace² counts as degenerate
  double noise = 1e-5;
};

struct OrderResult {
  int k = 0;
  double lambda = 0;
  bool sign_ambiguous = false;
  double trace = 0, det = 0;
};

OrderResult order_and_lambda(const PlanarField& field, const Vec2& q, double isolation = 1.0,
                             const OrderOptions& opts = {});

// Derivatives d^m/ds^m at s = 0 (m = 0..max_order) of a quantity sampled along
// the arclength-parametrized v0 integral curve through q.
enum class CurveQuantity { Rho, HatKPlusOne };
std::vector<double> v0_curve_derivatives(const PlanarField& field, const Vec2& q, CurveQuantity what, int max_order,
                                         double r0 = 0.25, int nodes = 32, int degree = 13);

int index_formula(int k, double trace, double lambda);

int winding_index(const PlanarField& field, const Vec2& q, double radius, int samples = 64);

double hat_K(const PlanarField& field, const Vec2& p);

struct CharPoint {
  std::string chart_id;
  double u = 0, v = 0;
  std::optional<Vec3> ambient;
  Mat2 D = Mat2::Zero();
  double trace = 0, det = 0;
  int order = 0;
  bool order_exceeds_kmax = false;
  double lambda = 0;
  bool lambda_sign_ambiguous = false;
  int index_by_formula = 0;
  int index_by_winding = 0;
  double hat_K = 0;
  double isolation_radius = 0;
  double residual = 0;
};

struct ClassifyOptions {
  LocateOptions locate;
  OrderOptions order;
  int winding_samples = 64;
};

// Locates and fully classifies every characteristic point of the field.
std::vector<CharPoint> classify(const PlanarField& field, const ClassifyOptions& opts = {});
CharPoint classify_point(const PlanarField& field, const CharPointSeed& seed, const ClassifyOptions& opts = {});

struct EulerResult {
  int from_indices = 0;
  int from_formula = 0;
  bool contact_topology_warning = false;  // empty characteristic set on a compact surface
};
EulerResult euler_characteristic(const std::vector<CharPoint>& points);

// d^j/dt^j g(X(γ(t)), γ'(t)) at t = 0 for j = 0..order along an explicit
// curve γ(t) = (gx(t), gy(t)) through the fixture's characteristic point.
std::vector<double> lambda_gamma_fixture(const FixtureField& field, const std::string& gx, const std::string& gy,
                                         int order);

}  // namespace cgb
