#pragma once

// ε-frames and the connection form η^ε, the curvature measure K^εσ^ε, the
// limit form α and μ₋₁ = dα, and quadrature of these measures against test
// functions on a surface atlas.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cgb/char_points.hpp"

namespace cgb {

// √(1 − div²(1 − ε)); lies in [√ε, 1] for ε ∈ (0, 1].
double b_eps(double div, double eps);

struct EpsFrameSample {
  double b_eps = 0;
  Vec2 theta1, theta2;  // ε = 1 coframe, components on (du, dv)
  double c1 = 0, c2 = 0;
  Vec2 eta_eps;      // η^ε on (du, dv)
  double d_eta = 0;  // dη^ε = d_eta du∧dv
  double sr_norm = 0;
};

constexpr double kFrameTolerance = 1e-13;

EpsFrameSample connection_form_eps(const SurfaceJets& s, double eps, double frame_tol = kFrameTolerance);
EpsFrameSample connection_form_eps(const SurfaceChart& chart, const ContactModel& model, double eps, double u,
                                   double v, double frame_tol = kFrameTolerance);

// α = −(div X/|X|) ω|_S on (du, dv).
Vec2 alpha_form(const SurfaceJets& s, double frame_tol = kFrameTolerance);

// Coefficients of 2-forms on du∧dv.
double k_sigma_density(const SurfaceJets& s, double eps);
double mu_minus_one_density(const SurfaceJets& s, double frame_tol = kFrameTolerance);
double mu_minus_one_density(const SurfaceChart& chart, const ContactModel& model, double u, double v,
                            double frame_tol = kFrameTolerance);

enum class DensityKind { KSigma, MuMinusOne, Difference, InvNorm };
const char* density_kind_name(DensityKind kind);

struct MeasureDensity {
  DensityKind kind = DensityKind::KSigma;
  double density = 0;  // coefficient on du∧dv
  std::optional<double> epsilon;
};
MeasureDensity measure_density(const SurfaceJets& s, DensityKind kind, std::optional<double> eps = std::nullopt);

// A test function: an expression in chart coordinates (u, v) or in ambient
// coordinates (x, y, z) composed with the immersion. An optional support disk
// in chart coordinates restricts the integration region.
struct TestFunction {
  std::string source;
  Expr expr;
  bool ambient = false;
  std::optional<ChartDomain> support;

  double operator()(const SurfaceChart& chart, double u, double v) const;
};
TestFunction make_test_function(const std::string& source, bool ambient = false,
                                std::optional<ChartDomain> support = std::nullopt);

struct QuadSpec {
  int gl_order = 8;          // Gauss-Legendre nodes per panel
  int box_panels = 8;        // panels per side of a box region at level 0
  int angular = 48;          // periodic angular nodes at level 0
  double ratio = 0.7;        // geometric radial grading toward a singular point
  double inner = 1e-8;       // innermost radius relative to min(patch radius, 0.1)
  double tol = 1e-6;         // absolute error target
  int max_refine = 3;
};

struct QuadResult {
  double value = 0;
  double error = 0;
};

// Integrates a vector-valued density over the region of one chart. `f`
// writes the du dv densities of all components at (u, v). Singular points are
// placed on panel corners or at polar centres and never evaluated.
using VectorDensity = std::function<void(double u, double v, double* out)>;
std::vector<QuadResult> integrate_region(const ChartDomain& region, const std::vector<Vec2>& singular, int components,
                                         const VectorDensity& f, const QuadSpec& spec = {});

// ∫_S φ·(density) summed over the atlas, weighted by partition functions.
// Characteristic points are taken from `points` by chart id.
QuadResult integrate_measure(const Atlas& atlas, const ContactModel& model, DensityKind kind,
                             std::optional<double> eps, const TestFunction& phi, const std::vector<CharPoint>& points,
                             const QuadSpec& spec = {});

struct ConvergenceRow {
  double epsilon = 0;
  double integral = 0;
  double target = 0;
  double abs_error = 0;
  double quad_error = 0;
};

// Pairings needed by the ε-sweep for one test function, computed in a single
// quadrature pass: ∫φ(K^εσ^ε − μ₋₁/√ε), ∫φK^εσ^ε for every ε, and ∫φμ₋₁.
struct SweepIntegrals {
  std::vector<double> epsilons;
  std::vector<QuadResult> difference;
  std::vector<QuadResult> k_sigma;
  QuadResult mu_minus_one;
};
SweepIntegrals sweep_integrals(const Atlas& atlas, const ContactModel& model, const std::vector<double>& epsilons,
                               const TestFunction& phi, const std::vector<CharPoint>& points,
                               const QuadSpec& spec = {});

// 2π Σ φ(q_i) ind(q_i) over distinct characteristic points.
double delta_target(const Atlas& atlas, const TestFunction& phi, const std::vector<CharPoint>& points);

// Rows sorted by decreasing ε.
std::vector<ConvergenceRow> convergence_table(const Atlas& atlas, const ContactModel& model,
                                              const std::vector<double>& epsilons, const TestFunction& phi,
                                              const std::vector<CharPoint>& points, const QuadSpec& spec = {});
std::vector<ConvergenceRow> convergence_table(const SweepIntegrals& sweep, double target);

// Smallest index from which abs_error is nonincreasing to the end of the table.
std::size_t convergence_knee(const std::vector<ConvergenceRow>& rows);

struct MuLimitCheck {
  std::vector<double> epsilons;
  std::vector<double> deviation;  // |√ε ∫φK^εσ^ε − ∫φμ₋₁|
  double max_deviation = 0;
  double direct = 0;        // ∫φμ₋₁ by quadrature of dα
  double extrapolated = 0;  // Richardson limit of √ε∫φK^εσ^ε in √ε
  double extrapolation_error = 0;
  double quad_error = 0;
  bool consistent = false;  // |direct − extrapolated| ≤ 5·(quad + extrapolation error)
};
MuLimitCheck mu_limit_check(const SweepIntegrals& sweep);

struct IntegrabilityProbe {
  std::vector<double> radii;
  std::vector<double> annulus;     // ∫ over radii[i+1] ≤ r ≤ radii[i]
  std::vector<double> cumulative;  // from radii[0] inward
  double tail = 0;                 // estimated integral inside the last radius
};
// ∫|X|⁻¹σ¹ over annuli around q. Throws DivergentTail when an annulus
// integral fails to converge or the annuli stop shrinking.
IntegrabilityProbe inv_norm_integrability_probe(const PlanarField& field, const Vec2& q,
                                                const std::vector<double>& radii, double tol = 1e-3);
std::vector<double> default_probe_radii(double r0 = 0.1, int levels = 20);

// max |difference density|·|X| (density taken against σ¹) over an n×n grid of
// one chart plus graded rings around the given characteristic points.
double domination_constant(const SurfaceChart& chart, const ContactModel& model, double eps, int n,
                           const std::vector<Vec2>& singular = {});

}  // namespace cgb
