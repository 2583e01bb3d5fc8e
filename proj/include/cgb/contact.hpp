#pragma once

// Contact sub-Riemannian models on a coordinate box in R^3.

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>

#include "cgb/expr.hpp"

namespace cgb {

using Vec3 = Eigen::Vector3d;

struct Box3 {
  Vec3 lo = Vec3::Constant(-1.0);
  Vec3 hi = Vec3::Constant(1.0);
};

template <int O>
using AJet = Taylor<3, O>;  // ambient jet in (x, y, z)

template <int O>
using AVec = std::array<AJet<O>, 3>;

// Jets of the normalized model data around one ambient point.
struct AmbientFrame {
  AVec<3> omega;  // normalized contact form
  AVec<2> curl;   // dω(a, b) = curl · (a × b)
  AVec<2> f0;     // Reeb field
  AVec<2> nu1;    // horizontal coframe: nu_i(f_j) = δ_ij, nu_i(f0) = 0
  AVec<2> nu2;
};

// ω together with a declared g-orthonormal, positively oriented frame (f1, f2)
// of ker ω. Immutable. The contact form may carry a pointwise rescaling
// s = 1/dω(f1, f2) that is applied at jet level whenever the model is
// evaluated; normalize() decides whether it is needed.
class ContactModel {
 public:
  ContactModel(std::string name, std::array<Expr, 3> omega, std::array<Expr, 3> f1, std::array<Expr, 3> f2,
               Box3 domain);

  const std::string& name() const { return name_; }
  const std::array<Expr, 3>& omega_expr() const { return omega_; }
  const std::array<Expr, 3>& f1_expr() const { return f1_; }
  const std::array<Expr, 3>& f2_expr() const { return f2_; }
  const Box3& domain() const { return domain_; }
  bool rescaled() const { return rescaled_; }
  bool normalized() const { return normalized_; }

  // Point values of the (possibly rescaled) model.
  Vec3 omega(const Vec3& p) const;
  Vec3 f1(const Vec3& p) const;
  Vec3 f2(const Vec3& p) const;
  // Vector W with dω(a, b) = W · (a × b).
  Vec3 curl(const Vec3& p) const;
  double d_omega(const Vec3& p, const Vec3& a, const Vec3& b) const { return curl(p).dot(a.cross(b)); }
  // s such that s·ω is normalized, computed from the stored (possibly already rescaled) ω.
  double normalization_scale(const Vec3& p) const;

  AmbientFrame frame_jets(const Vec3& p) const;

 private:
  friend ContactModel normalize(const ContactModel& model, std::uint64_t seed);

  // Raw or rescaled ω as a jet of order O; needs the raw form at order O + 1
  // when rescaled.
  template <int O>
  AVec<O> omega_jet(const Vec3& p) const;

  std::string name_;
  std::array<Expr, 3> omega_, f1_, f2_;
  Box3 domain_;
  bool rescaled_ = false;
  bool normalized_ = false;
};

// Validates the model on an 11^3 grid plus 1000 random points and returns the
// normalized model (ω rescaled when dω(f1, f2) != 1).
ContactModel normalize(const ContactModel& model, std::uint64_t seed = 1);

struct ReebOptions {
  // Completion vectors b1, b2; default: the frame (f1, f2) at the point.
  std::optional<Vec3> b1, b2;
};

Vec3 reeb_field(const ContactModel& model, const Vec3& p, const ReebOptions& opts = {});

// g^ε(v, w) = v1 w1 + v2 w2 + v0 w0 / ε in the frame (f1, f2, f0).
double metric_eps(const ContactModel& model, double eps, const Vec3& p, const Vec3& v, const Vec3& w);

// Catalog: "heisenberg".
ContactModel builtin_model(const std::string& name);

// Worst violations of the model invariants at sample points.
struct ModelCheck {
  double kernel = 0.0;         // max |ω(f_i)|
  double normalization = 0.0;  // max |dω(f1, f2) - 1|
  double reeb = 0.0;           // max |ω(f0) - 1| + |dω(f0, f_i)|
  double min_contact = 0.0;    // min |ω ∧ dω| (= |ω · curl ω|)
  int points = 0;
};
ModelCheck check_model(const ContactModel& model, int grid = 11, int random_points = 1000, std::uint64_t seed = 1);

}  // namespace cgb
