#include <random>

#include "cgb/contact.hpp"
#include "doctest.h"

using namespace cgb;

namespace {

const std::vector<std::string> kXYZ{"x", "y", "z"};
Expr P(const char* s) { return Expr::parse(s, kXYZ); }

Box3 box(double r) {
  Box3 b;
  b.lo = Vec3::Constant(-r);
  b.hi = Vec3::Constant(r);
  return b;
}

ContactModel perturbed_heisenberg() {
  return ContactModel("perturbed", {P("-(1 + x^2)*y/2"), P("(1 + x^2)*x/2"), P("1")},
                      {P("1"), P("0"), P("(1 + x^2)*y/2")}, {P("0"), P("1"), P("-(1 + x^2)*x/2")}, box(1.0));
}

}  // namespace

TEST_CASE("built-in Heisenberg model satisfies every invariant") {
  const ContactModel m = builtin_model("heisenberg");
  CHECK(m.normalized());
  CHECK_FALSE(m.rescaled());
  const ModelCheck c = check_model(m);
  CHECK(c.points == 11 * 11 * 11 + 1000);
  CHECK(c.kernel <= 1e-10);
  CHECK(c.normalization <= 1e-10);
  CHECK(c.reeb <= 1e-10);
  CHECK(c.min_contact > 0.5);
  CHECK_THROWS_AS(builtin_model("unknown-name"), UnknownModel);
}

TEST_CASE("normalization scale") {
  const ContactModel h = builtin_model("heisenberg");
  const ContactModel doubled("doubled", {P("-y"), P("x"), P("2")}, {P("1"), P("0"), P("y/2")},
                             {P("0"), P("1"), P("-x/2")}, box(2.0));
  CHECK(doubled.normalization_scale(Vec3(0.3, -0.2, 0.1)) == doctest::Approx(0.5));
  const ContactModel n = normalize(doubled);
  CHECK(n.rescaled());
  const Vec3 p(0.7, -1.1, 0.4);
  CHECK((n.omega(p) - h.omega(p)).norm() < 1e-14);
  CHECK(check_model(n).normalization < 1e-10);

  const ContactModel swapped("swapped", h.omega_expr(), h.f2_expr(), h.f1_expr(), box(1.0));
  CHECK_THROWS_AS(normalize(swapped), OrientationError);

  const ContactModel not_kernel("bad", h.omega_expr(), {P("1"), P("0"), P("0")}, h.f2_expr(), box(1.0));
  CHECK_THROWS_AS(normalize(not_kernel), InvalidArgument);
}

TEST_CASE("perturbed model: rescaling at jet level") {
  const ContactModel raw = perturbed_heisenberg();
  const Vec3 p(0.5, 0.2, 0.0);
  CHECK(raw.normalization_scale(p) == doctest::Approx(1.0 / 1.5));
  const ContactModel n = normalize(raw);
  CHECK(n.rescaled());
  const ModelCheck c = check_model(n, 5, 200);
  CHECK(c.normalization < 1e-10);
  CHECK(c.kernel < 1e-10);
  CHECK(c.reeb < 1e-10);
  CHECK((reeb_field(n, Vec3::Zero()) - Vec3(0, 0, 1)).norm() < 1e-14);
  CHECK((reeb_field(raw, Vec3(0.4, -0.3, 0.2)) - Vec3(0, 0, 1)).norm() < 1e-14);

  // idempotent: a second pass changes nothing
  const ContactModel nn = normalize(n);
  CHECK(nn.rescaled());
  const AmbientFrame a = n.frame_jets(p), b = nn.frame_jets(p);
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < AJet<3>::kSize; ++k) CHECK(a.omega[i][k] == b.omega[i][k]);
  CHECK(n.normalization_scale(p) == doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("frame jets are consistent") {
  const ContactModel n = normalize(perturbed_heisenberg());
  const Vec3 p(0.3, -0.4, 0.2);
  const AmbientFrame fr = n.frame_jets(p);
  const Vec3 f0 = reeb_field(n, p);
  for (int i = 0; i < 3; ++i) CHECK(fr.f0[i].value() == doctest::Approx(f0[i]).epsilon(1e-13));
  const Vec3 a = n.f1(p), b = n.f2(p);
  auto nu = [](const AVec<2>& v, const Vec3& w) { return v[0].value() * w[0] + v[1].value() * w[1] + v[2].value() * w[2]; };
  CHECK(nu(fr.nu1, a) == doctest::Approx(1.0));
  CHECK(std::fabs(nu(fr.nu1, b)) < 1e-14);
  CHECK(std::fabs(nu(fr.nu1, f0)) < 1e-14);
  CHECK(nu(fr.nu2, b) == doctest::Approx(1.0));
  CHECK(std::fabs(nu(fr.nu2, f0)) < 1e-14);
  // first derivative of ω_x in x against a difference quotient
  const double h = 1e-6;
  const double fd = (n.omega(p + Vec3(h, 0, 0))[0] - n.omega(p - Vec3(h, 0, 0))[0]) / (2 * h);
  CHECK(fr.omega[0].gradient(0) == doctest::Approx(fd).epsilon(1e-8));
}

TEST_CASE("Reeb field and g^ε") {
  const ContactModel h = builtin_model("heisenberg");
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(-3.0, 3.0);
  for (int i = 0; i < 50; ++i) {
    const Vec3 p(U(rng), U(rng), U(rng));
    const Vec3 f0 = reeb_field(h, p);
    CHECK((f0 - Vec3(0, 0, 1)).norm() < 1e-12);
    ReebOptions o;
    o.b1 = h.f1(p) + 0.3 * h.f2(p) + 0.1 * Vec3(0, 0, 1);
    o.b2 = h.f2(p) - 0.2 * h.f1(p);
    CHECK((reeb_field(h, p, o) - f0).norm() < 1e-10);
    CHECK(metric_eps(h, 0.3, p, f0, f0) == doctest::Approx(1.0 / 0.3));
    CHECK(std::fabs(metric_eps(h, 0.3, p, h.f1(p), h.f2(p))) < 1e-14);
    CHECK(metric_eps(h, 0.3, p, h.f1(p), h.f1(p)) == doctest::Approx(1.0));
  }
  CHECK(metric_eps(h, 0.25, Vec3(1, 0, 0), Vec3(0, 0, 1), Vec3(0, 0, 1)) == doctest::Approx(4.0));

  const Vec3 p(0.2, 0.5, -1.0);
  const Vec3 v(0.3, -0.1, 0.8);  // has an f0 component
  double prev = std::numeric_limits<double>::infinity();
  for (double eps : {0.01, 0.1, 0.5, 1.0, 2.0}) {
    const double g = metric_eps(h, eps, p, v, v);
    CHECK(g < prev);
    prev = g;
  }
  const Vec3 horiz = 0.4 * h.f1(p) - 1.3 * h.f2(p);
  CHECK(metric_eps(h, 0.01, p, horiz, horiz) == doctest::Approx(metric_eps(h, 1.0, p, horiz, horiz)));
  CHECK_THROWS_AS(metric_eps(h, 0.0, p, v, v), InvalidArgument);
}
