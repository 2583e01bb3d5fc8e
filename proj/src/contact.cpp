#include "cgb/contact.hpp"

#include <random>

namespace cgb {

namespace {

template <int O>
AVec<O> eval3(const std::array<Expr, 3>& fields, const Vec3& p) {
  const std::array<double, 3> pt{p.x(), p.y(), p.z()};
  AVec<O> out;
  for (int i = 0; i < 3; ++i) out[i] = eval_taylor<3, O>(fields[i], pt);
  return out;
}

template <int O>
AVec<O - 1> curl_of(const AVec<O>& w) {
  return {w[2].d(1) - w[1].d(2), w[0].d(2) - w[2].d(0), w[1].d(0) - w[0].d(1)};
}

template <int O>
AVec<O> cross(const AVec<O>& a, const AVec<O>& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

template <int O>
AJet<O> dot(const AVec<O>& a, const AVec<O>& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

template <int To, int From>
AVec<To> trunc(const AVec<From>& a) {
  return {a[0].template truncate<To>(), a[1].template truncate<To>(), a[2].template truncate<To>()};
}

Vec3 value(const AVec<0>& a) { return {a[0].value(), a[1].value(), a[2].value()}; }

Vec3 eval_point(const std::array<Expr, 3>& fields, const Vec3& p) {
  const std::array<double, 3> pt{p.x(), p.y(), p.z()};
  return {fields[0](pt), fields[1](pt), fields[2](pt)};
}

}  // namespace

ContactModel::ContactModel(std::string name, std::array<Expr, 3> omega, std::array<Expr, 3> f1,
                           std::array<Expr, 3> f2, Box3 domain)
    : name_(std::move(name)), omega_(std::move(omega)), f1_(std::move(f1)), f2_(std::move(f2)), domain_(domain) {
  for (const auto* block : {&omega_, &f1_, &f2_})
    for (const Expr& e : *block)
      if (e.variables().size() != 3) throw InvalidArgument("model fields must be expressions in (x, y, z)");
  for (int i = 0; i < 3; ++i)
    if (!(domain_.lo[i] < domain_.hi[i])) throw InvalidArgument("empty model domain");
}

template <int O>
AVec<O> ContactModel::omega_jet(const Vec3& p) const {
  if (!rescaled_) return eval3<O>(omega_, p);
  const AVec<O + 1> raw = eval3<O + 1>(omega_, p);
  const AVec<O> w = curl_of<O + 1>(raw);
  const AJet<O> s = 1.0 / dot<O>(w, cross<O>(eval3<O>(f1_, p), eval3<O>(f2_, p)));
  const AVec<O> r = trunc<O, O + 1>(raw);
  return {s * r[0], s * r[1], s * r[2]};
}

Vec3 ContactModel::omega(const Vec3& p) const {
  if (!rescaled_) return eval_point(omega_, p);
  return value(omega_jet<0>(p));
}
Vec3 ContactModel::f1(const Vec3& p) const { return eval_point(f1_, p); }
Vec3 ContactModel::f2(const Vec3& p) const { return eval_point(f2_, p); }

Vec3 ContactModel::curl(const Vec3& p) const { return value(curl_of<1>(omega_jet<1>(p))); }

double ContactModel::normalization_scale(const Vec3& p) const {
  const double d = d_omega(p, f1(p), f2(p));
  if (d == 0.0) throw ContactDegenerate("dω(f1, f2) = 0 at (" + std::to_string(p.x()) + ", " +
                                        std::to_string(p.y()) + ", " + std::to_string(p.z()) + ")");
  return 1.0 / d;
}

AmbientFrame ContactModel::frame_jets(const Vec3& p) const {
  AmbientFrame fr;
  fr.omega = omega_jet<3>(p);
  fr.curl = curl_of<3>(fr.omega);
  const AVec<2> om = trunc<2, 3>(fr.omega);
  const AJet<2> reeb_scale = 1.0 / dot<2>(om, fr.curl);
  for (int i = 0; i < 3; ++i) fr.f0[i] = reeb_scale * fr.curl[i];
  const AVec<2> a = eval3<2>(f1_, p);
  const AVec<2> b = eval3<2>(f2_, p);
  const AVec<2> bf0 = cross<2>(b, fr.f0);
  const AJet<2> inv_det = 1.0 / dot<2>(a, bf0);
  const AVec<2> f0a = cross<2>(fr.f0, a);
  for (int i = 0; i < 3; ++i) {
    fr.nu1[i] = inv_det * bf0[i];
    fr.nu2[i] = inv_det * f0a[i];
  }
  return fr;
}

namespace {

template <class F>
void for_each_sample(const Box3& box, int grid, int random_points, std::uint64_t seed, F&& f) {
  for (int i = 0; i < grid; ++i)
    for (int j = 0; j < grid; ++j)
      for (int k = 0; k < grid; ++k) {
        const Vec3 t(grid > 1 ? double(i) / (grid - 1) : 0.5, grid > 1 ? double(j) / (grid - 1) : 0.5,
                     grid > 1 ? double(k) / (grid - 1) : 0.5);
        f(Vec3(box.lo.array() + t.array() * (box.hi - box.lo).array()));
      }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int n = 0; n < random_points; ++n) {
    const Vec3 t(U(rng), U(rng), U(rng));
    f(Vec3(box.lo.array() + t.array() * (box.hi - box.lo).array()));
  }
}

constexpr double kIdentityTol = 1e-10;

}  // namespace

ContactModel normalize(const ContactModel& model, std::uint64_t seed) {
  ContactModel out = model;
  double worst_kernel = 0.0;
  double worst_dev = 0.0;
  int positive = 0, negative = 0;
  for_each_sample(model.domain(), 11, 1000, seed, [&](const Vec3& p) {
    const Vec3 w = model.omega(p), a = model.f1(p), b = model.f2(p);
    const double scale = w.norm() * std::max(a.norm(), b.norm());
    worst_kernel = std::max(worst_kernel, std::max(std::fabs(w.dot(a)), std::fabs(w.dot(b))) / std::max(1.0, scale));
    const Vec3 W = model.curl(p);
    if (std::fabs(w.dot(W)) < 1e-12) throw ContactDegenerate("ω ∧ dω vanishes at a validation point");
    const double d = W.dot(a.cross(b));
    if (std::fabs(d) < 1e-12) throw ContactDegenerate("dω(f1, f2) vanishes at a validation point");
    (d > 0 ? positive : negative)++;
    worst_dev = std::max(worst_dev, std::fabs(d - 1.0));
  });
  if (worst_kernel > kIdentityTol)
    throw InvalidArgument("frame is not in ker ω (max |ω(f_i)| = " + std::to_string(worst_kernel) + ")");
  if (negative > 0 && positive > 0) throw ContactDegenerate("dω(f1, f2) changes sign on the domain");
  if (negative > 0) throw OrientationError("dω(f1, f2) < 0: frame (f1, f2) is negatively oriented");
  if (worst_dev > kIdentityTol) out.rescaled_ = true;
  out.normalized_ = true;
  return out;
}

Vec3 reeb_field(const ContactModel& model, const Vec3& p, const ReebOptions& opts) {
  const Vec3 w = model.omega(p);
  const Vec3 W = model.curl(p);
  const Vec3 b1 = opts.b1.value_or(model.f1(p));
  const Vec3 b2 = opts.b2.value_or(model.f2(p));
  // dω(f0, b) = W · (f0 × b) = f0 · (b × W)
  Eigen::Matrix3d M;
  M.row(0) = w.transpose();
  M.row(1) = b1.cross(W).transpose();
  M.row(2) = b2.cross(W).transpose();
  Eigen::FullPivLU<Eigen::Matrix3d> lu(M);
  if (lu.rank() < 3 || std::fabs(M.determinant()) < 1e-14 * std::max(1.0, M.norm() * M.norm() * M.norm()))
    throw SingularSystem("Reeb system is singular at the point");
  return lu.solve(Vec3(1.0, 0.0, 0.0));
}

double metric_eps(const ContactModel& model, double eps, const Vec3& p, const Vec3& v, const Vec3& w) {
  if (!(eps > 0.0)) throw InvalidArgument("ε must be positive");
  Eigen::Matrix3d F;
  F.col(0) = model.f1(p);
  F.col(1) = model.f2(p);
  F.col(2) = reeb_field(model, p);
  Eigen::FullPivLU<Eigen::Matrix3d> lu(F);
  if (lu.rank() < 3) throw SingularSystem("frame (f1, f2, f0) is degenerate");
  const Vec3 a = lu.solve(v), b = lu.solve(w);
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2] / eps;
}

ContactModel builtin_model(const std::string& name) {
  if (name == "heisenberg") {
    const std::vector<std::string> xyz{"x", "y", "z"};
    auto P = [&](const char* s) { return Expr::parse(s, xyz); };
    Box3 box;
    box.lo = Vec3::Constant(-3.0);
    box.hi = Vec3::Constant(3.0);
    // ω = dz + (x dy - y dx)/2, f1 = ∂x + (y/2)∂z, f2 = ∂y - (x/2)∂z
    return normalize(ContactModel("heisenberg", {P("-y/2"), P("x/2"), P("1")}, {P("1"), P("0"), P("y/2")},
                                  {P("0"), P("1"), P("-x/2")}, box));
  }
  throw UnknownModel("no built-in model named '" + name + "'");
}

ModelCheck check_model(const ContactModel& model, int grid, int random_points, std::uint64_t seed) {
  ModelCheck c;
  c.min_contact = std::numeric_limits<double>::infinity();
  for_each_sample(model.domain(), grid, random_points, seed, [&](const Vec3& p) {
    const Vec3 w = model.omega(p), a = model.f1(p), b = model.f2(p), W = model.curl(p);
    c.kernel = std::max({c.kernel, std::fabs(w.dot(a)), std::fabs(w.dot(b))});
    c.normalization = std::max(c.normalization, std::fabs(W.dot(a.cross(b)) - 1.0));
    const Vec3 f0 = reeb_field(model, p);
    c.reeb = std::max(c.reeb, std::fabs(w.dot(f0) - 1.0) + std::fabs(W.dot(f0.cross(a))) +
                                  std::fabs(W.dot(f0.cross(b))));
    c.min_contact = std::min(c.min_contact, std::fabs(w.dot(W)));
    ++c.points;
  });
  return c;
}

}  // namespace cgb
