#pragma once

// Truncated multivariate Taylor algebra.
//
// A Taylor<NV, ORD> holds the Taylor coefficients c_a of a scalar field around
// a base point, for every multi-index a over NV variables with |a| <= ORD.
// Arithmetic and the elementary functions propagate all mixed partials in one
// pass; derivatives are recovered as a! * c_a.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

namespace cgb {

namespace detail {

constexpr int binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  long long r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return static_cast<int>(r);
}

constexpr int ipow(int b, int e) {
  int r = 1;
  for (int i = 0; i < e; ++i) r *= b;
  return r;
}

template <int NV, int ORD>
struct Monomials {
  static constexpr int kSize = binomial(NV + ORD, NV);
  using Exp = std::array<int, NV>;

  std::array<Exp, kSize> exps{};
  std::array<int, kSize> degree{};

  // Graded order; inside one degree, lexicographically descending with the
  // first variable most significant. Lower orders are a prefix of higher ones.
  constexpr Monomials() {
    int n = 0;
    const int total = ipow(ORD + 1, NV);
    for (int d = 0; d <= ORD; ++d) {
      for (int t = total - 1; t >= 0; --t) {
        Exp e{};
        int rem = t;
        int sum = 0;
        for (int v = NV - 1; v >= 0; --v) {
          e[v] = rem % (ORD + 1);
          rem /= (ORD + 1);
          sum += e[v];
        }
        if (sum == d) {
          exps[n] = e;
          degree[n] = d;
          ++n;
        }
      }
    }
  }

  constexpr int index_of(const Exp& e) const {
    for (int i = 0; i < kSize; ++i) {
      bool same = true;
      for (int v = 0; v < NV; ++v) same = same && exps[i][v] == e[v];
      if (same) return i;
    }
    return -1;
  }
};

struct ProductTerm {
  int lhs = 0;
  int rhs = 0;
  int out = 0;
};

template <int NV, int ORD>
struct Tables {
  static constexpr Monomials<NV, ORD> mono{};
  static constexpr int kSize = Monomials<NV, ORD>::kSize;

  static constexpr int count_pairs() {
    int n = 0;
    for (int i = 0; i < kSize; ++i)
      for (int j = 0; j < kSize; ++j)
        if (mono.degree[i] + mono.degree[j] <= ORD) ++n;
    return n;
  }
  static constexpr int kPairs = count_pairs();

  static constexpr std::array<ProductTerm, kPairs> make_product() {
    std::array<ProductTerm, kPairs> out{};
    int n = 0;
    for (int i = 0; i < kSize; ++i) {
      for (int j = 0; j < kSize; ++j) {
        if (mono.degree[i] + mono.degree[j] > ORD) continue;
        typename Monomials<NV, ORD>::Exp e{};
        for (int v = 0; v < NV; ++v) e[v] = mono.exps[i][v] + mono.exps[j][v];
        out[n++] = ProductTerm{i, j, mono.index_of(e)};
      }
    }
    return out;
  }
  static constexpr std::array<ProductTerm, kPairs> product = make_product();

  static constexpr std::array<double, kSize> make_factorials() {
    std::array<double, kSize> f{};
    for (int i = 0; i < kSize; ++i) {
      double p = 1.0;
      for (int v = 0; v < NV; ++v)
        for (int k = 2; k <= mono.exps[i][v]; ++k) p *= k;
      f[i] = p;
    }
    return f;
  }
  // a! for each multi-index a
  static constexpr std::array<double, kSize> factorial = make_factorials();
};

// Source index and factor for d/dx_v, mapping order ORD coefficients onto
// order ORD-1 ones.
template <int NV, int ORD>
struct DerivativeTable {
  static constexpr int kOut = Monomials<NV, ORD - 1>::kSize;
  struct Entry {
    int src = 0;
    double factor = 0.0;
  };
  static constexpr std::array<std::array<Entry, kOut>, NV> make() {
    constexpr Monomials<NV, ORD> hi{};
    constexpr Monomials<NV, ORD - 1> lo{};
    std::array<std::array<Entry, kOut>, NV> t{};
    for (int v = 0; v < NV; ++v) {
      for (int i = 0; i < kOut; ++i) {
        auto e = lo.exps[i];
        e[v] += 1;
        t[v][i] = Entry{hi.index_of(e), static_cast<double>(e[v])};
      }
    }
    return t;
  }
  static constexpr std::array<std::array<Entry, kOut>, NV> table = make();
};

}  // namespace detail

template <int NV, int ORD>
class Taylor {
  static_assert(NV >= 1 && ORD >= 0);

 public:
  static constexpr int kVars = NV;
  static constexpr int kOrder = ORD;
  static constexpr int kSize = detail::Monomials<NV, ORD>::kSize;
  using Exp = std::array<int, NV>;

  constexpr Taylor() = default;
  constexpr Taylor(double c) { c_[0] = c; }  // NOLINT: constants promote implicitly

  static Taylor variable(int var, double at) {
    Taylor t(at);
    if constexpr (ORD >= 1) t.c_[1 + var] = 1.0;
    return t;
  }

  double value() const { return c_[0]; }
  double& operator[](int i) { return c_[i]; }
  double operator[](int i) const { return c_[i]; }
  const std::array<double, kSize>& coefficients() const { return c_; }

  static constexpr const Exp& exponent(int i) { return detail::Tables<NV, ORD>::mono.exps[i]; }
  static constexpr int index_of(const Exp& e) { return detail::Tables<NV, ORD>::mono.index_of(e); }

  double coefficient(const Exp& e) const {
    const int i = index_of(e);
    return i < 0 ? 0.0 : c_[i];
  }
  // Mixed partial derivative for multi-index e.
  double partial(const Exp& e) const {
    const int i = index_of(e);
    return i < 0 ? 0.0 : c_[i] * detail::Tables<NV, ORD>::factorial[i];
  }
  // First partial derivative d/dx_v at the base point.
  double gradient(int v) const {
    if constexpr (ORD == 0) {
      return 0.0;
    } else {
      return c_[1 + v];
    }
  }

  template <int O>
  Taylor<NV, O> truncate() const {
    static_assert(O <= ORD);
    Taylor<NV, O> t;
    for (int i = 0; i < Taylor<NV, O>::kSize; ++i) t[i] = c_[i];
    return t;
  }

  // d/dx_v, losing one order.
  Taylor<NV, ORD - 1> d(int v) const
    requires(ORD >= 1)
  {
    Taylor<NV, ORD - 1> out;
    const auto& row = detail::DerivativeTable<NV, ORD>::table[v];
    for (int i = 0; i < Taylor<NV, ORD - 1>::kSize; ++i) out[i] = row[i].factor * c_[row[i].src];
    return out;
  }

  Taylor operator-() const {
    Taylor r;
    for (int i = 0; i < kSize; ++i) r.c_[i] = -c_[i];
    return r;
  }
  Taylor& operator+=(const Taylor& o) {
    for (int i = 0; i < kSize; ++i) c_[i] += o.c_[i];
    return *this;
  }
  Taylor& operator-=(const Taylor& o) {
    for (int i = 0; i < kSize; ++i) c_[i] -= o.c_[i];
    return *this;
  }
  Taylor& operator*=(double s) {
    for (auto& c : c_) c *= s;
    return *this;
  }
  Taylor& operator*=(const Taylor& o) { return *this = *this * o; }
  Taylor& operator/=(const Taylor& o) { return *this = *this / o; }

  friend Taylor operator+(Taylor a, const Taylor& b) { return a += b; }
  friend Taylor operator-(Taylor a, const Taylor& b) { return a -= b; }
  friend Taylor operator+(Taylor a, double b) {
    a.c_[0] += b;
    return a;
  }
  friend Taylor operator+(double b, Taylor a) {
    a.c_[0] += b;
    return a;
  }
  friend Taylor operator-(Taylor a, double b) {
    a.c_[0] -= b;
    return a;
  }
  friend Taylor operator-(double b, const Taylor& a) {
    Taylor r = -a;
    r.c_[0] += b;
    return r;
  }
  friend Taylor operator*(Taylor a, double s) { return a *= s; }
  friend Taylor operator*(double s, Taylor a) { return a *= s; }
  friend Taylor operator/(Taylor a, double s) { return a *= 1.0 / s; }

  friend Taylor operator*(const Taylor& a, const Taylor& b) {
    Taylor r;
    for (const auto& t : detail::Tables<NV, ORD>::product) r.c_[t.out] += a.c_[t.lhs] * b.c_[t.rhs];
    return r;
  }
  friend Taylor operator/(const Taylor& a, const Taylor& b) { return a * reciprocal(b); }
  friend Taylor operator/(double s, const Taylor& b) { return s * reciprocal(b); }

  // f(x0 + h) = sum_n coeffs[n] h^n with h = x - x0 nilpotent.
  Taylor compose_series(const std::array<double, ORD + 1>& coeffs) const {
    Taylor h = *this;
    h.c_[0] = 0.0;
    Taylor r(coeffs[ORD]);
    for (int n = ORD - 1; n >= 0; --n) {
      r = r * h;
      r.c_[0] += coeffs[n];
    }
    return r;
  }

  friend Taylor reciprocal(const Taylor& x) {
    std::array<double, ORD + 1> k{};
    const double x0 = x.value();
    double p = 1.0 / x0;
    for (int n = 0; n <= ORD; ++n) {
      k[n] = p;
      p *= -1.0 / x0;
    }
    return x.compose_series(k);
  }

 private:
  std::array<double, kSize> c_{};
};

template <int N, int A, int B>
  requires(A != B)
Taylor<N, std::min(A, B)> operator+(const Taylor<N, A>& a, const Taylor<N, B>& b) {
  constexpr int O = std::min(A, B);
  return a.template truncate<O>() + b.template truncate<O>();
}
template <int N, int A, int B>
  requires(A != B)
Taylor<N, std::min(A, B)> operator-(const Taylor<N, A>& a, const Taylor<N, B>& b) {
  constexpr int O = std::min(A, B);
  return a.template truncate<O>() - b.template truncate<O>();
}
template <int N, int A, int B>
  requires(A != B)
Taylor<N, std::min(A, B)> operator*(const Taylor<N, A>& a, const Taylor<N, B>& b) {
  constexpr int O = std::min(A, B);
  return a.template truncate<O>() * b.template truncate<O>();
}
template <int N, int A, int B>
  requires(A != B)
Taylor<N, std::min(A, B)> operator/(const Taylor<N, A>& a, const Taylor<N, B>& b) {
  constexpr int O = std::min(A, B);
  return a.template truncate<O>() / b.template truncate<O>();
}

// Elementary functions. Domain checks belong to the caller (the expression
// evaluator raises DomainError before reaching these).

template <int N, int O>
Taylor<N, O> exp(const Taylor<N, O>& x) {
  std::array<double, O + 1> k{};
  double f = std::exp(x.value());
  for (int n = 0; n <= O; ++n) {
    k[n] = f;
    f /= (n + 1);
  }
  return x.compose_series(k);
}

template <int N, int O>
Taylor<N, O> log(const Taylor<N, O>& x) {
  std::array<double, O + 1> k{};
  const double x0 = x.value();
  k[0] = std::log(x0);
  double p = 1.0;
  for (int n = 1; n <= O; ++n) {
    p /= x0;
    k[n] = ((n % 2 == 1) ? 1.0 : -1.0) * p / n;
  }
  return x.compose_series(k);
}

// (x0 + h)^a with real a, x0 > 0.
template <int N, int O>
Taylor<N, O> pow(const Taylor<N, O>& x, double a) {
  std::array<double, O + 1> k{};
  const double x0 = x.value();
  double binom = 1.0;
  for (int n = 0; n <= O; ++n) {
    k[n] = binom * std::pow(x0, a - n);
    binom *= (a - n) / (n + 1);
  }
  return x.compose_series(k);
}

template <int N, int O>
Taylor<N, O> sqrt(const Taylor<N, O>& x) {
  return pow(x, 0.5);
}

template <int N, int O>
Taylor<N, O> powi(const Taylor<N, O>& x, int n) {
  if (n == 0) return Taylor<N, O>(1.0);
  if (n < 0) return reciprocal(powi(x, -n));
  Taylor<N, O> result(1.0);
  Taylor<N, O> base = x;
  while (n > 0) {
    if (n & 1) result = result * base;
    n >>= 1;
    if (n > 0) base = base * base;
  }
  return result;
}

template <int N, int O>
Taylor<N, O> sin(const Taylor<N, O>& x) {
  std::array<double, O + 1> k{};
  const double s = std::sin(x.value());
  const double c = std::cos(x.value());
  const std::array<double, 4> cyc{s, c, -s, -c};
  double fact = 1.0;
  for (int n = 0; n <= O; ++n) {
    if (n > 0) fact *= n;
    k[n] = cyc[n % 4] / fact;
  }
  return x.compose_series(k);
}

template <int N, int O>
Taylor<N, O> cos(const Taylor<N, O>& x) {
  std::array<double, O + 1> k{};
  const double s = std::sin(x.value());
  const double c = std::cos(x.value());
  const std::array<double, 4> cyc{c, -s, -c, s};
  double fact = 1.0;
  for (int n = 0; n <= O; ++n) {
    if (n > 0) fact *= n;
    k[n] = cyc[n % 4] / fact;
  }
  return x.compose_series(k);
}

template <int N, int O>
Taylor<N, O> atan(const Taylor<N, O>& x) {
  // atan' = 1/q with q(t) = (1 + x0^2) + 2 x0 t + t^2; invert q as a series.
  const double x0 = x.value();
  const double q0 = 1.0 + x0 * x0, q1 = 2.0 * x0;
  std::array<double, O + 1> r{};
  r[0] = 1.0 / q0;
  for (int n = 1; n <= O; ++n) {
    double s = q1 * r[n - 1];
    if (n >= 2) s += r[n - 2];
    r[n] = -s / q0;
  }
  std::array<double, O + 1> k{};
  k[0] = std::atan(x0);
  for (int n = 1; n <= O; ++n) k[n] = r[n - 1] / n;
  return x.compose_series(k);
}

// Value access shared by double and Taylor code paths.
inline double value_of(double x) { return x; }
template <int N, int O>
double value_of(const Taylor<N, O>& x) {
  return x.value();
}

inline double powi(double x, int n) {
  if (n < 0) return 1.0 / powi(x, -n);
  double r = 1.0;
  while (n > 0) {
    if (n & 1) r *= x;
    n >>= 1;
    if (n > 0) x *= x;
  }
  return r;
}

// Substitute dx (jets with zero constant term) into the polynomial part of f:
// returns sum_a c_a dx^a, i.e. f composed with base + dx, truncated to order O.
template <std::size_t M, int FO, int N, int O>
Taylor<N, O> compose(const Taylor<static_cast<int>(M), FO>& f, const std::array<Taylor<N, O>, M>& dx) {
  static_assert(FO >= O);
  std::array<std::array<Taylor<N, O>, O + 1>, M> pw;
  for (std::size_t v = 0; v < M; ++v) {
    pw[v][0] = Taylor<N, O>(1.0);
    for (int k = 1; k <= O; ++k) pw[v][k] = pw[v][k - 1] * dx[v];
  }
  Taylor<N, O> out;
  for (int i = 0; i < Taylor<static_cast<int>(M), O>::kSize; ++i) {
    const double c = f[i];
    if (c == 0.0) continue;
    const auto& e = Taylor<static_cast<int>(M), FO>::exponent(i);
    Taylor<N, O> term = pw[0][e[0]];
    for (std::size_t v = 1; v < M; ++v)
      if (e[v] > 0) term = term * pw[v][e[v]];
    out += c * term;
  }
  return out;
}

}  // namespace cgb
