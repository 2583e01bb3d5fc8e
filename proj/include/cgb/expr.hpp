#pragma once

// Scalar-field expressions: parsing, evaluation over doubles or Taylor jets,
// and finite-difference cross-checks.

#include <array>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "cgb/errors.hpp"
#include "cgb/taylor.hpp"

namespace cgb {

enum class NodeKind { Constant, Variable, Negate, Add, Subtract, Multiply, Divide, Power, Call };
enum class Function { Sin, Cos, Exp, Log, Sqrt, Atan };

std::string_view function_name(Function f);

struct ExprNode {
  NodeKind kind = NodeKind::Constant;
  double value = 0.0;          // Constant
  int variable = -1;           // Variable
  int lhs = -1;                // unary operand / left operand / call argument
  int rhs = -1;                // right operand
  Function function = Function::Sin;
  std::optional<int> integer_exponent;  // Power with a constant integral exponent
  std::optional<double> real_exponent;  // Power with a constant non-integral exponent
};

// Immutable expression tree. Nodes are stored in post-order, so every child
// index is smaller than its parent's; the root is the last node.
class Expr {
 public:
  Expr() = default;

  static Expr parse(std::string_view source, std::vector<std::string> variables);
  static Expr constant(double c, std::vector<std::string> variables);

  const std::vector<std::string>& variables() const { return variables_; }
  const std::vector<ExprNode>& nodes() const { return nodes_; }
  const ExprNode& root() const { return nodes_.back(); }
  const std::string& source() const { return source_; }
  // Domain remarks produced while parsing (non-integral powers).
  const std::vector<std::string>& notes() const { return notes_; }

  bool empty() const { return nodes_.empty(); }
  bool depends_on(int variable) const;

  // Pretty printer; the output re-parses into a structurally identical tree.
  std::string to_string() const;
  bool structurally_equal(const Expr& other) const;

  template <class T>
  T evaluate(std::span<const T> args) const;

  double operator()(std::span<const double> args) const { return evaluate<double>(args); }
  double operator()(std::initializer_list<double> args) const {
    return evaluate<double>(std::span<const double>(args.begin(), args.size()));
  }

 private:
  std::vector<ExprNode> nodes_;
  std::vector<std::string> variables_;
  std::string source_;
  std::vector<std::string> notes_;
};

// Derivatives of a scalar field at a point up to a given order, keyed by
// multi-index. Mixed partials are stored once per multi-index.
class Jet {
 public:
  Jet() = default;

  template <int NV, int ORD>
  static Jet from_taylor(const Taylor<NV, ORD>& t, int order) {
    Jet j;
    j.vars_ = NV;
    j.order_ = order;
    for (int i = 0; i < Taylor<NV, ORD>::kSize; ++i) {
      const auto& e = Taylor<NV, ORD>::exponent(i);
      int deg = 0;
      for (int v : e) deg += v;
      if (deg > order) continue;
      j.indices_.emplace_back(e.begin(), e.end());
      j.values_.push_back(t.partial(e));
    }
    return j;
  }

  int vars() const { return vars_; }
  int order() const { return order_; }
  double value() const { return values_.empty() ? 0.0 : values_[0]; }

  // Partial derivative for a multi-index (one exponent per variable).
  double derivative(std::span<const int> multi_index) const;
  double derivative(std::initializer_list<int> multi_index) const {
    return derivative(std::span<const int>(multi_index.begin(), multi_index.size()));
  }
  // Partial derivative given as a sequence of variables, e.g. {0, 1} = d/dx d/dy.
  double derivative_along(std::initializer_list<int> sequence) const;

  const std::vector<std::vector<int>>& multi_indices() const { return indices_; }
  const std::vector<double>& derivatives() const { return values_; }

 private:
  int vars_ = 0;
  int order_ = 0;
  std::vector<std::vector<int>> indices_;
  std::vector<double> values_;
};

inline constexpr int kMaxJetOrder = 3;

// All partial derivatives of `expr` at `point` up to `order` (<= 3).
Jet eval_jet(const Expr& expr, std::span<const double> point, int order);

// max over multi-indices 1 <= |a| <= order of |jet_a - central difference_a|.
// With `relative`, each deviation is divided by max(1, |jet_a|).
double finite_diff_check(const Expr& expr, std::span<const double> point, int order, double step,
                         bool relative = false);

// ---------------------------------------------------------------------------

namespace detail {

inline double eval_fn(Function f, double x) {
  switch (f) {
    case Function::Sin: return std::sin(x);
    case Function::Cos: return std::cos(x);
    case Function::Exp: return std::exp(x);
    case Function::Log: return std::log(x);
    case Function::Sqrt: return std::sqrt(x);
    case Function::Atan: return std::atan(x);
  }
  return 0.0;
}

template <int N, int O>
Taylor<N, O> eval_fn(Function f, const Taylor<N, O>& x) {
  switch (f) {
    case Function::Sin: return sin(x);
    case Function::Cos: return cos(x);
    case Function::Exp: return exp(x);
    case Function::Log: return log(x);
    case Function::Sqrt: return sqrt(x);
    case Function::Atan: return atan(x);
  }
  return {};
}

inline double real_pow(double x, double a) { return std::pow(x, a); }
template <int N, int O>
Taylor<N, O> real_pow(const Taylor<N, O>& x, double a) {
  return pow(x, a);
}
inline double general_pow(double b, double e) { return std::exp(e * std::log(b)); }
template <int N, int O>
Taylor<N, O> general_pow(const Taylor<N, O>& b, const Taylor<N, O>& e) {
  return exp(e * log(b));
}

template <class T>
constexpr bool kIsPlainDouble = std::is_same_v<T, double>;

}  // namespace detail

template <class T>
T Expr::evaluate(std::span<const T> args) const {
  if (args.size() != variables_.size())
    throw InvalidArgument("expression '" + source_ + "' expects " + std::to_string(variables_.size()) +
                          " arguments, got " + std::to_string(args.size()));
  std::vector<T> slot(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const ExprNode& n = nodes_[i];
    switch (n.kind) {
      case NodeKind::Constant: slot[i] = T(n.value); break;
      case NodeKind::Variable: slot[i] = args[n.variable]; break;
      case NodeKind::Negate: slot[i] = -slot[n.lhs]; break;
      case NodeKind::Add: slot[i] = slot[n.lhs] + slot[n.rhs]; break;
      case NodeKind::Subtract: slot[i] = slot[n.lhs] - slot[n.rhs]; break;
      case NodeKind::Multiply: slot[i] = slot[n.lhs] * slot[n.rhs]; break;
      case NodeKind::Divide: {
        if (value_of(slot[n.rhs]) == 0.0) throw DomainError("division by zero in '" + source_ + "'");
        slot[i] = slot[n.lhs] / slot[n.rhs];
        break;
      }
      case NodeKind::Power: {
        const T& base = slot[n.lhs];
        if (n.integer_exponent) {
          if (*n.integer_exponent < 0 && value_of(base) == 0.0)
            throw DomainError("negative power of zero in '" + source_ + "'");
          slot[i] = powi(base, *n.integer_exponent);
        } else {
          if (value_of(base) <= 0.0)
            throw DomainError("non-integral power of non-positive base in '" + source_ + "'");
          if (n.real_exponent)
            slot[i] = detail::real_pow(base, *n.real_exponent);
          else
            slot[i] = detail::general_pow(base, slot[n.rhs]);
        }
        break;
      }
      case NodeKind::Call: {
        const T& a = slot[n.lhs];
        const double a0 = value_of(a);
        if (n.function == Function::Log && a0 <= 0.0)
          throw DomainError("log of non-positive value in '" + source_ + "'");
        if (n.function == Function::Sqrt) {
          if (a0 < 0.0 || (a0 == 0.0 && !detail::kIsPlainDouble<T>))
            throw DomainError("sqrt of non-positive value in '" + source_ + "'");
        }
        slot[i] = detail::eval_fn(n.function, a);
        break;
      }
    }
  }
  return slot.back();
}

// Evaluate at Taylor variables seeded at `point`.
template <int NV, int ORD>
Taylor<NV, ORD> eval_taylor(const Expr& e, std::span<const double> point) {
  std::array<Taylor<NV, ORD>, NV> args;
  for (int v = 0; v < NV; ++v) args[v] = Taylor<NV, ORD>::variable(v, point[v]);
  return e.evaluate<Taylor<NV, ORD>>(std::span<const Taylor<NV, ORD>>(args));
}

}  // namespace cgb
