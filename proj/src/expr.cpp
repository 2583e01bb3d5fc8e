#include "cgb/expr.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <map>

namespace cgb {

std::string_view function_name(Function f) {
  switch (f) {
    case Function::Sin: return "sin";
    case Function::Cos: return "cos";
    case Function::Exp: return "exp";
    case Function::Log: return "log";
    case Function::Sqrt: return "sqrt";
    case Function::Atan: return "atan";
  }
  return "?";
}

namespace {

const std::map<std::string, Function, std::less<>>& smooth_functions() {
  static const std::map<std::string, Function, std::less<>> table{
      {"sin", Function::Sin}, {"cos", Function::Cos},   {"exp", Function::Exp},
      {"log", Function::Log}, {"sqrt", Function::Sqrt}, {"atan", Function::Atan},
  };
  return table;
}

bool is_non_smooth(std::string_view name) {
  static constexpr std::array<std::string_view, 13> names{"abs",   "fabs", "sign", "sgn",  "floor",     "ceil", "round",
                                                          "trunc", "min",  "max",  "step", "heaviside", "mod"};
  return std::find(names.begin(), names.end(), name) != names.end();
}

class Parser {
 public:
  Parser(std::string_view src, const std::vector<std::string>& vars, std::vector<ExprNode>& out,
         std::vector<std::string>& notes)
      : src_(src), vars_(vars), out_(out), notes_(notes) {}

  void run() {
    parse_sum();
    skip_ws();
    if (pos_ < src_.size()) throw SyntaxError(pos_, "operator or end of input");
  }

 private:
  void skip_ws() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }
  bool accept(char c) {
    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  int push(ExprNode n) {
    out_.push_back(n);
    return static_cast<int>(out_.size()) - 1;
  }
  int binary(NodeKind k, int lhs, int rhs) {
    ExprNode n;
    n.kind = k;
    n.lhs = lhs;
    n.rhs = rhs;
    return push(n);
  }

  // Subtrees are contiguous in post-order storage: [first, root].
  bool subtree_has_variable(int first, int root) const {
    for (int i = first; i <= root; ++i)
      if (out_[i].kind == NodeKind::Variable) return true;
    return false;
  }
  double fold_constant(int first, int root) const {
    std::vector<ExprNode> sub(out_.begin() + first, out_.begin() + root + 1);
    for (auto& n : sub) {
      if (n.lhs >= 0) n.lhs -= first;
      if (n.rhs >= 0) n.rhs -= first;
    }
    std::vector<double> slot(sub.size());
    for (std::size_t i = 0; i < sub.size(); ++i) {
      const ExprNode& n = sub[i];
      switch (n.kind) {
        case NodeKind::Constant: slot[i] = n.value; break;
        case NodeKind::Variable: slot[i] = 0.0; break;
        case NodeKind::Negate: slot[i] = -slot[n.lhs]; break;
        case NodeKind::Add: slot[i] = slot[n.lhs] + slot[n.rhs]; break;
        case NodeKind::Subtract: slot[i] = slot[n.lhs] - slot[n.rhs]; break;
        case NodeKind::Multiply: slot[i] = slot[n.lhs] * slot[n.rhs]; break;
        case NodeKind::Divide: slot[i] = slot[n.lhs] / slot[n.rhs]; break;
        case NodeKind::Power:
          slot[i] = n.integer_exponent ? powi(slot[n.lhs], *n.integer_exponent) : std::pow(slot[n.lhs], slot[n.rhs]);
          break;
        case NodeKind::Call: slot[i] = detail::eval_fn(n.function, slot[n.lhs]); break;
      }
    }
    return slot.back();
  }

  int parse_sum() {
    int lhs = parse_product();
    for (;;) {
      if (accept('+'))
        lhs = binary(NodeKind::Add, lhs, parse_product());
      else if (accept('-'))
        lhs = binary(NodeKind::Subtract, lhs, parse_product());
      else
        return lhs;
    }
  }

  int parse_product() {
    int lhs = parse_unary();
    for (;;) {
      if (accept('*'))
        lhs = binary(NodeKind::Multiply, lhs, parse_unary());
      else if (accept('/'))
        lhs = binary(NodeKind::Divide, lhs, parse_unary());
      else
        return lhs;
    }
  }

  int parse_unary() {
    if (accept('-')) {
      ExprNode n;
      n.kind = NodeKind::Negate;
      n.lhs = parse_unary();
      return push(n);
    }
    if (accept('+')) return parse_unary();
    return parse_power();
  }

  int parse_power() {
    const int base = parse_primary();
    if (!accept('^')) return base;
    const int exp_first = static_cast<int>(out_.size());
    const int exponent = parse_unary();
    ExprNode n;
    n.kind = NodeKind::Power;
    n.lhs = base;
    n.rhs = exponent;
    if (!subtree_has_variable(exp_first, exponent)) {
      const double e = fold_constant(exp_first, exponent);
      if (std::isfinite(e) && e == std::floor(e) && std::fabs(e) <= 1e6) {
        n.integer_exponent = static_cast<int>(e);
      } else {
        n.real_exponent = e;
        notes_.push_back("non-integral power rewritten as exp(b*log(a)); base must stay positive");
      }
    } else {
      notes_.push_back("variable exponent rewritten as exp(b*log(a)); base must stay positive");
    }
    return push(n);
  }

  int parse_primary() {
    skip_ws();
    if (pos_ >= src_.size()) throw SyntaxError(pos_, "expression");
    const char c = src_[pos_];
    if (c == '(') {
      ++pos_;
      const int inner = parse_sum();
      if (!accept(')')) throw SyntaxError(pos_, "')'");
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_identifier();
    throw SyntaxError(pos_, "number, identifier or '('");
  }

  int parse_number() {
    const std::size_t start = pos_;
    auto digits = [&] {
      std::size_t n = 0;
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_, ++n;
      return n;
    };
    std::size_t n = digits();
    if (pos_ < src_.size() && src_[pos_] == '.') {
      ++pos_;
      n += digits();
    }
    if (n == 0) throw SyntaxError(start, "digits");
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      const std::size_t save = pos_;
      ++pos_;
      if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
      if (digits() == 0) {
        // "2e" with no exponent digits: leave 'e' to the identifier rules.
        pos_ = save;
      }
    }
    const std::string text(src_.substr(start, pos_ - start));
    ExprNode node;
    node.kind = NodeKind::Constant;
    node.value = std::strtod(text.c_str(), nullptr);
    return push(node);
  }

  int parse_identifier() {
    const std::size_t start = pos_;
    while (pos_ < src_.size() &&
           (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
      ++pos_;
    const std::string name(src_.substr(start, pos_ - start));

    const auto var = std::find(vars_.begin(), vars_.end(), name);
    if (var != vars_.end()) {
      ExprNode n;
      n.kind = NodeKind::Variable;
      n.variable = static_cast<int>(var - vars_.begin());
      return push(n);
    }
    if (is_non_smooth(name))
      throw NonSmoothPrimitive("'" + name + "' at position " + std::to_string(start) + " is not smooth");
    const auto& fns = smooth_functions();
    if (auto it = fns.find(name); it != fns.end()) {
      if (!accept('(')) throw SyntaxError(pos_, "'(' after " + name);
      const int arg = parse_sum();
      if (!accept(')')) throw SyntaxError(pos_, "')'");
      ExprNode n;
      n.kind = NodeKind::Call;
      n.function = it->second;
      n.lhs = arg;
      return push(n);
    }
    if (name == "pi") {
      ExprNode n;
      n.kind = NodeKind::Constant;
      n.value = std::numbers::pi;
      return push(n);
    }
    throw UnknownIdentifier("'" + name + "' at position " + std::to_string(start));
  }

  std::string_view src_;
  const std::vector<std::string>& vars_;
  std::vector<ExprNode>& out_;
  std::vector<std::string>& notes_;
  std::size_t pos_ = 0;
};

int precedence(NodeKind k) {
  switch (k) {
    case NodeKind::Add:
    case NodeKind::Subtract: return 1;
    case NodeKind::Multiply:
    case NodeKind::Divide: return 2;
    case NodeKind::Negate: return 3;
    case NodeKind::Power: return 4;
    default: return 5;
  }
}

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  std::string s(buf);
  if (v < 0) s = "(" + s + ")";
  return s;
}

void print_node(const std::vector<ExprNode>& nodes, const std::vector<std::string>& vars, int i, std::string& out) {
  const ExprNode& n = nodes[i];
  auto child = [&](int c, bool parens) {
    if (parens) out += '(';
    print_node(nodes, vars, c, out);
    if (parens) out += ')';
  };
  const int p = precedence(n.kind);
  switch (n.kind) {
    case NodeKind::Constant: out += format_number(n.value); break;
    case NodeKind::Variable: out += vars[n.variable]; break;
    case NodeKind::Negate:
      out += '-';
      child(n.lhs, precedence(nodes[n.lhs].kind) < 3);
      break;
    case NodeKind::Add:
    case NodeKind::Subtract:
    case NodeKind::Multiply:
    case NodeKind::Divide: {
      static constexpr std::array<const char*, 4> ops{" + ", " - ", " * ", " / "};
      const int op = static_cast<int>(n.kind) - static_cast<int>(NodeKind::Add);
      child(n.lhs, precedence(nodes[n.lhs].kind) < p);
      out += ops[op];
      child(n.rhs, precedence(nodes[n.rhs].kind) <= p);
      break;
    }
    case NodeKind::Power:
      child(n.lhs, precedence(nodes[n.lhs].kind) <= p);
      out += '^';
      child(n.rhs, precedence(nodes[n.rhs].kind) < 3);
      break;
    case NodeKind::Call:
      out += function_name(n.function);
      out += '(';
      print_node(nodes, vars, n.lhs, out);
      out += ')';
      break;
  }
}

bool same_node(const std::vector<ExprNode>& a, int i, const std::vector<ExprNode>& b, int j) {
  const ExprNode& x = a[i];
  const ExprNode& y = b[j];
  if (x.kind != y.kind) return false;
  switch (x.kind) {
    case NodeKind::Constant: return x.value == y.value;
    case NodeKind::Variable: return x.variable == y.variable;
    case NodeKind::Call: return x.function == y.function && same_node(a, x.lhs, b, y.lhs);
    case NodeKind::Negate: return same_node(a, x.lhs, b, y.lhs);
    default: return same_node(a, x.lhs, b, y.lhs) && same_node(a, x.rhs, b, y.rhs);
  }
}

}  // namespace

Expr Expr::parse(std::string_view source, std::vector<std::string> variables) {
  for (std::size_t i = 0; i < variables.size(); ++i)
    for (std::size_t j = i + 1; j < variables.size(); ++j)
      if (variables[i] == variables[j]) throw InvalidArgument("duplicate variable '" + variables[i] + "'");
  Expr e;
  e.variables_ = std::move(variables);
  e.source_ = std::string(source);
  Parser(source, e.variables_, e.nodes_, e.notes_).run();
  return e;
}

Expr Expr::constant(double c, std::vector<std::string> variables) {
  Expr e;
  e.variables_ = std::move(variables);
  ExprNode n;
  n.kind = NodeKind::Constant;
  n.value = c;
  e.nodes_.push_back(n);
  e.source_ = format_number(c);
  return e;
}

bool Expr::depends_on(int variable) const {
  return std::any_of(nodes_.begin(), nodes_.end(),
                     [&](const ExprNode& n) { return n.kind == NodeKind::Variable && n.variable == variable; });
}

std::string Expr::to_string() const {
  std::string out;
  if (!nodes_.empty()) print_node(nodes_, variables_, static_cast<int>(nodes_.size()) - 1, out);
  return out;
}

bool Expr::structurally_equal(const Expr& other) const {
  if (nodes_.empty() || other.nodes_.empty()) return nodes_.empty() && other.nodes_.empty();
  return variables_ == other.variables_ &&
         same_node(nodes_, static_cast<int>(nodes_.size()) - 1, other.nodes_, static_cast<int>(other.nodes_.size()) - 1);
}

double Jet::derivative(std::span<const int> multi_index) const {
  if (static_cast<int>(multi_index.size()) != vars_)
    throw InvalidArgument("multi-index has " + std::to_string(multi_index.size()) + " entries, jet has " +
                          std::to_string(vars_) + " variables");
  int deg = 0;
  for (int a : multi_index) deg += a;
  if (deg > order_) throw OrderUnsupported("derivative of order " + std::to_string(deg) + " not in jet of order " +
                                           std::to_string(order_));
  for (std::size_t i = 0; i < indices_.size(); ++i)
    if (std::equal(indices_[i].begin(), indices_[i].end(), multi_index.begin())) return values_[i];
  return 0.0;
}

double Jet::derivative_along(std::initializer_list<int> sequence) const {
  std::vector<int> alpha(vars_, 0);
  for (int v : sequence) {
    if (v < 0 || v >= vars_) throw InvalidArgument("variable index out of range");
    ++alpha[v];
  }
  return derivative(alpha);
}

namespace {

template <int NV>
Jet eval_jet_nv(const Expr& e, std::span<const double> p, int order) {
  switch (order) {
    case 0: return Jet::from_taylor(eval_taylor<NV, 0>(e, p), 0);
    case 1: return Jet::from_taylor(eval_taylor<NV, 1>(e, p), 1);
    case 2: return Jet::from_taylor(eval_taylor<NV, 2>(e, p), 2);
    default: return Jet::from_taylor(eval_taylor<NV, 3>(e, p), 3);
  }
}

struct StencilTap {
  int offset;
  double weight;
};

std::vector<StencilTap> stencil(int derivative, double h) {
  switch (derivative) {
    case 0: return {{0, 1.0}};
    case 1: return {{1, 0.5 / h}, {-1, -0.5 / h}};
    case 2: return {{1, 1.0 / (h * h)}, {0, -2.0 / (h * h)}, {-1, 1.0 / (h * h)}};
    default: {
      const double h3 = h * h * h;
      return {{2, 0.5 / h3}, {1, -1.0 / h3}, {-1, 1.0 / h3}, {-2, -0.5 / h3}};
    }
  }
}

}  // namespace

Jet eval_jet(const Expr& expr, std::span<const double> point, int order) {
  if (order < 0 || order > kMaxJetOrder)
    throw OrderUnsupported("jet order " + std::to_string(order) + " outside 0..3");
  if (point.size() != expr.variables().size())
    throw InvalidArgument("point has " + std::to_string(point.size()) + " coordinates, expression declares " +
                          std::to_string(expr.variables().size()) + " variables");
  switch (point.size()) {
    case 1: return eval_jet_nv<1>(expr, point, order);
    case 2: return eval_jet_nv<2>(expr, point, order);
    case 3: return eval_jet_nv<3>(expr, point, order);
    default: throw InvalidArgument("jets support 1 to 3 variables");
  }
}

double finite_diff_check(const Expr& expr, std::span<const double> point, int order, double step, bool relative) {
  if (!(step > 0.0)) throw InvalidArgument("finite-difference step must be positive");
  const Jet jet = eval_jet(expr, point, order);
  const std::size_t nv = point.size();
  std::vector<double> x(point.begin(), point.end());
  double worst = 0.0;
  for (std::size_t m = 0; m < jet.multi_indices().size(); ++m) {
    const auto& alpha = jet.multi_indices()[m];
    int deg = 0;
    for (int a : alpha) deg += a;
    if (deg == 0) continue;

    std::vector<std::vector<StencilTap>> taps(nv);
    for (std::size_t v = 0; v < nv; ++v) taps[v] = stencil(alpha[v], step);
    // Walk the tensor product of the per-variable stencils.
    std::vector<std::size_t> pos(nv, 0);
    double estimate = 0.0;
    for (;;) {
      double w = 1.0;
      for (std::size_t v = 0; v < nv; ++v) {
        x[v] = point[v] + taps[v][pos[v]].offset * step;
        w *= taps[v][pos[v]].weight;
      }
      estimate += w * expr(std::span<const double>(x));
      std::size_t v = 0;
      while (v < nv && ++pos[v] == taps[v].size()) pos[v++] = 0;
      if (v == nv) break;
    }
    double dev = std::fabs(jet.derivatives()[m] - estimate);
    if (relative) dev /= std::max(1.0, std::fabs(jet.derivatives()[m]));
    worst = std::max(worst, dev);
  }
  return worst;
}

}  // namespace cgb
