#include "reflect/verifiers/expr.hpp"

#include <cctype>
#include <stdexcept>

#include "reflect/error.hpp"

namespace reflect::verifiers {

struct Expr::Node {
  bool leaf = true;
  Integer value;
  Op op = Op::Add;
  Expr lhs;
  Expr rhs;
  std::size_t depth = 1;
  std::size_t leaves = 1;
};

Expr Expr::literal(Integer value) {
  if (value < 0) throw std::invalid_argument("Expr literal must be non-negative");
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return Expr(std::move(n));
}

Expr Expr::binary(Op op, Expr lhs, Expr rhs) {
  auto n = std::make_shared<Node>();
  n->leaf = false;
  n->op = op;
  n->depth = 1 + std::max(lhs.node_->depth, rhs.node_->depth);
  n->leaves = lhs.node_->leaves + rhs.node_->leaves;
  n->lhs = std::move(lhs);
  n->rhs = std::move(rhs);
  return Expr(std::move(n));
}

bool Expr::is_literal() const { return node_->leaf; }

const Integer& Expr::value() const {
  if (!node_->leaf) throw std::logic_error("Expr::value on binary node");
  return node_->value;
}

Op Expr::op() const {
  if (node_->leaf) throw std::logic_error("Expr::op on literal");
  return node_->op;
}

const Expr& Expr::lhs() const {
  if (node_->leaf) throw std::logic_error("Expr::lhs on literal");
  return node_->lhs;
}

const Expr& Expr::rhs() const {
  if (node_->leaf) throw std::logic_error("Expr::rhs on literal");
  return node_->rhs;
}

std::size_t Expr::depth() const { return node_->depth; }
std::size_t Expr::leaf_count() const { return node_->leaves; }

namespace {

bool nodes_equal(const Expr& a, const Expr& b) {
  if (a.is_literal() != b.is_literal()) return false;
  if (a.is_literal()) return a.value() == b.value();
  return a.op() == b.op() && nodes_equal(a.lhs(), b.lhs()) && nodes_equal(a.rhs(), b.rhs());
}

constexpr std::size_t kMaxNesting = 512;
constexpr std::size_t kMaxLiterals = 4096;

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  Expr parse() {
    Expr e = expr(0);
    skip_ws();
    if (pos_ != text_.size()) fail("unexpected character");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(what + " at offset " + std::to_string(pos_));
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  char peek() {
    skip_ws();
    return pos_ < text_.size() ? text_[pos_] : '\0';
  }

  Expr expr(std::size_t nesting) {
    Expr lhs = term(nesting);
    for (char c = peek(); c == '+' || c == '-'; c = peek()) {
      ++pos_;
      lhs = Expr::binary(static_cast<Op>(c), std::move(lhs), term(nesting));
    }
    return lhs;
  }

  Expr term(std::size_t nesting) {
    Expr lhs = factor(nesting);
    for (char c = peek(); c == '*' || c == '/'; c = peek()) {
      ++pos_;
      // "**" is not an operator of the grammar.
      lhs = Expr::binary(static_cast<Op>(c), std::move(lhs), factor(nesting));
    }
    return lhs;
  }

  Expr factor(std::size_t nesting) {
    const char c = peek();
    if (c == '(') {
      if (nesting >= kMaxNesting) fail("nesting too deep");
      ++pos_;
      Expr inner = expr(nesting + 1);
      if (peek() != ')') fail("expected ')'");
      ++pos_;
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      if (++literals_ > kMaxLiterals) fail("expression too long");
      const std::size_t start = pos_;
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
      return Expr::literal(Integer(std::string(text_.substr(start, pos_ - start))));
    }
    if (c == '\0') fail("unexpected end of input");
    fail(std::string("unexpected token '") + c + "'");
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t literals_ = 0;
};

int precedence(Op op) { return (op == Op::Add || op == Op::Sub) ? 1 : 2; }

void render_into(const Expr& e, std::string& out) {
  if (e.is_literal()) {
    out += e.value().str();
    return;
  }
  const int p = precedence(e.op());
  const Expr& l = e.lhs();
  const Expr& r = e.rhs();
  // Left-associative grammar: the left child needs parentheses only when it
  // binds looser; the right child also when it binds equally tight.
  const bool wrap_l = !l.is_literal() && precedence(l.op()) < p;
  const bool wrap_r = !r.is_literal() && precedence(r.op()) <= p;
  if (wrap_l) out += '(';
  render_into(l, out);
  if (wrap_l) out += ')';
  out += static_cast<char>(e.op());
  if (wrap_r) out += '(';
  render_into(r, out);
  if (wrap_r) out += ')';
}

void collect_into(const Expr& e, std::vector<Integer>& out) {
  if (e.is_literal()) {
    out.push_back(e.value());
    return;
  }
  collect_into(e.lhs(), out);
  collect_into(e.rhs(), out);
}

}  // namespace

bool operator==(const Expr& a, const Expr& b) {
  return a.node_ == b.node_ || nodes_equal(a, b);
}

Expr parse_expression(std::string_view text) { return Parser(text).parse(); }

std::string render(const Expr& e) {
  std::string out;
  render_into(e, out);
  return out;
}

Rational evaluate(const Expr& e) {
  if (e.is_literal()) return Rational(e.value());
  Rational l = evaluate(e.lhs());
  Rational r = evaluate(e.rhs());
  switch (e.op()) {
    case Op::Add: return l + r;
    case Op::Sub: return l - r;
    case Op::Mul: return l * r;
    case Op::Div:
      if (r == 0) throw DivisionByZero("division by zero");
      return l / r;
  }
  throw std::logic_error("unknown op");
}

std::vector<Integer> collect_operands(const Expr& e) {
  std::vector<Integer> out;
  out.reserve(e.leaf_count());
  collect_into(e, out);
  return out;
}

}  // namespace reflect::verifiers
