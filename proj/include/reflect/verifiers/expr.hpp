#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

namespace reflect::verifiers {

using Integer = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;

enum class Op : char { Add = '+', Sub = '-', Mul = '*', Div = '/' };

// Immutable arithmetic expression tree over non-negative integer literals.
// Copies share structure.
class Expr {
 public:
  static Expr literal(Integer value);
  static Expr binary(Op op, Expr lhs, Expr rhs);

  bool is_literal() const;
  const Integer& value() const;  // literal only
  Op op() const;                 // binary only
  const Expr& lhs() const;
  const Expr& rhs() const;

  std::size_t depth() const;
  std::size_t leaf_count() const;

  friend bool operator==(const Expr& a, const Expr& b);

 private:
  struct Node;
  Expr() = default;
  explicit Expr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
  std::shared_ptr<const Node> node_;
};

// expr := term (('+'|'-') term)* ; term := factor (('*'|'/') factor)* ;
// factor := INT | '(' expr ')'. Whitespace between tokens is skipped.
// Throws ParseError.
Expr parse_expression(std::string_view text);

// Minimal-parenthesis rendering such that parse_expression(render(e)) == e.
std::string render(const Expr& e);

// Exact value. Throws DivisionByZero.
Rational evaluate(const Expr& e);

// Leaf literals in left-to-right order.
std::vector<Integer> collect_operands(const Expr& e);

}  // namespace reflect::verifiers
