#pragma once

// Test-only reference implementations. They share no code with the library:
// expressions are evaluated through a shunting-yard postfix pass over
// __int128 fractions, and Countdown solvability is decided by enumerating
// tree shapes, operand permutations and operator assignments directly.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace oracle {

using i128 = __int128;

struct Frac {
  i128 num = 0;
  i128 den = 1;
};

inline i128 gcd128(i128 a, i128 b) {
  if (a < 0) a = -a;
  if (b < 0) b = -b;
  while (b != 0) {
    i128 t = a % b;
    a = b;
    b = t;
  }
  return a;
}

inline Frac norm(i128 n, i128 d) {
  if (d < 0) {
    n = -n;
    d = -d;
  }
  i128 g = gcd128(n, d);
  if (g == 0) g = 1;
  return {n / g, d / g};
}

inline std::optional<Frac> apply(char op, Frac a, Frac b) {
  switch (op) {
    case '+': return norm(a.num * b.den + b.num * a.den, a.den * b.den);
    case '-': return norm(a.num * b.den - b.num * a.den, a.den * b.den);
    case '*': return norm(a.num * b.num, a.den * b.den);
    case '/':
      if (b.num == 0) return std::nullopt;
      return norm(a.num * b.den, a.den * b.num);
  }
  return std::nullopt;
}

struct PostfixItem {
  bool is_op = false;
  char op = 0;
  std::int64_t value = 0;
};

// Returns nullopt for anything outside + - * / ( ) and non-negative integers.
inline std::optional<std::vector<PostfixItem>> to_postfix(const std::string& s) {
  std::vector<PostfixItem> out;
  std::vector<char> ops;
  bool expect_operand = true;
  auto prec = [](char c) { return (c == '+' || c == '-') ? 1 : 2; };
  for (std::size_t i = 0; i < s.size();) {
    const char c = s[i];
    if (c == ' ' || c == '\t' || c == '\n') {
      ++i;
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      if (!expect_operand) return std::nullopt;
      std::int64_t v = 0;
      std::size_t digits = 0;
      while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) {
        v = v * 10 + (s[i] - '0');
        ++i;
        if (++digits > 15) return std::nullopt;
      }
      out.push_back({false, 0, v});
      expect_operand = false;
    } else if (c == '(') {
      if (!expect_operand) return std::nullopt;
      ops.push_back(c);
      ++i;
    } else if (c == ')') {
      if (expect_operand) return std::nullopt;
      while (!ops.empty() && ops.back() != '(') {
        out.push_back({true, ops.back(), 0});
        ops.pop_back();
      }
      if (ops.empty()) return std::nullopt;
      ops.pop_back();
      ++i;
    } else if (c == '+' || c == '-' || c == '*' || c == '/') {
      if (expect_operand) return std::nullopt;
      while (!ops.empty() && ops.back() != '(' && prec(ops.back()) >= prec(c)) {
        out.push_back({true, ops.back(), 0});
        ops.pop_back();
      }
      ops.push_back(c);
      expect_operand = true;
      ++i;
    } else {
      return std::nullopt;
    }
  }
  if (expect_operand) return std::nullopt;
  while (!ops.empty()) {
    if (ops.back() == '(') return std::nullopt;
    out.push_back({true, ops.back(), 0});
    ops.pop_back();
  }
  return out;
}

// Success bit of a Countdown check on a bare expression string.
inline bool countdown_success(std::vector<std::int64_t> numbers, std::int64_t target,
                              const std::string& expression) {
  const auto postfix = to_postfix(expression);
  if (!postfix) return false;
  std::vector<Frac> stack;
  std::vector<std::int64_t> leaves;
  for (const auto& item : *postfix) {
    if (!item.is_op) {
      stack.push_back({item.value, 1});
      leaves.push_back(item.value);
      continue;
    }
    if (stack.size() < 2) return false;
    const Frac b = stack.back();
    stack.pop_back();
    const Frac a = stack.back();
    stack.pop_back();
    const auto r = apply(item.op, a, b);
    if (!r) return false;
    stack.push_back(*r);
  }
  if (stack.size() != 1) return false;
  std::sort(leaves.begin(), leaves.end());
  std::sort(numbers.begin(), numbers.end());
  if (leaves != numbers) return false;
  return stack[0].den == 1 && stack[0].num == target;
}

// All values reachable by full binary trees over the numbers (every
// permutation, shape and operator assignment).
inline void tree_values(const std::vector<Frac>& leaves, std::size_t lo, std::size_t hi,
                        std::vector<Frac>& out) {
  if (hi - lo == 1) {
    out.push_back(leaves[lo]);
    return;
  }
  for (std::size_t split = lo + 1; split < hi; ++split) {
    std::vector<Frac> left, right;
    tree_values(leaves, lo, split, left);
    tree_values(leaves, split, hi, right);
    for (const auto& a : left) {
      for (const auto& b : right) {
        for (char op : {'+', '-', '*', '/'}) {
          if (auto r = apply(op, a, b)) out.push_back(*r);
        }
      }
    }
  }
}

inline std::set<std::int64_t> reachable_integers(std::vector<std::int64_t> numbers) {
  std::set<std::int64_t> result;
  std::sort(numbers.begin(), numbers.end());
  do {
    std::vector<Frac> leaves;
    for (auto v : numbers) leaves.push_back({v, 1});
    std::vector<Frac> values;
    tree_values(leaves, 0, leaves.size(), values);
    for (const auto& f : values) {
      if (f.den == 1) result.insert(static_cast<std::int64_t>(f.num));
    }
  } while (std::next_permutation(numbers.begin(), numbers.end()));
  return result;
}

}  // namespace oracle
