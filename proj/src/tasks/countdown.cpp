#include "reflect/tasks/countdown.hpp"

#include <fstream>
#include <functional>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "reflect/error.hpp"
#include "reflect/random.hpp"

namespace reflect::tasks {

using verifiers::Expr;
using verifiers::Integer;
using verifiers::Op;
using verifiers::Rational;

namespace {

struct Item {
  Rational value;
  Expr expr;
};

// Visits every expression reachable by pairwise combination. The visitor
// returns true to stop the search.
bool search(std::vector<Item>& pool, const Rational& target,
            const std::function<bool(const Expr&)>& on_solution) {
  if (pool.size() == 1) {
    return pool[0].value == target && on_solution(pool[0].expr);
  }
  const std::size_t n = pool.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const Item a = pool[i];
      const Item b = pool[j];
      std::vector<Item> next;
      next.reserve(n - 1);
      for (std::size_t k = 0; k < n; ++k) {
        if (k != i && k != j) next.push_back(pool[k]);
      }
      auto attempt = [&](Rational v, Op op, const Expr& l, const Expr& r) {
        next.insert(next.begin() + static_cast<std::ptrdiff_t>(i), Item{std::move(v), Expr::binary(op, l, r)});
        const bool stop = search(next, target, on_solution);
        next.erase(next.begin() + static_cast<std::ptrdiff_t>(i));
        return stop;
      };
      if (attempt(a.value + b.value, Op::Add, a.expr, b.expr)) return true;
      if (attempt(a.value * b.value, Op::Mul, a.expr, b.expr)) return true;
      if (attempt(a.value - b.value, Op::Sub, a.expr, b.expr)) return true;
      if (attempt(b.value - a.value, Op::Sub, b.expr, a.expr)) return true;
      if (b.value != 0 && attempt(a.value / b.value, Op::Div, a.expr, b.expr)) return true;
      if (a.value != 0 && attempt(b.value / a.value, Op::Div, b.expr, a.expr)) return true;
    }
  }
  return false;
}

std::vector<Item> leaves(std::span<const std::int64_t> numbers) {
  std::vector<Item> pool;
  pool.reserve(numbers.size());
  for (const auto v : numbers) {
    if (v < 0) throw std::invalid_argument("countdown numbers must be non-negative");
    pool.push_back(Item{Rational(v), Expr::literal(Integer(v))});
  }
  return pool;
}

void check_size(std::span<const std::int64_t> numbers) {
  if (numbers.empty() || numbers.size() > 5) {
    throw std::invalid_argument("solver supports 1 to 5 numbers");
  }
}

}  // namespace

std::optional<Expr> solve_countdown(std::span<const std::int64_t> numbers, std::int64_t target) {
  check_size(numbers);
  auto pool = leaves(numbers);
  std::optional<Expr> found;
  search(pool, Rational(target), [&](const Expr& e) {
    found = e;
    return true;
  });
  return found;
}

std::vector<Expr> all_solutions(std::span<const std::int64_t> numbers, std::int64_t target) {
  check_size(numbers);
  auto pool = leaves(numbers);
  std::vector<Expr> out;
  std::set<std::string> seen;
  search(pool, Rational(target), [&](const Expr& e) {
    if (seen.insert(verifiers::render(e)).second) out.push_back(e);
    return false;
  });
  return out;
}

Expr random_expression(std::span<const std::int64_t> numbers, std::uint64_t seed) {
  if (numbers.empty()) throw std::invalid_argument("random_expression needs numbers");
  Rng rng(seed);
  std::vector<Expr> pool;
  for (const auto v : numbers) pool.push_back(Expr::literal(Integer(v)));
  static constexpr Op kOps[] = {Op::Add, Op::Sub, Op::Mul, Op::Div};
  while (pool.size() > 1) {
    const std::size_t i = uniform_below(rng, pool.size());
    std::size_t j = uniform_below(rng, pool.size() - 1);
    if (j >= i) ++j;
    const Op op = kOps[uniform_below(rng, 4)];
    Expr combined = Expr::binary(op, pool[i], pool[j]);
    const std::size_t lo = std::min(i, j);
    const std::size_t hi = std::max(i, j);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(hi));
    pool[lo] = std::move(combined);
  }
  return pool.front();
}

Problem generate_countdown(std::uint64_t seed, const CountdownConfig& config) {
  if (config.min_count < 1 || config.min_count > config.max_count || config.max_count > 5) {
    throw ConfigError("countdown count range must satisfy 1 <= min <= max <= 5");
  }
  if (config.min_value < 0 || config.min_value > config.max_value) {
    throw ConfigError("countdown value range must satisfy 0 <= min <= max");
  }
  Rng rng(seed);
  for (std::size_t attempt = 0; attempt < config.max_attempts; ++attempt) {
    const auto count = static_cast<std::size_t>(uniform_int(
        rng, static_cast<std::int64_t>(config.min_count), static_cast<std::int64_t>(config.max_count)));
    std::vector<std::int64_t> numbers(count);
    for (auto& v : numbers) v = uniform_int(rng, config.min_value, config.max_value);
    const Expr e = random_expression(numbers, rng());
    Rational value;
    try {
      value = verifiers::evaluate(e);
    } catch (const DivisionByZero&) {
      continue;
    }
    if (boost::multiprecision::denominator(value) != 1) continue;
    const Integer t = boost::multiprecision::numerator(value);
    if (t < config.min_target || t > config.max_target) continue;
    return Problem{std::move(numbers), static_cast<std::int64_t>(t), seed};
  }
  throw GenerationExhausted("no valid instance after " + std::to_string(config.max_attempts) +
                            " attempts (seed " + std::to_string(seed) + ")");
}

void write_problems(const std::filesystem::path& path, std::span<const Problem> problems) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError("cannot open " + path.string() + " for writing");
  for (const auto& p : problems) {
    nlohmann::json j{{"numbers", p.numbers}, {"target", p.target}, {"seed", p.seed}};
    out << j.dump() << '\n';
  }
  if (!out) throw FileError("write failed: " + path.string());
}

std::vector<Problem> read_problems(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot open " + path.string());
  std::vector<Problem> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw RecordError(lineno, "not a JSON object");
    try {
      Problem p;
      p.numbers = j.at("numbers").get<std::vector<std::int64_t>>();
      p.target = j.at("target").get<std::int64_t>();
      p.seed = j.value("seed", std::uint64_t{0});
      if (p.numbers.empty()) throw RecordError(lineno, "empty numbers");
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw RecordError(lineno, e.what());
    }
  }
  return out;
}

}  // namespace reflect::tasks
