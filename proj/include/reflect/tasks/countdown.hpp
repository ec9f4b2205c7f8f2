#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "reflect/verifiers/expr.hpp"

namespace reflect::tasks {

struct Problem {
  std::vector<std::int64_t> numbers;
  std::int64_t target = 0;
  std::uint64_t seed = 0;

  friend bool operator==(const Problem&, const Problem&) = default;
};

// Size and range parameters for generated instances. The defaults are the
// mini scale used for the tiny policy.
struct CountdownConfig {
  std::size_t min_count = 3;
  std::size_t max_count = 3;
  std::int64_t min_value = 1;
  std::int64_t max_value = 9;
  std::int64_t min_target = 1;
  std::int64_t max_target = 30;
  std::size_t max_attempts = 10000;
};

// Exhaustive search: repeatedly replaces two pool entries by their
// combination under + - * / (both operand orders) with exact arithmetic.
// Deterministic; returns the first solution in enumeration order.
std::optional<verifiers::Expr> solve_countdown(std::span<const std::int64_t> numbers,
                                               std::int64_t target);

// Every distinct (by rendering) solving expression, in enumeration order.
std::vector<verifiers::Expr> all_solutions(std::span<const std::int64_t> numbers,
                                           std::int64_t target);

// Samples numbers, combines them by a random expression and keeps its value
// as the target when it lies in range. Throws GenerationExhausted.
Problem generate_countdown(std::uint64_t seed, const CountdownConfig& config);

// Uniformly random expression that uses every number exactly once.
verifiers::Expr random_expression(std::span<const std::int64_t> numbers, std::uint64_t seed);

void write_problems(const std::filesystem::path& path, std::span<const Problem> problems);
// Throws FileError, RecordError.
std::vector<Problem> read_problems(const std::filesystem::path& path);

}  // namespace reflect::tasks
