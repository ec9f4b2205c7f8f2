#include <set>

#include "doctest.h"
#include "reflect/error.hpp"
#include "reflect/tasks/countdown.hpp"
#include "reflect/verifiers/countdown.hpp"
#include "support/oracles.hpp"

using namespace reflect::tasks;
using reflect::verifiers::render;
using reflect::verifiers::verify_countdown;

namespace {

bool verifies(const std::vector<std::int64_t>& nums, std::int64_t target, const reflect::verifiers::Expr& e) {
  return verify_countdown(nums, target, "\\boxed{" + render(e) + "}").success;
}

}  // namespace

TEST_CASE("solver on the sample instance") {
  const std::vector<std::int64_t> nums{4, 73, 4, 23};
  const auto e = solve_countdown(nums, 76);
  REQUIRE(e.has_value());
  CHECK(verifies(nums, 76, *e));
  CHECK(solve_countdown(nums, 76) == e);  // deterministic
}

TEST_CASE("solver edge cases") {
  const std::vector<std::int64_t> ones{1, 1, 1};
  CHECK_FALSE(solve_countdown(ones, 100).has_value());
  const std::vector<std::int64_t> seven{7};
  REQUIRE(solve_countdown(seven, 7).has_value());
  CHECK(render(*solve_countdown(seven, 7)) == "7");
  CHECK_FALSE(solve_countdown(seven, 8).has_value());
  const std::vector<std::int64_t> none{};
  CHECK_THROWS_AS(solve_countdown(none, 1), std::invalid_argument);
}

TEST_CASE("solver uses fractions when needed") {
  // 24 from {1, 3, 4, 6} needs 6/(1-3/4).
  const std::vector<std::int64_t> nums{1, 3, 4, 6};
  const auto e = solve_countdown(nums, 24);
  REQUIRE(e.has_value());
  CHECK(verifies(nums, 24, *e));
}

TEST_CASE("solver is sound and complete against tree enumeration") {
  for (std::int64_t a = 1; a <= 5; ++a) {
    for (std::int64_t b = a; b <= 5; ++b) {
      for (std::int64_t c = b; c <= 5; ++c) {
        const std::vector<std::int64_t> nums{a, b, c};
        const auto reachable = oracle::reachable_integers(nums);
        for (std::int64_t t = 1; t <= 20; ++t) {
          const auto e = solve_countdown(nums, t);
          CHECK(e.has_value() == (reachable.count(t) == 1));
          if (e) CHECK(verifies(nums, t, *e));
        }
      }
    }
  }
}

TEST_CASE("all_solutions are distinct solutions") {
  const std::vector<std::int64_t> nums{2, 3, 4};
  const auto sols = all_solutions(nums, 24);
  CHECK(sols.size() >= 2);
  std::set<std::string> rendered;
  for (const auto& e : sols) {
    CHECK(verifies(nums, 24, e));
    rendered.insert(render(e));
  }
  CHECK(rendered.size() == sols.size());
  CHECK(render(sols.front()) == render(*solve_countdown(nums, 24)));
}

TEST_CASE("generator is deterministic and solvable by construction") {
  const CountdownConfig cfg{};
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    const Problem p = generate_countdown(seed, cfg);
    CHECK(p == generate_countdown(seed, cfg));
    CHECK(p.numbers.size() == 3);
    for (auto v : p.numbers) CHECK((v >= 1 && v <= 9));
    CHECK((p.target >= 1 && p.target <= 30));
    CHECK(solve_countdown(p.numbers, p.target).has_value());
  }
  CHECK_FALSE(generate_countdown(1, cfg) == generate_countdown(2, cfg));
}

TEST_CASE("generator reports exhaustion") {
  CountdownConfig cfg;
  cfg.min_target = 40;
  cfg.max_target = 39;
  cfg.max_attempts = 50;
  CHECK_THROWS_AS(generate_countdown(3, cfg), reflect::GenerationExhausted);
  CountdownConfig bad;
  bad.max_count = 9;
  CHECK_THROWS_AS(generate_countdown(3, bad), reflect::ConfigError);
}

TEST_CASE("random_expression uses each number once") {
  const std::vector<std::int64_t> nums{5, 1, 5, 8};
  for (std::uint64_t s = 0; s < 200; ++s) {
    auto ops = reflect::verifiers::collect_operands(random_expression(nums, s));
    std::sort(ops.begin(), ops.end());
    CHECK(ops == std::vector<reflect::verifiers::Integer>{1, 5, 5, 8});
  }
}
