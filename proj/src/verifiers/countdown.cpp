#include "reflect/verifiers/countdown.hpp"

#include <algorithm>
#include <vector>

#include "reflect/error.hpp"
#include "reflect/verifiers/expr.hpp"

namespace reflect::verifiers {

std::optional<std::string> extract_answer(std::string_view text) {
  static constexpr std::string_view kMarker = "\\boxed{";
  std::optional<std::string> last;
  std::size_t from = 0;
  while (true) {
    const std::size_t at = text.find(kMarker, from);
    if (at == std::string_view::npos) break;
    const std::size_t open = at + kMarker.size();
    int depth = 1;
    std::size_t i = open;
    for (; i < text.size() && depth > 0; ++i) {
      if (text[i] == '{') ++depth;
      else if (text[i] == '}') --depth;
    }
    if (depth == 0) {
      last = std::string(text.substr(open, i - 1 - open));
    }
    from = at + 1;
  }
  return last;
}

VerifierOutcome verify_countdown(std::span<const std::int64_t> numbers, std::int64_t target,
                                 std::string_view model_output) {
  const auto answer = extract_answer(model_output);
  if (!answer) return VerifierOutcome::fail(Category::InvalidEquation, "no \\boxed{} answer");

  std::optional<Expr> expr;
  Rational value;
  try {
    expr = parse_expression(*answer);
    value = evaluate(*expr);
  } catch (const ParseError& e) {
    return VerifierOutcome::fail(Category::InvalidEquation, e.what());
  } catch (const DivisionByZero& e) {
    return VerifierOutcome::fail(Category::InvalidEquation, e.what());
  }

  std::vector<Integer> used = collect_operands(*expr);
  std::vector<Integer> given(numbers.begin(), numbers.end());
  std::sort(used.begin(), used.end());
  std::sort(given.begin(), given.end());
  if (used != given) {
    return VerifierOutcome::fail(Category::WrongNumbers,
                                 "operands do not match the given numbers");
  }
  if (value != Rational(target)) {
    return VerifierOutcome::fail(Category::MissedTarget, "evaluates to " + value.str());
  }
  return VerifierOutcome::ok(render(*expr) + " = " + std::to_string(target));
}

}  // namespace reflect::verifiers
