#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace reflect::verifiers {

// Error taxonomy for first-attempt failures. Countdown uses InvalidEquation,
// WrongNumbers and MissedTarget; tool calls use ToolChoiceError,
// ParameterError and FormatError.
enum class Category {
  Success,
  InvalidEquation,
  WrongNumbers,
  MissedTarget,
  ToolChoiceError,
  ParameterError,
  FormatError,
};

std::string_view to_string(Category c);
std::optional<Category> category_from_string(std::string_view s);

bool is_countdown_category(Category c);
bool is_toolcall_category(Category c);

struct VerifierOutcome {
  bool success = false;
  Category category = Category::FormatError;
  std::string detail;

  static VerifierOutcome ok(std::string detail = {}) {
    return {true, Category::Success, std::move(detail)};
  }
  static VerifierOutcome fail(Category c, std::string detail) {
    return {false, c, std::move(detail)};
  }

  friend bool operator==(const VerifierOutcome&, const VerifierOutcome&) = default;
};

}  // namespace reflect::verifiers
