#include "reflect/verifiers/outcome.hpp"

#include <array>
#include <utility>

namespace reflect::verifiers {

namespace {
constexpr std::array<std::pair<Category, std::string_view>, 7> kNames{{
    {Category::Success, "Success"},
    {Category::InvalidEquation, "InvalidEquation"},
    {Category::WrongNumbers, "WrongNumbers"},
    {Category::MissedTarget, "MissedTarget"},
    {Category::ToolChoiceError, "ToolChoiceError"},
    {Category::ParameterError, "ParameterError"},
    {Category::FormatError, "FormatError"},
}};
}  // namespace

std::string_view to_string(Category c) {
  for (const auto& [cat, name] : kNames) {
    if (cat == c) return name;
  }
  return "Unknown";
}

std::optional<Category> category_from_string(std::string_view s) {
  for (const auto& [cat, name] : kNames) {
    if (name == s) return cat;
  }
  return std::nullopt;
}

bool is_countdown_category(Category c) {
  return c == Category::Success || c == Category::InvalidEquation ||
         c == Category::WrongNumbers || c == Category::MissedTarget;
}

bool is_toolcall_category(Category c) {
  return c == Category::Success || c == Category::ToolChoiceError ||
         c == Category::ParameterError || c == Category::FormatError;
}

}  // namespace reflect::verifiers
