#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "reflect/verifiers/outcome.hpp"

namespace reflect::verifiers {

// Contents of the last balanced \boxed{...} in the text, if any.
std::optional<std::string> extract_answer(std::string_view model_output);

// Checks, in order: the boxed answer parses and evaluates (InvalidEquation),
// its leaves equal `numbers` as a multiset (WrongNumbers), and its exact value
// equals `target` (MissedTarget).
VerifierOutcome verify_countdown(std::span<const std::int64_t> numbers, std::int64_t target,
                                 std::string_view model_output);

}  // namespace reflect::verifiers
