#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "reflect/verifiers/outcome.hpp"

namespace reflect::verifiers {

struct ToolCall {
  std::string name;
  nlohmann::json arguments = nlohmann::json::object();

  nlohmann::json to_json() const;
  // Accepts {"name", "arguments"|"parameters"}; throws FormatError.
  static ToolCall from_json(const nlohmann::json& j);
};

// Value equality used for "exact match": numbers by value (1 == 1.0),
// strings byte-exact, object keys unordered, arrays ordered.
bool canonical_equal(const nlohmann::json& a, const nlohmann::json& b);

bool calls_equal(const ToolCall& a, const ToolCall& b);

// Parses one call object or a list of them, after removing <tool_call> tags
// and code fences. Throws FormatError when nothing parseable is found.
std::vector<ToolCall> parse_calls(std::string_view text);

// Success iff the parsed calls equal `expected` as a multiset.
VerifierOutcome verify_toolcall(const std::vector<ToolCall>& expected,
                                std::string_view model_output);

}  // namespace reflect::verifiers
