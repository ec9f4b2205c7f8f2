#include "reflect/verifiers/toolcall.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "reflect/error.hpp"

namespace reflect::verifiers {

using nlohmann::json;

json ToolCall::to_json() const { return json{{"name", name}, {"arguments", arguments}}; }

ToolCall ToolCall::from_json(const json& j) {
  if (!j.is_object()) throw FormatError("tool call is not an object");
  const auto name = j.find("name");
  if (name == j.end() || !name->is_string() || name->get<std::string>().empty()) {
    throw FormatError("tool call has no name");
  }
  ToolCall call{name->get<std::string>(), json::object()};
  auto args = j.find("arguments");
  if (args == j.end()) args = j.find("parameters");
  if (args != j.end()) {
    json value = *args;
    // Some servers encode arguments as a JSON string.
    if (value.is_string()) {
      value = json::parse(value.get<std::string>(), nullptr, false);
    }
    if (value.is_null() && args->is_null()) value = json::object();
    if (!value.is_object()) throw FormatError("tool call arguments are not an object");
    call.arguments = std::move(value);
  }
  return call;
}

namespace {

bool numbers_equal(const json& a, const json& b) {
  if (a.is_number_float() || b.is_number_float()) {
    return a.get<double>() == b.get<double>();
  }
  if (a.is_number_unsigned() && b.is_number_unsigned()) {
    return a.get<std::uint64_t>() == b.get<std::uint64_t>();
  }
  if (a.is_number_unsigned() || b.is_number_unsigned()) {
    const json& u = a.is_number_unsigned() ? a : b;
    const json& s = a.is_number_unsigned() ? b : a;
    const auto sv = s.get<std::int64_t>();
    return sv >= 0 && static_cast<std::uint64_t>(sv) == u.get<std::uint64_t>();
  }
  return a.get<std::int64_t>() == b.get<std::int64_t>();
}

std::string strip_fences(std::string_view text) {
  std::string out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text.compare(i, 3, "```") == 0) {
      i += 3;
      // Drop an info string such as "json" up to the end of the line.
      while (i < text.size() && text[i] != '\n' && text[i] != '{' && text[i] != '[') ++i;
      continue;
    }
    out += text[i++];
  }
  return out;
}

std::vector<std::string> tool_call_blocks(std::string_view text) {
  static constexpr std::string_view kOpen = "<tool_call>";
  static constexpr std::string_view kClose = "</tool_call>";
  std::vector<std::string> blocks;
  std::size_t from = 0;
  while (true) {
    const std::size_t open = text.find(kOpen, from);
    if (open == std::string_view::npos) break;
    const std::size_t body = open + kOpen.size();
    std::size_t close = text.find(kClose, body);
    if (close == std::string_view::npos) close = text.size();
    blocks.emplace_back(text.substr(body, close - body));
    from = std::min(text.size(), close + kClose.size());
  }
  return blocks;
}

// Finds the first balanced {...} or [...] value (string-aware) that parses.
std::optional<json> first_json_value(std::string_view text) {
  for (std::size_t start = 0; start < text.size(); ++start) {
    if (text[start] != '{' && text[start] != '[') continue;
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < text.size(); ++i) {
      const char c = text[i];
      if (in_string) {
        if (escaped) escaped = false;
        else if (c == '\\') escaped = true;
        else if (c == '"') in_string = false;
        continue;
      }
      if (c == '"') in_string = true;
      else if (c == '{' || c == '[') ++depth;
      else if (c == '}' || c == ']') {
        if (--depth == 0) {
          json j = json::parse(text.substr(start, i + 1 - start), nullptr, false);
          if (!j.is_discarded()) return j;
          break;
        }
      }
    }
  }
  return std::nullopt;
}

void append_calls(const json& j, std::vector<ToolCall>& out) {
  if (j.is_array()) {
    for (const auto& item : j) out.push_back(ToolCall::from_json(item));
  } else {
    out.push_back(ToolCall::from_json(j));
  }
}

std::vector<ToolCall> parse_fragment(std::string_view fragment) {
  const std::string cleaned = strip_fences(fragment);
  json j = json::parse(cleaned, nullptr, false);
  if (j.is_discarded()) {
    auto found = first_json_value(cleaned);
    if (!found) throw FormatError("no JSON value found");
    j = std::move(*found);
  }
  std::vector<ToolCall> calls;
  append_calls(j, calls);
  return calls;
}

std::vector<std::string> sorted_names(const std::vector<ToolCall>& calls) {
  std::vector<std::string> names;
  names.reserve(calls.size());
  for (const auto& c : calls) names.push_back(c.name);
  std::sort(names.begin(), names.end());
  return names;
}

}  // namespace

bool canonical_equal(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) return numbers_equal(a, b);
  if (a.type() != b.type()) return false;
  switch (a.type()) {
    case json::value_t::object: {
      if (a.size() != b.size()) return false;
      for (auto it = a.begin(); it != a.end(); ++it) {
        const auto other = b.find(it.key());
        if (other == b.end() || !canonical_equal(it.value(), *other)) return false;
      }
      return true;
    }
    case json::value_t::array: {
      if (a.size() != b.size()) return false;
      for (std::size_t i = 0; i < a.size(); ++i) {
        if (!canonical_equal(a[i], b[i])) return false;
      }
      return true;
    }
    default:
      return a == b;
  }
}

bool calls_equal(const ToolCall& a, const ToolCall& b) {
  return a.name == b.name && canonical_equal(a.arguments, b.arguments);
}

std::vector<ToolCall> parse_calls(std::string_view text) {
  const auto blocks = tool_call_blocks(text);
  std::vector<ToolCall> calls;
  if (blocks.empty()) {
    calls = parse_fragment(text);
  } else {
    for (const auto& block : blocks) {
      auto part = parse_fragment(block);
      calls.insert(calls.end(), part.begin(), part.end());
    }
  }
  if (calls.empty()) throw FormatError("empty tool call list");
  return calls;
}

VerifierOutcome verify_toolcall(const std::vector<ToolCall>& expected,
                                std::string_view model_output) {
  std::vector<ToolCall> got;
  try {
    got = parse_calls(model_output);
  } catch (const FormatError& e) {
    return VerifierOutcome::fail(Category::FormatError, e.what());
  }
  if (sorted_names(got) != sorted_names(expected)) {
    return VerifierOutcome::fail(Category::ToolChoiceError, "called functions differ");
  }
  std::vector<bool> used(expected.size(), false);
  for (const auto& call : got) {
    bool matched = false;
    for (std::size_t i = 0; i < expected.size() && !matched; ++i) {
      if (!used[i] && calls_equal(call, expected[i])) {
        used[i] = true;
        matched = true;
      }
    }
    if (!matched) {
      return VerifierOutcome::fail(Category::ParameterError,
                                   "arguments of '" + call.name + "' differ");
    }
  }
  return VerifierOutcome::ok();
}

}  // namespace reflect::verifiers
