#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "reflect/verifiers/toolcall.hpp"

namespace reflect::tasks {

struct ToolParam {
  std::string name;
  std::string description;
  std::string type;
  nlohmann::json default_value;  // null when absent
};

struct ToolSchema {
  std::string name;
  std::string description;
  std::vector<ToolParam> parameters;
  nlohmann::ordered_json raw;  // as read, key order preserved for prompts
};

struct ToolTask {
  std::string query;
  std::vector<ToolSchema> tools;
  std::vector<verifiers::ToolCall> expected;
};

// Parses one APIGen record: {query, tools, answers}. `tools` and `answers`
// may be lists or JSON-encoded strings of lists. Throws std::invalid_argument
// with the reason on malformed input.
ToolTask tool_task_from_json(const nlohmann::ordered_json& record);
nlohmann::ordered_json tool_task_to_json(const ToolTask& task);

// One record per line, UTF-8; blank lines skipped. Throws FileError or
// RecordError carrying the line number.
std::vector<ToolTask> load_apigen(const std::filesystem::path& path);

}  // namespace reflect::tasks
