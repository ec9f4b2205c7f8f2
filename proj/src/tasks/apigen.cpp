#include "reflect/tasks/apigen.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include "reflect/error.hpp"

namespace reflect::tasks {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

ordered_json maybe_decode(const ordered_json& v, const char* field) {
  if (v.is_string()) {
    auto decoded = ordered_json::parse(v.get<std::string>(), nullptr, false);
    if (decoded.is_discarded()) {
      throw std::invalid_argument(std::string("field '") + field + "' is not valid JSON");
    }
    return decoded;
  }
  return v;
}

std::string string_or_empty(const ordered_json& obj, const char* key) {
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return {};
  if (!it->is_string()) throw std::invalid_argument(std::string("'") + key + "' is not a string");
  return it->get<std::string>();
}

ToolSchema parse_tool(const ordered_json& t) {
  if (!t.is_object()) throw std::invalid_argument("tool is not an object");
  ToolSchema tool;
  tool.raw = t;
  tool.name = string_or_empty(t, "name");
  if (tool.name.empty()) throw std::invalid_argument("tool has no name");
  tool.description = string_or_empty(t, "description");
  const auto params = t.find("parameters");
  if (params != t.end() && !params->is_null()) {
    if (!params->is_object()) throw std::invalid_argument("tool parameters are not an object");
    for (auto it = params->begin(); it != params->end(); ++it) {
      ToolParam p;
      p.name = it.key();
      if (it.value().is_object()) {
        p.description = string_or_empty(it.value(), "description");
        p.type = string_or_empty(it.value(), "type");
        if (const auto d = it.value().find("default"); d != it.value().end()) {
          p.default_value = json::parse(d->dump());
        }
      }
      tool.parameters.push_back(std::move(p));
    }
  }
  return tool;
}

}  // namespace

ToolTask tool_task_from_json(const ordered_json& record) {
  if (!record.is_object()) throw std::invalid_argument("record is not an object");
  for (const char* field : {"query", "tools", "answers"}) {
    if (!record.contains(field)) {
      throw std::invalid_argument(std::string("missing field '") + field + "'");
    }
  }
  ToolTask task;
  if (!record["query"].is_string()) throw std::invalid_argument("'query' is not a string");
  task.query = record["query"].get<std::string>();

  const ordered_json tools = maybe_decode(record["tools"], "tools");
  if (!tools.is_array()) throw std::invalid_argument("'tools' is not a list");
  for (const auto& t : tools) task.tools.push_back(parse_tool(t));
  if (task.tools.empty() || task.tools.size() > 8) {
    throw std::invalid_argument("a query offers between 1 and 8 tools, got " +
                                std::to_string(task.tools.size()));
  }

  const ordered_json answers = maybe_decode(record["answers"], "answers");
  if (!answers.is_array() || answers.empty()) {
    throw std::invalid_argument("'answers' must be a nonempty list");
  }
  for (const auto& a : answers) {
    try {
      task.expected.push_back(verifiers::ToolCall::from_json(json::parse(a.dump())));
    } catch (const FormatError& e) {
      throw std::invalid_argument(std::string("bad answer: ") + e.what());
    }
    const auto& name = task.expected.back().name;
    const bool offered = std::any_of(task.tools.begin(), task.tools.end(),
                                     [&](const ToolSchema& t) { return t.name == name; });
    if (!offered) throw std::invalid_argument("answer calls unknown tool '" + name + "'");
  }
  return task;
}

ordered_json tool_task_to_json(const ToolTask& task) {
  ordered_json tools = ordered_json::array();
  for (const auto& t : task.tools) tools.push_back(t.raw);
  ordered_json answers = ordered_json::array();
  for (const auto& c : task.expected) {
    answers.push_back({{"name", c.name}, {"arguments", ordered_json::parse(c.arguments.dump())}});
  }
  return {{"query", task.query}, {"tools", std::move(tools)}, {"answers", std::move(answers)}};
}

std::vector<ToolTask> load_apigen(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot open " + path.string());
  std::vector<ToolTask> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto j = ordered_json::parse(line, nullptr, false);
    if (j.is_discarded()) throw RecordError(lineno, "not valid JSON");
    try {
      out.push_back(tool_task_from_json(j));
    } catch (const std::invalid_argument& e) {
      throw RecordError(lineno, e.what());
    }
  }
  return out;
}

}  // namespace reflect::tasks
