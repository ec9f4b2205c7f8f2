#include "reflect/tasks/prompts.hpp"

#include <map>
#include <stdexcept>

#include "reflect/error.hpp"

namespace reflect::tasks {

using llm::ChatMessage;
using llm::Role;
using llm::Transcript;

namespace {

constexpr const char* kCountdownInstruction =
    "Please reason step by step, and put your final answer within \\boxed{}.";

constexpr const char* kCountdownProblem =
    "Using the numbers {nums}, create an equation that equals {target}. You can use basic "
    "arithmetic operations (+, -, *, /) and each number can only be used once.\n"
    "Please reason step by step, and put your final answer within \\boxed{}.";

constexpr const char* kToolReflection =
    "You tried performing the task, but failed in generating the correct tool call. Reflect on "
    "what went wrong and write a short explanation that will help you do better next time.";

constexpr const char* kCountdownReflection =
    "You tried solving the problem and got the wrong answer. Reflect on what went wrong and "
    "write a short explanation that will help you do better next time.";

// Replaces {key} occurrences in one left-to-right pass; substituted text is
// not rescanned.
std::string substitute(const std::string& text, const std::map<std::string, std::string>& vars) {
  std::string out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '{') {
      const std::size_t close = text.find('}', i);
      if (close != std::string::npos) {
        const auto it = vars.find(text.substr(i + 1, close - i - 1));
        if (it != vars.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out += text[i++];
  }
  return out;
}

std::map<std::string, std::string> variables(const Task& task) {
  if (const auto* p = std::get_if<Problem>(&task)) {
    return {{"nums", format_number_list(p->numbers)}, {"target", std::to_string(p->target)}};
  }
  const auto& t = std::get<ToolTask>(task);
  return {{"tools", format_tool_list(t)}, {"query", t.query}};
}

Transcript first_attempt(const PromptTemplate& tpl, const std::map<std::string, std::string>& vars) {
  Transcript msgs;
  msgs.push_back({Role::System, substitute(tpl.system, vars)});
  for (const auto& u : tpl.first_user) msgs.push_back({Role::User, substitute(u, vars)});
  return msgs;
}

bool has_prefix(const Transcript& history, const Transcript& prefix) {
  if (history.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (!(history[i] == prefix[i])) return false;
  }
  return true;
}

}  // namespace

PromptTemplate countdown_template() {
  return PromptTemplate{TaskKind::Countdown,
                        "countdown",
                        kCountdownInstruction,
                        {kCountdownProblem},
                        kCountdownReflection,
                        {kCountdownProblem},
                        false};
}

PromptTemplate qwen_toolcall_template() {
  return PromptTemplate{
      TaskKind::ToolCalling,
      "qwen",
      "You are a helpful assistant that can answer questions and help with tasks. \n"
      "\n"
      "# Tools\n"
      "\n"
      "You may call one or more functions to assist with the user query.\n"
      "\n"
      "You are provided with function signatures within <tools></tools> XML tags:\n"
      "<tools>\n"
      "{tools}\n"
      "</tools>\n"
      "\n"
      "For each function call, return a json object with function name and arguments within "
      "<tool_call></tool_call> XML tags:\n"
      "<tool_call>\n"
      "{\"name\": <function-name>, \"arguments\": <args-json-object>}\n"
      "</tool_call>",
      {"{query}"},
      kToolReflection,
      {"{query}"},
      true};
}

PromptTemplate llama_toolcall_template() {
  return PromptTemplate{
      TaskKind::ToolCalling,
      "llama",
      "When you receive a tool call response, use the output to format an answer to the "
      "original user question.\n"
      "\n"
      "You are a helpful assistant with tool calling capabilities.",
      {"Given the following functions, please respond with a JSON for a function call with its "
       "proper arguments that best answers the given prompt.\n"
       "\n"
       "Respond in the format {\"name\": function name, \"parameters\": dictionary of argument "
       "name and its value}. Do not use variables.\n"
       "\n"
       "{tools}\n"
       "\n"
       "Question:",
       "{query}"},
      kToolReflection,
      {"{query}"},
      false};
}

PromptTemplate template_by_name(const std::string& name) {
  if (name == "countdown") return countdown_template();
  if (name == "qwen") return qwen_toolcall_template();
  if (name == "llama") return llama_toolcall_template();
  throw std::invalid_argument("unknown prompt template '" + name + "'");
}

std::string format_number_list(const std::vector<std::int64_t>& numbers) {
  std::string out = "[";
  for (std::size_t i = 0; i < numbers.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(numbers[i]);
  }
  return out + "]";
}

std::string format_tool_list(const ToolTask& task) {
  std::string out;
  for (std::size_t i = 0; i < task.tools.size(); ++i) {
    if (i) out += '\n';
    out += task.tools[i].raw.dump();
  }
  return out;
}

Transcript render_messages(const PromptTemplate& tpl, const Task& task, Stage stage,
                           const Transcript& history) {
  if (kind_of(task) != tpl.kind) throw StageError("template and task kinds differ");
  const auto vars = variables(task);
  const Transcript first = first_attempt(tpl, vars);

  if (stage == Stage::FirstAttempt) {
    if (!history.empty()) throw StageError("first attempt requires an empty history");
    return first;
  }

  const std::size_t n = first.size();
  if (!has_prefix(history, first) || history.size() < n + 1 ||
      history[n].role != Role::Assistant) {
    throw StageError("history does not contain a first attempt");
  }

  Transcript out = history;
  if (stage == Stage::Reflection) {
    if (history.size() != n + 1) throw StageError("reflection must follow the first attempt");
    out.push_back({Role::User, tpl.reflection});
    return out;
  }

  if (history.size() != n + 3 || history[n + 1] != ChatMessage{Role::User, tpl.reflection} ||
      history[n + 2].role != Role::Assistant) {
    throw StageError("retry must follow a reflection");
  }
  if (tpl.retry_repeats_system) out.push_back({Role::System, substitute(tpl.system, vars)});
  for (const auto& u : tpl.retry) out.push_back({Role::User, substitute(u, vars)});
  return out;
}

}  // namespace reflect::tasks
