#pragma once

#include <string>
#include <vector>

#include "reflect/llm/chat_message.hpp"
#include "reflect/tasks/task.hpp"

namespace reflect::tasks {

enum class Stage { FirstAttempt, Reflection, Retry };

// Conversation templates. Placeholders: {nums} and {target} for Countdown,
// {tools} and {query} for tool calling.
struct PromptTemplate {
  TaskKind kind = TaskKind::Countdown;
  std::string name;
  std::string system;                   // may contain {tools}
  std::vector<std::string> first_user;  // user messages of the first attempt
  std::string reflection;
  std::vector<std::string> retry;  // user messages that set up the retry
  bool retry_repeats_system = false;
};

PromptTemplate countdown_template();
PromptTemplate qwen_toolcall_template();
PromptTemplate llama_toolcall_template();
// "countdown", "qwen" or "llama"; throws std::invalid_argument.
PromptTemplate template_by_name(const std::string& name);

// "[4, 73, 4, 23]"
std::string format_number_list(const std::vector<std::int64_t>& numbers);

// One tool schema per line, compact JSON in the key order they were read.
std::string format_tool_list(const ToolTask& task);

// Returns `history` extended with the messages of `stage`. FirstAttempt needs
// an empty history, Reflection a first attempt followed by the model's answer,
// Retry additionally the reflection prompt and the reflection. Throws
// StageError otherwise.
llm::Transcript render_messages(const PromptTemplate& tpl, const Task& task, Stage stage,
                                const llm::Transcript& history);

}  // namespace reflect::tasks
