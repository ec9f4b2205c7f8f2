#pragma once

#include <string_view>
#include <variant>

#include "reflect/tasks/apigen.hpp"
#include "reflect/tasks/countdown.hpp"

namespace reflect::tasks {

enum class TaskKind { Countdown, ToolCalling };

using Task = std::variant<Problem, ToolTask>;

inline TaskKind kind_of(const Task& t) {
  return std::holds_alternative<Problem>(t) ? TaskKind::Countdown : TaskKind::ToolCalling;
}

inline std::string_view to_string(TaskKind k) {
  return k == TaskKind::Countdown ? "countdown" : "toolcall";
}

}  // namespace reflect::tasks
