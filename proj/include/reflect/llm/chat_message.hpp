#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace reflect::llm {

enum class Role { System, User, Assistant };

inline std::string_view to_string(Role r) {
  switch (r) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

struct ChatMessage {
  Role role = Role::User;
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

using Transcript = std::vector<ChatMessage>;

}  // namespace reflect::llm
