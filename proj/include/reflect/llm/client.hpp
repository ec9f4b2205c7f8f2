#pragma once

#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "reflect/llm/chat_message.hpp"

namespace reflect::llm {

struct EndpointConfig {
  std::string base_url = "http://127.0.0.1:8000/v1";
  std::string model;
  std::string token_env = "REFLECT_API_KEY";  // name of the variable, never its value
  double timeout_seconds = 60.0;
  int max_retries = 4;
  double backoff_base_seconds = 0.5;
  std::size_t max_in_flight = 8;

  void validate() const;  // throws ConfigError
};

struct ChatSampling {
  double temperature = 0.0;
  int max_tokens = 512;
  std::optional<std::uint64_t> seed;
};

struct ChatResult {
  std::optional<std::string> text;
  std::string error_kind;
  std::string error;

  bool ok() const { return text.has_value(); }
};

// Thread-safe chat-completions client. All calls made through one client
// share its in-flight limit.
class Client {
 public:
  explicit Client(EndpointConfig cfg);

  // Throws TransportError, ProtocolError or AuthError.
  std::string chat(const Transcript& messages, const ChatSampling& sampling) const;

  // Results are in job order; per-job failures are captured, not thrown.
  std::vector<ChatResult> chat_many(const std::vector<Transcript>& jobs,
                                    const ChatSampling& sampling) const;

  const EndpointConfig& config() const { return cfg_; }

 private:
  std::string post_once(const std::string& body, int& status) const;

  EndpointConfig cfg_;
  std::string host_;  // scheme://host[:port]
  std::string path_;  // prefix + /chat/completions
  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  mutable std::size_t in_flight_ = 0;
};

std::string request_body(const std::string& model, const Transcript& messages,
                         const ChatSampling& sampling);
// choices[0].message.content; throws ProtocolError.
std::string parse_response(const std::string& body);

}  // namespace reflect::llm
