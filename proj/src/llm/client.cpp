#include "reflect/llm/client.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <random>
#include <regex>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "reflect/error.hpp"

namespace reflect::llm {

using nlohmann::json;

void EndpointConfig::validate() const {
  if (max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
  if (!(timeout_seconds > 0.0)) throw ConfigError("timeout must be > 0");
  if (max_retries < 0) throw ConfigError("max_retries must be >= 0");
  if (backoff_base_seconds < 0.0) throw ConfigError("backoff base must be >= 0");
}

std::string request_body(const std::string& model, const Transcript& messages,
                         const ChatSampling& sampling) {
  json msgs = json::array();
  for (const auto& m : messages) msgs.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  json body = {{"model", model},
               {"messages", std::move(msgs)},
               {"temperature", sampling.temperature},
               {"max_tokens", sampling.max_tokens}};
  if (sampling.seed) body["seed"] = *sampling.seed;
  return body.dump();
}

std::string parse_response(const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception&) {
    throw ProtocolError("response is not JSON");
  }
  if (!j.is_object() || !j.contains("choices") || !j["choices"].is_array() || j["choices"].empty()) {
    throw ProtocolError("response has no choices");
  }
  const auto& c = j["choices"][0];
  if (!c.is_object() || !c.contains("message") || !c["message"].is_object() ||
      !c["message"].contains("content") || !c["message"]["content"].is_string()) {
    throw ProtocolError("choices[0].message.content missing or not a string");
  }
  return c["message"]["content"].get<std::string>();
}

Client::Client(EndpointConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(cfg_.base_url, m, url)) {
    throw ConfigError("base URL must look like http://host[:port][/prefix]");
  }
  host_ = m[1];
  std::string prefix = m[2];
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  path_ = prefix + "/chat/completions";
}

std::string Client::post_once(const std::string& body, int& status) const {
  httplib::Client cli(host_);
  const auto secs = std::chrono::duration<double>(cfg_.timeout_seconds);
  const auto us = std::chrono::duration_cast<std::chrono::microseconds>(secs);
  cli.set_connection_timeout(us);
  cli.set_read_timeout(us);
  cli.set_write_timeout(us);
  httplib::Headers headers;
  if (const char* token = std::getenv(cfg_.token_env.c_str()); token && *token) {
    headers.emplace("Authorization", std::string("Bearer ") + token);
  }
  auto res = cli.Post(path_, headers, body, "application/json");
  if (!res) {
    status = 0;
    return httplib::to_string(res.error());
  }
  status = res->status;
  return res->body;
}

std::string Client::chat(const Transcript& messages, const ChatSampling& sampling) const {
  if (messages.empty()) throw std::invalid_argument("chat needs at least one message");
  const std::string body = request_body(cfg_.model, messages, sampling);

  {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return in_flight_ < cfg_.max_in_flight; });
    ++in_flight_;
  }
  struct Release {
    const Client* c;
    ~Release() {
      {
        std::lock_guard lock(c->mu_);
        --c->in_flight_;
      }
      c->cv_.notify_one();
    }
  } release{this};

  thread_local std::mt19937_64 jitter(std::random_device{}());
  std::string last;
  for (int attempt = 0;; ++attempt) {
    int status = 0;
    std::string response = post_once(body, status);
    if (status >= 200 && status < 300) return parse_response(response);
    if (status == 401 || status == 403) {
      throw AuthError("endpoint rejected credentials (HTTP " + std::to_string(status) + ")");
    }
    const bool transient = status == 0 || status == 429 || status >= 500;
    last = status == 0 ? "transport failure: " + response : "HTTP " + std::to_string(status);
    if (!transient) throw TransportError("request failed with " + last);
    if (attempt >= cfg_.max_retries) break;
    const double u = std::uniform_real_distribution<double>(0.0, 0.5)(jitter);
    const double delay = cfg_.backoff_base_seconds * std::ldexp(1.0, attempt) * (1.0 + u);
    std::this_thread::sleep_for(std::chrono::duration<double>(delay));
  }
  throw TransportError("giving up after " + std::to_string(cfg_.max_retries) + " retries: " + last);
}

std::vector<ChatResult> Client::chat_many(const std::vector<Transcript>& jobs,
                                          const ChatSampling& sampling) const {
  std::vector<ChatResult> results(jobs.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        results[i].text = chat(jobs[i], sampling);
      } catch (const Error& e) {
        results[i].error_kind = e.kind();
        results[i].error = e.what();
      } catch (const std::exception& e) {
        results[i].error_kind = "Error";
        results[i].error = e.what();
      }
    }
  };
  const std::size_t n = std::min(cfg_.max_in_flight, jobs.size());
  std::vector<std::jthread> pool;
  for (std::size_t t = 0; t < n; ++t) pool.emplace_back(work);
  pool.clear();
  return results;
}

}  // namespace reflect::llm
