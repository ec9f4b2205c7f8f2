#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "reflect/error.hpp"
#include "reflect/llm/chat_message.hpp"
#include "reflect/llm/client.hpp"
#include "reflect/policy/sampler.hpp"

namespace reflect::episode {

using policy::TokenId;

struct Completion {
  std::string text;
  // Filled only by generators that work on token ids: the encoded prompt
  // and the sampled continuation (including the stop token).
  std::vector<TokenId> prompt_tokens;
  std::vector<TokenId> tokens;
};

class Generator {
 public:
  virtual ~Generator() = default;

  // Must be safe to call concurrently.
  virtual Completion complete(const llm::Transcript& messages, std::uint64_t seed) const = 0;
  virtual bool provides_tokens() const { return false; }
  virtual std::string id() const = 0;
  virtual double temperature() const = 0;
};

class GeneratorError : public Error {
 public:
  GeneratorError(const std::string& message, llm::Transcript partial)
      : Error("GeneratorError", message), partial_(std::move(partial)) {}

  const llm::Transcript& partial_transcript() const noexcept { return partial_; }

 private:
  llm::Transcript partial_;
};

// Maps Countdown conversations onto the mini vocabulary:
//   <bos> (<user> a,b,c=t | <reflect> | <assistant> text <eos>)* <assistant>
// The system message and the fixed prompt wording are implied by the
// markers, so only the numbers, the target and model text are spelled out.
class MiniChatCodec {
 public:
  explicit MiniChatCodec(const policy::Vocab& vocab);

  // Tokens that prompt the next assistant turn. Throws VocabError for
  // messages that are not part of the mini Countdown protocol.
  std::vector<TokenId> encode_prompt(const llm::Transcript& messages) const;

  std::vector<TokenId> encode_problem(const std::vector<std::int64_t>& numbers,
                                      std::int64_t target) const;

 private:
  const policy::Vocab* vocab_;
};

// Samples from the local policy. Holds a reference to params, which must
// outlive the generator.
class LocalGenerator : public Generator {
 public:
  LocalGenerator(const policy::PolicyParams& params, policy::SamplingConfig sampling,
                 std::string id = "local");

  Completion complete(const llm::Transcript& messages, std::uint64_t seed) const override;
  bool provides_tokens() const override { return true; }
  std::string id() const override { return id_; }
  double temperature() const override { return sampling_.temperature; }

  const policy::PolicyParams& params() const { return *params_; }

 private:
  const policy::PolicyParams* params_;
  policy::SamplingConfig sampling_;
  MiniChatCodec codec_;
  std::string id_;
};

class RemoteGenerator : public Generator {
 public:
  RemoteGenerator(std::shared_ptr<const llm::Client> client, llm::ChatSampling sampling);

  Completion complete(const llm::Transcript& messages, std::uint64_t seed) const override;
  std::string id() const override;
  double temperature() const override { return sampling_.temperature; }

 private:
  std::shared_ptr<const llm::Client> client_;
  llm::ChatSampling sampling_;
};

// Answers from a function of the transcript and seed; for tests and dry runs.
class ScriptedGenerator : public Generator {
 public:
  using Script = std::function<std::string(const llm::Transcript&, std::uint64_t)>;

  explicit ScriptedGenerator(Script script, std::string id = "scripted", double temperature = 0.0);

  Completion complete(const llm::Transcript& messages, std::uint64_t seed) const override;
  std::string id() const override { return id_; }
  double temperature() const override { return temperature_; }

 private:
  Script script_;
  std::string id_;
  double temperature_;
};

}  // namespace reflect::episode
