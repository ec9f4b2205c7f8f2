#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "reflect/episode/generator.hpp"
#include "reflect/policy/model.hpp"
#include "reflect/tasks/prompts.hpp"
#include "reflect/verifiers/outcome.hpp"

namespace reflect::episode {

using verifiers::VerifierOutcome;

// Dispatches to the Countdown or tool-call checker.
class Verifier {
 public:
  explicit Verifier(tasks::TaskKind kind) : kind_(kind) {}

  tasks::TaskKind kind() const { return kind_; }
  // Throws ConfigError if the task is of another kind.
  VerifierOutcome operator()(const tasks::Task& task, std::string_view output) const;

 private:
  tasks::TaskKind kind_;
};

struct EpisodeConfig {
  tasks::PromptTemplate prompts = tasks::countdown_template();
  std::uint64_t seed = 0;
};

struct Episode {
  tasks::Task task;
  llm::Transcript transcript;
  std::string attempt1;
  VerifierOutcome outcome1;
  std::optional<std::string> reflection;
  // Training sequence (context + reflection tokens) and the reflection's
  // position in it. Empty for generators that do not expose tokens.
  std::vector<TokenId> sequence;
  policy::Span reflection_span;
  std::optional<std::string> attempt2;
  std::optional<VerifierOutcome> outcome2;
  std::optional<int> reward;  // unset when the first attempt succeeded
};

struct FailureRecord {
  tasks::Task task;
  std::string attempt;
  verifiers::Category category = verifiers::Category::FormatError;
  std::uint64_t seed = 0;
  double temperature = 0.0;
  std::string generator;
};

// First attempt, then on failure one reflection and one retry.
Episode run_episode(const Generator& gen, const tasks::Task& task, const Verifier& verifier,
                    const EpisodeConfig& cfg);

// Same protocol, but the first attempt is the stored failure.
Episode run_episode_from_failure(const Generator& gen, const FailureRecord& rec,
                                 const Verifier& verifier, const EpisodeConfig& cfg);

struct BuildConfig {
  std::size_t k = 8;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  tasks::PromptTemplate prompts = tasks::countdown_template();
};

struct BuildResult {
  std::vector<FailureRecord> records;  // task order, then attempt order
  std::vector<std::string> skipped;    // one message per task lost to a GeneratorError
};

// Samples k first attempts per task and keeps the failed ones. The seed of
// attempt j of task i depends only on (cfg.seed, i, j).
BuildResult build_failures(const Generator& gen, const std::vector<tasks::Task>& tasks,
                           const Verifier& verifier, const BuildConfig& cfg);

std::uint64_t attempt_seed(std::uint64_t seed, std::size_t task, std::size_t attempt);

// Why the episode breaks the two-attempt protocol, if it does.
std::optional<std::string> protocol_violation(const Episode& ep, const Verifier& verifier,
                                              const tasks::PromptTemplate& prompts);

}  // namespace reflect::episode
