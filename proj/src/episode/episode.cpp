#include "reflect/episode/episode.hpp"

#include <atomic>
#include <thread>

#include "reflect/random.hpp"
#include "reflect/verifiers/countdown.hpp"
#include "reflect/verifiers/toolcall.hpp"

namespace reflect::episode {

using tasks::Stage;

VerifierOutcome Verifier::operator()(const tasks::Task& task, std::string_view output) const {
  if (tasks::kind_of(task) != kind_) {
    throw ConfigError(std::string("verifier for ") + std::string(tasks::to_string(kind_)) +
                      " given a " + std::string(tasks::to_string(tasks::kind_of(task))) + " task");
  }
  if (const auto* p = std::get_if<tasks::Problem>(&task)) {
    return verifiers::verify_countdown(p->numbers, p->target, output);
  }
  return verifiers::verify_toolcall(std::get<tasks::ToolTask>(task).expected, output);
}

namespace {

Completion call(const Generator& gen, const llm::Transcript& transcript, std::uint64_t seed) {
  try {
    return gen.complete(transcript, seed);
  } catch (const GeneratorError&) {
    throw;
  } catch (const std::exception& e) {
    throw GeneratorError(gen.id() + ": " + e.what(), transcript);
  }
}

// Reflection and retry on top of a transcript ending in a failed attempt.
void reflect_and_retry(const Generator& gen, Episode& ep, const Verifier& verifier,
                       const EpisodeConfig& cfg) {
  ep.transcript = tasks::render_messages(cfg.prompts, ep.task, Stage::Reflection, ep.transcript);
  const Completion r = call(gen, ep.transcript, mix_seed(cfg.seed, 2));
  ep.reflection = r.text;
  if (!r.tokens.empty()) {
    ep.sequence = r.prompt_tokens;
    ep.sequence.insert(ep.sequence.end(), r.tokens.begin(), r.tokens.end());
    ep.reflection_span = {r.prompt_tokens.size(), ep.sequence.size()};
  }
  ep.transcript.push_back({llm::Role::Assistant, r.text});

  ep.transcript = tasks::render_messages(cfg.prompts, ep.task, Stage::Retry, ep.transcript);
  const Completion a = call(gen, ep.transcript, mix_seed(cfg.seed, 3));
  ep.attempt2 = a.text;
  ep.transcript.push_back({llm::Role::Assistant, a.text});
  ep.outcome2 = verifier(ep.task, a.text);
  ep.reward = ep.outcome2->success ? 1 : 0;
}

}  // namespace

Episode run_episode(const Generator& gen, const tasks::Task& task, const Verifier& verifier,
                    const EpisodeConfig& cfg) {
  if (tasks::kind_of(task) != verifier.kind() || cfg.prompts.kind != verifier.kind()) {
    throw ConfigError("task, template and verifier kinds differ");
  }
  Episode ep;
  ep.task = task;
  ep.transcript = tasks::render_messages(cfg.prompts, task, Stage::FirstAttempt, {});
  const Completion c = call(gen, ep.transcript, mix_seed(cfg.seed, 1));
  ep.attempt1 = c.text;
  ep.transcript.push_back({llm::Role::Assistant, c.text});
  ep.outcome1 = verifier(task, c.text);
  if (ep.outcome1.success) return ep;
  reflect_and_retry(gen, ep, verifier, cfg);
  return ep;
}

Episode run_episode_from_failure(const Generator& gen, const FailureRecord& rec,
                                 const Verifier& verifier, const EpisodeConfig& cfg) {
  if (tasks::kind_of(rec.task) != verifier.kind() || cfg.prompts.kind != verifier.kind()) {
    throw ConfigError("record, template and verifier kinds differ");
  }
  Episode ep;
  ep.task = rec.task;
  ep.transcript = tasks::render_messages(cfg.prompts, rec.task, Stage::FirstAttempt, {});
  ep.attempt1 = rec.attempt;
  ep.transcript.push_back({llm::Role::Assistant, rec.attempt});
  ep.outcome1 = verifier(rec.task, rec.attempt);
  if (ep.outcome1.success) throw ValidationError(0, "stored attempt verifies as Success");
  reflect_and_retry(gen, ep, verifier, cfg);
  return ep;
}

std::uint64_t attempt_seed(std::uint64_t seed, std::size_t task, std::size_t attempt) {
  return mix_seed(mix_seed(seed, task), attempt);
}

BuildResult build_failures(const Generator& gen, const std::vector<tasks::Task>& tasks,
                           const Verifier& verifier, const BuildConfig& cfg) {
  if (cfg.k < 1) throw ConfigError("k must be >= 1");
  struct PerTask {
    std::vector<FailureRecord> records;
    std::optional<std::string> error;
  };
  std::vector<PerTask> out(tasks.size());

  auto run_task = [&](std::size_t i) {
    const auto& task = tasks[i];
    auto transcript = tasks::render_messages(cfg.prompts, task, Stage::FirstAttempt, {});
    try {
      for (std::size_t j = 0; j < cfg.k; ++j) {
        const std::uint64_t seed = attempt_seed(cfg.seed, i, j);
        const Completion c = call(gen, transcript, mix_seed(seed, 1));
        const auto outcome = verifier(task, c.text);
        if (outcome.success) continue;
        out[i].records.push_back({task, c.text, outcome.category, seed, gen.temperature(), gen.id()});
      }
    } catch (const GeneratorError& e) {
      out[i].records.clear();
      out[i].error = "task " + std::to_string(i) + ": " + e.what();
    }
  };

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) run_task(i);
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(cfg.workers, tasks.size()));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
  }

  BuildResult result;
  for (auto& t : out) {
    for (auto& r : t.records) result.records.push_back(std::move(r));
    if (t.error) result.skipped.push_back(*t.error);
  }
  return result;
}

std::optional<std::string> protocol_violation(const Episode& ep, const Verifier& verifier,
                                              const tasks::PromptTemplate& prompts) {
  if (verifier(ep.task, ep.attempt1) != ep.outcome1) return "attempt1 outcome does not re-verify";
  auto expected = tasks::render_messages(prompts, ep.task, Stage::FirstAttempt, {});
  expected.push_back({llm::Role::Assistant, ep.attempt1});
  if (ep.outcome1.success) {
    if (ep.reflection || ep.attempt2 || ep.outcome2 || ep.reward) return "successful first attempt must stop";
    if (ep.transcript != expected) return "transcript does not match the protocol";
    return std::nullopt;
  }
  if (!ep.reflection || !ep.attempt2 || !ep.outcome2 || !ep.reward) return "failed first attempt needs a retry";
  if (verifier(ep.task, *ep.attempt2) != *ep.outcome2) return "attempt2 outcome does not re-verify";
  if (*ep.reward != (ep.outcome2->success ? 1 : 0)) return "reward disagrees with attempt2";
  expected = tasks::render_messages(prompts, ep.task, Stage::Reflection, expected);
  expected.push_back({llm::Role::Assistant, *ep.reflection});
  expected = tasks::render_messages(prompts, ep.task, Stage::Retry, expected);
  expected.push_back({llm::Role::Assistant, *ep.attempt2});
  if (ep.transcript != expected) return "transcript does not match the protocol";
  if (!ep.sequence.empty()) {
    const auto& s = ep.reflection_span;
    if (s.empty() || s.begin < 2 || s.end != ep.sequence.size()) return "reflection span out of place";
  }
  return std::nullopt;
}

}  // namespace reflect::episode
