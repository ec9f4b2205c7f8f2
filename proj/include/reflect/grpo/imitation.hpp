#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "reflect/policy/model.hpp"
#include "reflect/policy/optimizer.hpp"
#include "reflect/random.hpp"
#include "reflect/tasks/countdown.hpp"

namespace reflect::grpo {

// A token sequence with per-position loss weights (weight[t] applies to
// predicting token t; position 0 is never scored).
struct WeightedSequence {
  std::vector<policy::TokenId> tokens;
  std::vector<double> weights;
};

// <prompt> \boxed{solution} <eos>, scored on the answer.
WeightedSequence first_attempt_example(const policy::Vocab& vocab, const tasks::Problem& p,
                                       const std::string& answer);

// Failed attempt, reflection, then a retry; scored on the reflection and
// the retry answer only.
WeightedSequence reflection_example(const policy::Vocab& vocab, const tasks::Problem& p,
                                    const std::string& failed, const std::string& reflection,
                                    const std::string& retry);

struct ImitationConfig {
  std::size_t steps = 2000;
  std::size_t batch_size = 32;
  double lr = 3e-3;
  double warmup_ratio = 0.03;
  double reflection_fraction = 0.5;
  double reflection_search_rate = 0.25;  // share of reflections that go on past the restated answer
  std::size_t max_wrong_candidates = 2;   // wrong expressions tried before the solution in such a reflection
  bool permute_numbers = true;     // present each instance in a random number order
  bool random_solution = false;    // any solving expression instead of the solver's first
  policy::OptimizerConfig optimizer{policy::OptimizerKind::Adam, 0.9, 0.999, 1e-8, 1.0};
  std::uint64_t seed = 0;
};

struct ImitationExample {
  tasks::Problem problem;  // numbers possibly permuted
  std::string failed;      // reflection examples only
  std::optional<std::string> reflection;
  std::string answer;      // first attempt, or the retry after a reflection
};

// Behaviour cloning on solver outputs. First-attempt examples teach a
// solution; reflection examples pair a wrong first answer with a worked
// reflection and a retry that boxes the last expression of the reflection.
// A reflection works expressions out one operation at a time on values:
// restating 3*(8-1) reads "8-1=7,3*7=21". Most reflections only restate the
// wrong answer with its value; a reflection_search_rate share goes on to
// up to max_wrong_candidates other wrong expressions and then a solution.
ImitationExample draw_example(const tasks::Problem& problem, const ImitationConfig& cfg, Rng& rng);

// Returns the mean token loss of each step.
std::vector<double> imitation_pretrain(
    policy::PolicyParams& params, const std::vector<tasks::Problem>& problems,
    const ImitationConfig& cfg,
    const std::function<void(std::size_t step, double loss)>& on_step = {});

// Token loss and gradient of one weighted sequence, added into grad.
double weighted_nll(const policy::PolicyParams& params, const WeightedSequence& seq,
                    std::vector<double>& grad, double scale);

}  // namespace reflect::grpo
