#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "reflect/grpo/grpo.hpp"
#include "reflect/grpo/imitation.hpp"
#include "reflect/report/report.hpp"
#include "reflect/tasks/countdown.hpp"

namespace reflect::report {

// Mini-Countdown learning run: imitation pretraining, failure harvesting on
// training instances, reflection-only GRPO, greedy evaluation on held-out
// instances before and after.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  policy::ModelConfig model{3, 96, 4, 160, 4};
  tasks::CountdownConfig countdown;
  std::size_t instance_draws = 20000;  // generator seeds tried when building the instance pool
  std::size_t test_size = 300;
  std::size_t failure_tasks = 400;
  std::size_t failure_k = 8;
  grpo::ImitationConfig imitation;
  grpo::GrpoConfig grpo;
  std::size_t eval_every = 0;  // held-out evaluation during GRPO, logged only
  std::filesystem::path out_dir;  // when set, pretrained.ckpt and trained.ckpt are written here
  std::filesystem::path pretrained;  // start from this checkpoint instead of pretraining
  std::size_t workers = 1;
};

ExperimentConfig default_experiment(std::uint64_t seed);

struct ExperimentResult {
  GridRow baseline;
  GridRow trained;
  ErrorBreakdown baseline_errors;
  ErrorBreakdown trained_errors;
  std::size_t failures = 0;
  std::size_t steps = 0;
  double pretrain_seconds = 0.0;
  double train_seconds = 0.0;
  std::vector<grpo::StepMetrics> log;
};

// True for instances in the held-out partition (keyed on the sorted
// numbers and the target, so duplicates never straddle the split).
bool is_held_out(const tasks::Problem& p);

// Distinct solvable instances, split into (train, test).
std::pair<std::vector<tasks::Problem>, std::vector<tasks::Problem>> instance_split(
    const tasks::CountdownConfig& cfg, std::size_t draws, std::uint64_t seed);

ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                const std::function<void(const std::string&)>& log = {});

}  // namespace reflect::report
