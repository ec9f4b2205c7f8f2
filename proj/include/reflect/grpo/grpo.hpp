#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "reflect/episode/episode.hpp"
#include "reflect/policy/model.hpp"
#include "reflect/policy/optimizer.hpp"

namespace reflect::grpo {

using policy::PolicyParams;
using policy::Span;

struct GrpoConfig {
  std::size_t group_size = 8;
  double clip = 0.2;
  double beta = 0.001;
  double lr = 5e-7;
  double warmup_ratio = 0.03;
  std::size_t batch_size = 256;
  std::size_t max_steps = 1750;
  double eps_std = 1e-4;
  std::size_t inner_iters = 1;
  std::size_t resample_budget = 0;  // extra rollouts for a degenerate group
  bool regenerate_first_attempt = false;  // sample attempt 1 afresh instead of replaying the record
  double temperature = 1.0;
  std::size_t max_new_tokens = 32;  // per reflection and per retry
  std::string prompts = "countdown";
  policy::OptimizerConfig optimizer;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::size_t checkpoint_every = 100;
  std::size_t eval_every = 0;  // 0 disables periodic evaluation
  std::size_t patience = 0;    // evaluations without improvement before stopping; 0 disables

  void validate() const;  // throws ConfigError
};

// "key = value" lines, '#' starts a comment. Unknown keys are errors.
GrpoConfig parse_config(const std::string& text, GrpoConfig base = {});
GrpoConfig load_config(const std::filesystem::path& path, GrpoConfig base = {});
std::string format_config(const GrpoConfig& cfg);

struct Advantages {
  std::vector<double> values;
  bool degenerate = false;
};

// (r - mean) / (sample std + eps_std); all zero when every reward is equal.
Advantages compute_advantages(std::span<const double> rewards, double eps_std);

// `advantage` on the span, zero elsewhere. Throws SpanError.
std::vector<double> mask_advantages(double advantage, Span span, std::size_t length);

// exp(ref - cur) - (ref - cur) - 1 per token.
std::vector<double> kl_per_token(std::span<const double> current, std::span<const double> reference);

struct LossResult {
  double loss = 0.0;
  std::vector<double> dloss_dnew;  // per scored token
  double mean_kl = 0.0;
};

// Clipped surrogate with KL penalty over scored tokens, normalised by their
// count. All arrays are aligned; throws AlignmentError otherwise.
LossResult surrogate_loss(std::span<const double> new_lp, std::span<const double> old_lp,
                          std::span<const double> ref_lp, std::span<const double> adv,
                          const GrpoConfig& cfg);

// Gathers the span positions of full-sequence arrays, so positions outside
// `spans` are never read.
std::vector<double> gather(std::span<const double> full, std::span<const Span> spans);

// Linear warmup over ceil(warmup_ratio * max_steps) steps, then cosine decay
// to zero at max_steps. Throws RangeError outside [0, max_steps].
double lr_at(std::size_t step, const GrpoConfig& cfg);

struct StepMetrics {
  std::size_t step = 0;
  double lr = 0.0;
  double mean_reward = 0.0;
  double frac_degenerate = 0.0;
  double mean_kl = 0.0;
  double loss = 0.0;
  double grad_norm = 0.0;
};

// G sampled reflections for one failure, sharing the failure context.
struct GroupMember {
  std::vector<policy::TokenId> sequence;  // context + reflection
  Span span;                              // reflection tokens
  double reward = 0.0;
};

struct GroupRollout {
  std::vector<GroupMember> members;
  Advantages adv;
};

// Samples cfg.group_size reflections and retries from the current policy.
// With regenerate_first_attempt the group shares one fresh first attempt;
// if that attempt succeeds the group has no members and is degenerate.
GroupRollout rollout_group(const PolicyParams& params, const episode::FailureRecord& rec,
                           const GrpoConfig& cfg, std::uint64_t seed);

// Policy update from already sampled groups. Degenerate groups are skipped;
// losses are averaged over groups.size(). Fills loss, KL and gradient-norm
// metrics.
StepMetrics update_from_groups(PolicyParams& params, const PolicyParams& reference,
                               const std::vector<GroupRollout>& groups, const GrpoConfig& cfg,
                               std::size_t step, policy::Optimizer& optimizer);

// One optimisation step on `params`. Rollouts sample G reflections per
// record from the current policy. On error params and optimizer are left
// untouched.
StepMetrics train_step(PolicyParams& params, const PolicyParams& reference,
                       std::span<const episode::FailureRecord> batch, const GrpoConfig& cfg,
                       std::size_t step, policy::Optimizer& optimizer);

// Record indices of the batch for a 1-based step: consecutive slices of
// per-epoch seeded permutations.
std::vector<std::size_t> batch_indices(std::size_t dataset_size, std::size_t batch_size,
                                       std::uint64_t seed, std::size_t step);

struct TrainCallbacks {
  // Returns the score to maximise (second-try accuracy).
  std::function<double(const PolicyParams&, std::size_t step)> evaluate;
  std::function<void(const StepMetrics&)> on_step;
};

struct TrainResult {
  PolicyParams params;
  std::size_t steps_done = 0;
  bool stopped_early = false;
  std::vector<StepMetrics> log;
};

// Writes step_NNNNNN.ckpt (+ .opt) every checkpoint_every steps and at the
// end, and appends StepMetrics lines to train_log.jsonl in out_dir. If
// out_dir already holds a run, training resumes from its last checkpoint.
TrainResult train(const PolicyParams& initial, const std::vector<episode::FailureRecord>& data,
                  const GrpoConfig& cfg, const std::filesystem::path& out_dir,
                  const TrainCallbacks& callbacks = {});

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::size_t step);

}  // namespace reflect::grpo
