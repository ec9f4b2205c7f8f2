#include "reflect/report/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <set>

#include "reflect/policy/checkpoint.hpp"
#include "reflect/random.hpp"

namespace reflect::report {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

EvalResult greedy_eval(const policy::PolicyParams& params, const std::vector<tasks::Task>& test,
                       const std::string& name, std::size_t max_new_tokens, std::size_t workers) {
  policy::SamplingConfig sc;
  sc.temperature = 0.0;
  sc.max_new_tokens = max_new_tokens;
  const episode::LocalGenerator gen(params, sc);
  EvalConfig ec;
  ec.name = name;
  ec.workers = workers;
  auto r = evaluate(gen, test, episode::Verifier(tasks::TaskKind::Countdown), ec);
  r.episodes.clear();
  return r;
}

}  // namespace

ExperimentConfig default_experiment(std::uint64_t seed) {
  ExperimentConfig c;
  c.seed = seed;
  c.imitation.seed = mix_seed(seed, 10);
  c.imitation.steps = 16000;
  c.imitation.reflection_fraction = 0.3;
  c.imitation.reflection_search_rate = 0.4;
  c.imitation.random_solution = true;
  c.grpo.seed = mix_seed(seed, 20);
  c.grpo.group_size = 8;
  c.grpo.batch_size = 16;
  c.grpo.max_steps = 100;
  c.grpo.lr = 0.07;
  c.grpo.optimizer.kind = policy::OptimizerKind::Sgd;
  c.grpo.optimizer.grad_clip = 1.0;
  c.grpo.max_new_tokens = 64;
  c.grpo.checkpoint_every = 0;
  return c;
}

bool is_held_out(const tasks::Problem& p) {
  auto key = p.numbers;
  std::sort(key.begin(), key.end());
  std::uint64_t h = splitmix64(static_cast<std::uint64_t>(p.target));
  for (const auto v : key) h = splitmix64(h ^ static_cast<std::uint64_t>(v));
  return h % 5 == 0;
}

std::pair<std::vector<tasks::Problem>, std::vector<tasks::Problem>> instance_split(
    const tasks::CountdownConfig& cfg, std::size_t draws, std::uint64_t seed) {
  std::set<std::pair<std::vector<std::int64_t>, std::int64_t>> seen;
  std::vector<tasks::Problem> train, test;
  for (std::size_t i = 0; i < draws; ++i) {
    auto p = tasks::generate_countdown(mix_seed(seed, i), cfg);
    auto key = p.numbers;
    std::sort(key.begin(), key.end());
    if (!seen.emplace(key, p.target).second) continue;
    (is_held_out(p) ? test : train).push_back(std::move(p));
  }
  return {std::move(train), std::move(test)};
}

ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                const std::function<void(const std::string&)>& log) {
  auto say = [&](const std::string& s) {
    if (log) log(s);
  };
  ExperimentResult r;
  // The instance pool is shared by every seed; the seed picks the test
  // sample, the initial weights and all sampling.
  auto [train_pool, test_pool] = instance_split(cfg.countdown, cfg.instance_draws, 12345);
  Rng rng(mix_seed(cfg.seed, 1));
  shuffle(test_pool, rng);
  shuffle(train_pool, rng);
  if (test_pool.size() > cfg.test_size) test_pool.resize(cfg.test_size);
  std::vector<tasks::Task> test(test_pool.begin(), test_pool.end());
  say("instances: " + std::to_string(train_pool.size()) + " train, " + std::to_string(test.size()) + " test");

  auto t0 = std::chrono::steady_clock::now();
  auto params = cfg.pretrained.empty()
                    ? policy::PolicyParams::random(cfg.model, policy::Vocab::mini_countdown(), mix_seed(cfg.seed, 2))
                    : policy::load_checkpoint(cfg.pretrained);
  if (cfg.pretrained.empty()) {
    grpo::imitation_pretrain(params, train_pool, cfg.imitation, [&](std::size_t step, double loss) {
      if (step % 250 == 0) say("pretrain step " + std::to_string(step) + " loss " + std::to_string(loss));
    });
  }
  r.pretrain_seconds = seconds_since(t0);
  {
    const auto e = greedy_eval(params, test, "pretrained", cfg.grpo.max_new_tokens, cfg.workers);
    r.baseline = e.row;
    r.baseline_errors = e.breakdown;
  }
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    policy::save_checkpoint(cfg.out_dir / "pretrained.ckpt", params);
  }
  say("baseline first " + std::to_string(r.baseline.first.accuracy()) + " second " +
      std::to_string(r.baseline.second.accuracy()));

  policy::SamplingConfig hot;
  hot.temperature = 1.0;
  hot.max_new_tokens = cfg.grpo.max_new_tokens;
  const episode::LocalGenerator sampler(params, hot);
  std::vector<tasks::Task> harvest(train_pool.begin(),
                                   train_pool.begin() + static_cast<long>(std::min(cfg.failure_tasks, train_pool.size())));
  episode::BuildConfig bc;
  bc.k = cfg.failure_k;
  bc.seed = mix_seed(cfg.seed, 3);
  bc.workers = cfg.workers;
  const auto failures = episode::build_failures(sampler, harvest, episode::Verifier(tasks::TaskKind::Countdown), bc);
  r.failures = failures.records.size();
  say("failures: " + std::to_string(r.failures));
  if (failures.records.empty()) throw std::runtime_error("no failures to train on");

  t0 = std::chrono::steady_clock::now();
  auto gcfg = cfg.grpo;
  gcfg.workers = cfg.workers;
  policy::Optimizer opt(gcfg.optimizer, params.data().size());
  const auto reference = params;
  for (std::size_t step = 1; step <= gcfg.max_steps; ++step) {
    const auto idx = grpo::batch_indices(failures.records.size(), gcfg.batch_size, gcfg.seed, step);
    std::vector<episode::FailureRecord> batch;
    for (const auto i : idx) batch.push_back(failures.records[i]);
    const auto m = grpo::train_step(params, reference, batch, gcfg, step, opt);
    r.log.push_back(m);
    if (cfg.eval_every && step % cfg.eval_every == 0 && step < gcfg.max_steps) {
      const auto row = greedy_eval(params, test, "step", cfg.grpo.max_new_tokens, cfg.workers).row;
      say("step " + std::to_string(step) + " held-out first " + std::to_string(row.first.accuracy()) + " second " +
          std::to_string(row.second.accuracy()));
    }
    if (step % 20 == 0) {
      say("step " + std::to_string(step) + " reward " + std::to_string(m.mean_reward) + " degenerate " +
          std::to_string(m.frac_degenerate) + " kl " + std::to_string(m.mean_kl) + " grad " +
          std::to_string(m.grad_norm));
    }
  }
  r.steps = gcfg.max_steps;
  if (!cfg.out_dir.empty()) policy::save_checkpoint(cfg.out_dir / "trained.ckpt", params);
  r.train_seconds = seconds_since(t0);
  {
    const auto e = greedy_eval(params, test, "trained", cfg.grpo.max_new_tokens, cfg.workers);
    r.trained = e.row;
    r.trained_errors = e.breakdown;
  }
  say("trained first " + std::to_string(r.trained.first.accuracy()) + " second " +
      std::to_string(r.trained.second.accuracy()));
  return r;
}

}  // namespace reflect::report
