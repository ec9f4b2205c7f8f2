#include "reflect/grpo/grpo.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "reflect/error.hpp"
#include "reflect/policy/checkpoint.hpp"
#include "reflect/random.hpp"

namespace reflect::grpo {

void GrpoConfig::validate() const {
  if (group_size < 2) throw ConfigError("group_size must be >= 2");
  if (!(clip > 0.0 && clip < 1.0)) throw ConfigError("clip must lie in (0, 1)");
  if (!(beta >= 0.0)) throw ConfigError("beta must be >= 0");
  if (!(lr >= 0.0)) throw ConfigError("lr must be >= 0");
  if (!(warmup_ratio >= 0.0 && warmup_ratio < 1.0)) throw ConfigError("warmup_ratio must lie in [0, 1)");
  if (!(eps_std >= 0.0)) throw ConfigError("eps_std must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (inner_iters < 1) throw ConfigError("inner_iters must be >= 1");
  if (!(temperature >= 0.0)) throw ConfigError("temperature must be >= 0");
  if (max_new_tokens < 1) throw ConfigError("max_new_tokens must be >= 1");
}

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  T out{};
  in >> out;
  if (!in || !(in >> std::ws).eof()) throw ConfigError("bad value for " + key + ": '" + value + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("bad value for " + key + ": '" + value + "' (expected true or false)");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

GrpoConfig parse_config(const std::string& text, GrpoConfig cfg) {
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(n) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto size = [&] { return parse_number<std::size_t>(key, value); };
    auto real = [&] { return parse_number<double>(key, value); };
    if (key == "group_size") cfg.group_size = size();
    else if (key == "clip") cfg.clip = real();
    else if (key == "beta") cfg.beta = real();
    else if (key == "lr") cfg.lr = real();
    else if (key == "warmup_ratio") cfg.warmup_ratio = real();
    else if (key == "batch_size") cfg.batch_size = size();
    else if (key == "max_steps") cfg.max_steps = size();
    else if (key == "eps_std") cfg.eps_std = real();
    else if (key == "inner_iters") cfg.inner_iters = size();
    else if (key == "resample_budget") cfg.resample_budget = size();
    else if (key == "regenerate_first_attempt") cfg.regenerate_first_attempt = parse_bool(key, value);
    else if (key == "temperature") cfg.temperature = real();
    else if (key == "max_new_tokens") cfg.max_new_tokens = size();
    else if (key == "prompts") cfg.prompts = value;
    else if (key == "optimizer") cfg.optimizer.kind = policy::optimizer_from_string(value);
    else if (key == "adam_beta1") cfg.optimizer.beta1 = real();
    else if (key == "adam_beta2") cfg.optimizer.beta2 = real();
    else if (key == "adam_eps") cfg.optimizer.eps = real();
    else if (key == "grad_clip") cfg.optimizer.grad_clip = real();
    else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "workers") cfg.workers = size();
    else if (key == "checkpoint_every") cfg.checkpoint_every = size();
    else if (key == "eval_every") cfg.eval_every = size();
    else if (key == "patience") cfg.patience = size();
    else throw ConfigError("line " + std::to_string(n) + ": unknown key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

GrpoConfig load_config(const std::filesystem::path& path, GrpoConfig base) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string format_config(const GrpoConfig& c) {
  std::ostringstream out;
  out.precision(17);
  out << "group_size = " << c.group_size << "\nclip = " << c.clip << "\nbeta = " << c.beta
      << "\nlr = " << c.lr << "\nwarmup_ratio = " << c.warmup_ratio << "\nbatch_size = " << c.batch_size
      << "\nmax_steps = " << c.max_steps << "\neps_std = " << c.eps_std
      << "\ninner_iters = " << c.inner_iters << "\nresample_budget = " << c.resample_budget
      << "\nregenerate_first_attempt = " << (c.regenerate_first_attempt ? "true" : "false")
      << "\ntemperature = " << c.temperature << "\nmax_new_tokens = " << c.max_new_tokens
      << "\nprompts = " << c.prompts << "\noptimizer = " << policy::to_string(c.optimizer.kind)
      << "\nadam_beta1 = " << c.optimizer.beta1 << "\nadam_beta2 = " << c.optimizer.beta2
      << "\nadam_eps = " << c.optimizer.eps << "\ngrad_clip = " << c.optimizer.grad_clip
      << "\nseed = " << c.seed << "\nworkers = " << c.workers
      << "\ncheckpoint_every = " << c.checkpoint_every << "\neval_every = " << c.eval_every
      << "\npatience = " << c.patience << "\n";
  return out.str();
}

Advantages compute_advantages(std::span<const double> rewards, double eps_std) {
  Advantages a;
  a.values.assign(rewards.size(), 0.0);
  if (rewards.size() < 2) throw std::invalid_argument("a group needs at least two rewards");
  if (std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards[0]; })) {
    a.degenerate = true;
    return a;
  }
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (const double r : rewards) mean += r;
  mean /= n;
  double ss = 0.0;
  for (const double r : rewards) ss += (r - mean) * (r - mean);
  const double denom = std::sqrt(ss / (n - 1.0)) + eps_std;
  for (std::size_t i = 0; i < rewards.size(); ++i) a.values[i] = (rewards[i] - mean) / denom;
  return a;
}

std::vector<double> mask_advantages(double advantage, Span span, std::size_t length) {
  if (span.begin > span.end || span.end > length) {
    throw SpanError("span [" + std::to_string(span.begin) + ", " + std::to_string(span.end) +
                    ") outside sequence of length " + std::to_string(length));
  }
  std::vector<double> out(length, 0.0);
  std::fill(out.begin() + static_cast<long>(span.begin), out.begin() + static_cast<long>(span.end), advantage);
  return out;
}

std::vector<double> kl_per_token(std::span<const double> current, std::span<const double> reference) {
  if (current.size() != reference.size()) throw AlignmentError("KL inputs differ in length");
  std::vector<double> out(current.size());
  for (std::size_t i = 0; i < current.size(); ++i) {
    const double d = reference[i] - current[i];
    out[i] = std::expm1(d) - d;
  }
  return out;
}

LossResult surrogate_loss(std::span<const double> new_lp, std::span<const double> old_lp,
                          std::span<const double> ref_lp, std::span<const double> adv,
                          const GrpoConfig& cfg) {
  const std::size_t n = new_lp.size();
  if (old_lp.size() != n || ref_lp.size() != n || adv.size() != n) {
    throw AlignmentError("surrogate inputs differ in length");
  }
  LossResult r;
  r.dloss_dnew.assign(n, 0.0);
  if (n == 0) return r;
  const auto kl = kl_per_token(new_lp, ref_lp);
  const double inv = 1.0 / static_cast<double>(n);
  double total = 0.0, kl_sum = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double rho = std::exp(new_lp[t] - old_lp[t]);
    const double a = adv[t];
    const double clipped = std::clamp(rho, 1.0 - cfg.clip, 1.0 + cfg.clip);
    double surrogate, dsur;
    if (rho * a <= clipped * a) {
      surrogate = rho * a;
      dsur = rho * a;
    } else {
      surrogate = clipped * a;
      dsur = (rho > 1.0 - cfg.clip && rho < 1.0 + cfg.clip) ? rho * a : 0.0;
    }
    total += surrogate - cfg.beta * kl[t];
    kl_sum += kl[t];
    // dk/dnew = 1 - exp(ref - new)
    const double dkl = -std::expm1(ref_lp[t] - new_lp[t]);
    r.dloss_dnew[t] = -inv * (dsur - cfg.beta * dkl);
  }
  r.loss = -inv * total;
  r.mean_kl = kl_sum * inv;
  return r;
}

std::vector<double> gather(std::span<const double> full, std::span<const Span> spans) {
  std::vector<double> out;
  for (const auto& s : spans) {
    if (s.begin > s.end || s.end > full.size()) throw SpanError("span outside array");
    out.insert(out.end(), full.begin() + static_cast<long>(s.begin), full.begin() + static_cast<long>(s.end));
  }
  return out;
}

double lr_at(std::size_t step, const GrpoConfig& cfg) {
  if (step > cfg.max_steps) {
    throw RangeError("step " + std::to_string(step) + " beyond max_steps " + std::to_string(cfg.max_steps));
  }
  const auto warmup = static_cast<std::size_t>(std::ceil(cfg.warmup_ratio * static_cast<double>(cfg.max_steps)));
  if (step < warmup) return cfg.lr * static_cast<double>(step) / static_cast<double>(warmup);
  if (cfg.max_steps == warmup) return cfg.lr;
  const double progress = static_cast<double>(step - warmup) / static_cast<double>(cfg.max_steps - warmup);
  if (progress >= 1.0) return 0.0;
  return cfg.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

GroupRollout rollout_group(const PolicyParams& params, const episode::FailureRecord& rec,
                           const GrpoConfig& cfg, std::uint64_t seed) {
  policy::SamplingConfig sc;
  sc.temperature = cfg.temperature;
  sc.max_new_tokens = cfg.max_new_tokens;
  const episode::LocalGenerator gen(params, sc);
  const episode::Verifier verifier(tasks::kind_of(rec.task));
  episode::EpisodeConfig ecfg;
  ecfg.prompts = tasks::template_by_name(cfg.prompts);

  GroupRollout g;
  episode::FailureRecord replay = rec;
  if (cfg.regenerate_first_attempt) {
    const auto first = tasks::render_messages(ecfg.prompts, rec.task, tasks::Stage::FirstAttempt, {});
    replay.seed = mix_seed(seed, 0xf1);
    replay.attempt = gen.complete(first, replay.seed).text;
    const auto outcome = verifier(rec.task, replay.attempt);
    if (outcome.success) {
      g.adv.degenerate = true;
      return g;
    }
    replay.category = outcome.category;
  }
  for (std::size_t round = 0; round <= cfg.resample_budget; ++round) {
    g.members.clear();
    std::vector<double> rewards;
    for (std::size_t i = 0; i < cfg.group_size; ++i) {
      ecfg.seed = mix_seed(mix_seed(seed, round), i);
      const auto ep = episode::run_episode_from_failure(gen, replay, verifier, ecfg);
      g.members.push_back({ep.sequence, ep.reflection_span, static_cast<double>(*ep.reward)});
      rewards.push_back(static_cast<double>(*ep.reward));
    }
    g.adv = compute_advantages(rewards, cfg.eps_std);
    if (!g.adv.degenerate) break;
  }
  return g;
}

StepMetrics train_step(PolicyParams& params, const PolicyParams& reference,
                       std::span<const episode::FailureRecord> batch, const GrpoConfig& cfg,
                       std::size_t step, policy::Optimizer& optimizer) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const std::uint64_t step_seed = mix_seed(cfg.seed, step);
  std::vector<GroupRollout> groups(batch.size());
  std::vector<std::exception_ptr> errors(batch.size());
  {
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t b = next++; b < batch.size(); b = next++) {
        try {
          groups[b] = rollout_group(params, batch[b], cfg, mix_seed(step_seed, b));
        } catch (...) {
          errors[b] = std::current_exception();
        }
      }
    };
    const std::size_t n = std::max<std::size_t>(1, std::min(cfg.workers, batch.size()));
    if (n == 1) {
      worker();
    } else {
      std::vector<std::jthread> pool;
      for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  return update_from_groups(params, reference, groups, cfg, step, optimizer);
}

StepMetrics update_from_groups(PolicyParams& params, const PolicyParams& reference,
                               const std::vector<GroupRollout>& groups, const GrpoConfig& cfg,
                               std::size_t step, policy::Optimizer& optimizer) {
  if (groups.empty()) throw std::invalid_argument("no groups");
  StepMetrics m;
  m.step = step;
  m.lr = lr_at(step, cfg);
  std::size_t degenerate = 0, rollouts = 0;
  for (const auto& g : groups) {
    degenerate += g.adv.degenerate;
    for (const auto& mem : g.members) {
      m.mean_reward += mem.reward;
      ++rollouts;
    }
  }
  if (rollouts) m.mean_reward /= static_cast<double>(rollouts);
  m.frac_degenerate = static_cast<double>(degenerate) / static_cast<double>(groups.size());

  // Old log-probs are those of the sampling policy, i.e. the params at the
  // start of the step.
  std::vector<std::vector<double>> old_lp(groups.size()), ref_lp(groups.size());
  for (std::size_t b = 0; b < groups.size(); ++b) {
    if (groups[b].adv.degenerate) continue;
    for (const auto& mem : groups[b].members) {
      if (mem.span.empty()) throw SpanError("rollout without a reflection span");
      const auto r = policy::log_probs(reference, mem.sequence, mem.span);
      ref_lp[b].insert(ref_lp[b].end(), r.begin(), r.end());
    }
  }

  const double inv_batch = 1.0 / static_cast<double>(groups.size());
  auto trial = params;
  auto opt = optimizer;
  for (std::size_t iter = 0; iter < cfg.inner_iters; ++iter) {
    std::vector<double> grad(trial.data().size(), 0.0);
    double loss = 0.0, kl = 0.0;
    std::size_t scored_groups = 0;
    for (std::size_t b = 0; b < groups.size(); ++b) {
      const auto& g = groups[b];
      if (g.adv.degenerate) continue;
      std::vector<policy::ForwardPass> passes;
      std::vector<double> new_lp, adv;
      for (std::size_t i = 0; i < g.members.size(); ++i) {
        const auto& mem = g.members[i];
        passes.emplace_back(trial, mem.sequence);
        const auto lp = passes.back().log_probs(mem.span);
        new_lp.insert(new_lp.end(), lp.begin(), lp.end());
        const auto token_adv = mask_advantages(g.adv.values[i], mem.span, mem.sequence.size());
        const auto scored = gather(token_adv, std::span(&mem.span, 1));
        adv.insert(adv.end(), scored.begin(), scored.end());
      }
      if (iter == 0) old_lp[b] = new_lp;
      const auto res = surrogate_loss(new_lp, old_lp[b], ref_lp[b], adv, cfg);
      loss += res.loss * inv_batch;
      kl += res.mean_kl;
      ++scored_groups;
      std::size_t offset = 0;
      for (std::size_t i = 0; i < g.members.size(); ++i) {
        const std::size_t len = g.members[i].span.size();
        std::vector<double> d(res.dloss_dnew.begin() + static_cast<long>(offset),
                              res.dloss_dnew.begin() + static_cast<long>(offset + len));
        for (auto& x : d) x *= inv_batch;
        passes[i].backward(g.members[i].span, d, grad);
        offset += len;
      }
    }
    const double norm = opt.step(trial.data(), grad, m.lr);
    if (iter == 0) {
      m.loss = loss;
      m.grad_norm = norm;
      m.mean_kl = scored_groups ? kl / static_cast<double>(scored_groups) : 0.0;
    }
  }
  if (!trial.all_finite()) throw RangeError("non-finite parameters after update");
  params = std::move(trial);
  optimizer = std::move(opt);
  return m;
}

std::vector<std::size_t> batch_indices(std::size_t dataset_size, std::size_t batch_size,
                                       std::uint64_t seed, std::size_t step) {
  if (dataset_size == 0) throw std::invalid_argument("empty dataset");
  if (step == 0) throw RangeError("steps are numbered from 1");
  std::vector<std::size_t> out;
  out.reserve(batch_size);
  std::map<std::size_t, std::vector<std::size_t>> perms;
  const std::size_t start = (step - 1) * batch_size;
  for (std::size_t i = 0; i < batch_size; ++i) {
    const std::size_t q = start + i;
    const std::size_t epoch = q / dataset_size;
    auto it = perms.find(epoch);
    if (it == perms.end()) {
      std::vector<std::size_t> perm(dataset_size);
      for (std::size_t k = 0; k < dataset_size; ++k) perm[k] = k;
      Rng rng(mix_seed(seed, epoch));
      shuffle(perm, rng);
      it = perms.emplace(epoch, std::move(perm)).first;
    }
    out.push_back(it->second[q % dataset_size]);
  }
  return out;
}

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::size_t step) {
  char name[32];
  std::snprintf(name, sizeof name, "step_%06zu.ckpt", step);
  return dir / name;
}

namespace {

nlohmann::json metrics_json(const StepMetrics& m) {
  return {{"step", m.step},         {"lr", m.lr},
          {"mean_reward", m.mean_reward}, {"frac_degenerate", m.frac_degenerate},
          {"mean_kl", m.mean_kl},   {"loss", m.loss},
          {"grad_norm", m.grad_norm}};
}

StepMetrics metrics_from(const nlohmann::json& j) {
  StepMetrics m;
  m.step = j.at("step").get<std::size_t>();
  m.lr = j.at("lr").get<double>();
  m.mean_reward = j.at("mean_reward").get<double>();
  m.frac_degenerate = j.at("frac_degenerate").get<double>();
  m.mean_kl = j.at("mean_kl").get<double>();
  m.loss = j.at("loss").get<double>();
  m.grad_norm = j.at("grad_norm").get<double>();
  return m;
}

struct RunState {
  std::size_t step = 0;
  double best = -1.0;
  std::size_t since_best = 0;
  bool stopped = false;
};

void save_state(const std::filesystem::path& dir, const RunState& s, const PolicyParams& params,
                const policy::Optimizer& opt) {
  policy::save_checkpoint(checkpoint_path(dir, s.step), params);
  auto opt_path = checkpoint_path(dir, s.step);
  opt_path.replace_extension(".opt");
  policy::write_file_bytes(opt_path, opt.serialize());
  const nlohmann::json j = {
      {"step", s.step}, {"best", s.best}, {"since_best", s.since_best}, {"stopped", s.stopped}};
  const std::string text = j.dump() + "\n";
  policy::write_file_bytes(dir / "state.json", std::vector<std::uint8_t>(text.begin(), text.end()));
}

}  // namespace

TrainResult train(const PolicyParams& initial, const std::vector<episode::FailureRecord>& data,
                  const GrpoConfig& cfg, const std::filesystem::path& out_dir,
                  const TrainCallbacks& callbacks) {
  cfg.validate();
  if (data.empty()) throw std::invalid_argument("empty failure dataset");
  std::filesystem::create_directories(out_dir);
  const auto log_path = out_dir / "train_log.jsonl";

  TrainResult result{initial, 0, false, {}};
  policy::Optimizer opt(cfg.optimizer, initial.data().size());
  RunState state;

  if (std::filesystem::exists(out_dir / "state.json")) {
    const auto bytes = policy::read_file_bytes(out_dir / "state.json");
    const auto j = nlohmann::json::parse(bytes.begin(), bytes.end());
    state.step = j.at("step").get<std::size_t>();
    state.best = j.at("best").get<double>();
    state.since_best = j.at("since_best").get<std::size_t>();
    state.stopped = j.value("stopped", false);
    result.stopped_early = state.stopped;
    result.params = policy::load_checkpoint(checkpoint_path(out_dir, state.step));
    auto opt_path = checkpoint_path(out_dir, state.step);
    opt_path.replace_extension(".opt");
    opt = policy::Optimizer::deserialize(policy::read_file_bytes(opt_path));
    // Keep the log consistent with the restored step.
    std::ifstream in(log_path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto m = metrics_from(nlohmann::json::parse(line));
      if (m.step <= state.step) result.log.push_back(m);
    }
    in.close();
    std::ofstream out(log_path, std::ios::trunc);
    for (const auto& m : result.log) out << metrics_json(m).dump() << '\n';
  } else {
    std::ofstream(log_path, std::ios::trunc);
    save_state(out_dir, state, result.params, opt);
  }
  result.steps_done = state.step;

  const PolicyParams& reference = initial;
  while (!state.stopped && state.step < cfg.max_steps) {
    const std::size_t step = state.step + 1;
    const auto idx = batch_indices(data.size(), cfg.batch_size, cfg.seed, step);
    std::vector<episode::FailureRecord> batch;
    batch.reserve(idx.size());
    for (const auto i : idx) batch.push_back(data[i]);
    const auto m = train_step(result.params, reference, batch, cfg, step, opt);
    state.step = step;
    result.log.push_back(m);
    {
      std::ofstream out(log_path, std::ios::app);
      out << metrics_json(m).dump() << '\n';
    }
    if (callbacks.on_step) callbacks.on_step(m);

    bool stop = false;
    if (cfg.eval_every > 0 && callbacks.evaluate && step % cfg.eval_every == 0) {
      const double score = callbacks.evaluate(result.params, step);
      if (score > state.best) {
        state.best = score;
        state.since_best = 0;
      } else if (++state.since_best >= cfg.patience && cfg.patience > 0) {
        stop = true;
      }
    }
    state.stopped = stop;
    const bool last = stop || state.step == cfg.max_steps;
    if (last || (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0)) {
      save_state(out_dir, state, result.params, opt);
    }
    result.steps_done = state.step;
    if (stop) {
      result.stopped_early = true;
      break;
    }
  }
  return result;
}

}  // namespace reflect::grpo
