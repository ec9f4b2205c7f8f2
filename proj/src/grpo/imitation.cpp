#include "reflect/grpo/imitation.hpp"

#include <cmath>
#include <numbers>
#include <optional>

#include "reflect/episode/generator.hpp"
#include "reflect/error.hpp"
#include "reflect/random.hpp"
#include "reflect/tasks/prompts.hpp"
#include "reflect/verifiers/countdown.hpp"

namespace reflect::grpo {

using llm::Role;
using tasks::Stage;

namespace {

void append_answer(const policy::Vocab& vocab, WeightedSequence& s, const std::string& text) {
  for (const auto id : vocab.encode(text)) {
    s.tokens.push_back(id);
    s.weights.push_back(1.0);
  }
  s.tokens.push_back(vocab.eos());
  s.weights.push_back(1.0);
}

std::string boxed(const verifiers::Expr& e) { return "\\boxed{" + verifiers::render(e) + "}"; }

// "a op b=value" for every operator node in post-order, with both operands
// written as values, e.g. "8-1=7,7*3=21". Absent when some node's value is
// negative or not an integer.
std::optional<verifiers::Integer> work_steps(const verifiers::Expr& e, std::string& out) {
  if (e.is_literal()) return e.value();
  const auto a = work_steps(e.lhs(), out);
  if (!a) return std::nullopt;
  const auto b = work_steps(e.rhs(), out);
  if (!b) return std::nullopt;
  const auto step = verifiers::Expr::binary(e.op(), verifiers::Expr::literal(*a), verifiers::Expr::literal(*b));
  try {
    const auto v = verifiers::evaluate(step);
    if (boost::multiprecision::denominator(v) != 1 || v < 0) return std::nullopt;
    if (!out.empty()) out += ',';
    out += verifiers::render(step) + "=" + boost::multiprecision::numerator(v).str();
    return boost::multiprecision::numerator(v);
  } catch (const DivisionByZero&) {
    return std::nullopt;
  }
}

std::optional<std::string> worked(const verifiers::Expr& e) {
  std::string out;
  if (!work_steps(e, out)) return std::nullopt;
  return out;
}

void append_prompt(WeightedSequence& s, const std::vector<policy::TokenId>& prompt) {
  for (std::size_t i = s.tokens.size(); i < prompt.size(); ++i) {
    s.tokens.push_back(prompt[i]);
    s.weights.push_back(0.0);
  }
}

}  // namespace

WeightedSequence first_attempt_example(const policy::Vocab& vocab, const tasks::Problem& p,
                                       const std::string& answer) {
  const episode::MiniChatCodec codec(vocab);
  const auto tpl = tasks::countdown_template();
  WeightedSequence s;
  append_prompt(s, codec.encode_prompt(tasks::render_messages(tpl, p, Stage::FirstAttempt, {})));
  append_answer(vocab, s, answer);
  return s;
}

WeightedSequence reflection_example(const policy::Vocab& vocab, const tasks::Problem& p,
                                    const std::string& failed, const std::string& reflection,
                                    const std::string& retry) {
  const episode::MiniChatCodec codec(vocab);
  const auto tpl = tasks::countdown_template();
  auto t = tasks::render_messages(tpl, p, Stage::FirstAttempt, {});
  t.push_back({Role::Assistant, failed});
  WeightedSequence s;
  t = tasks::render_messages(tpl, p, Stage::Reflection, t);
  append_prompt(s, codec.encode_prompt(t));
  append_answer(vocab, s, reflection);
  t.push_back({Role::Assistant, reflection});
  t = tasks::render_messages(tpl, p, Stage::Retry, t);
  append_prompt(s, codec.encode_prompt(t));
  append_answer(vocab, s, retry);
  return s;
}

double weighted_nll(const policy::PolicyParams& params, const WeightedSequence& seq,
                    std::vector<double>& grad, double scale) {
  const policy::ForwardPass fp(params, seq.tokens);
  const policy::Span span{1, seq.tokens.size()};
  const auto lp = fp.log_probs(span);
  double loss = 0.0;
  std::vector<double> d(lp.size());
  for (std::size_t i = 0; i < lp.size(); ++i) {
    const double w = seq.weights[i + 1];
    loss -= w * lp[i];
    d[i] = -w * scale;
  }
  fp.backward(span, d, grad);
  return loss;
}

ImitationExample draw_example(const tasks::Problem& problem, const ImitationConfig& cfg, Rng& rng) {
  ImitationExample ex;
  ex.problem = problem;
  auto& p = ex.problem;
  if (cfg.permute_numbers) shuffle(p.numbers, rng);
  auto solution = [&] {
    if (!cfg.random_solution) return *tasks::solve_countdown(p.numbers, p.target);
    const auto all = tasks::all_solutions(p.numbers, p.target);
    return all.at(uniform_below(rng, all.size()));
  };
  if (!tasks::solve_countdown(p.numbers, p.target)) throw std::invalid_argument("unsolvable problem in imitation set");
  if (uniform01(rng) >= cfg.reflection_fraction) {
    ex.answer = boxed(solution());
    return ex;
  }
  auto wrong = [&] {
    for (int tries = 0; tries < 10000; ++tries) {
      const auto e = tasks::random_expression(p.numbers, rng());
      const auto w = worked(e);
      if (w && !verifiers::verify_countdown(p.numbers, p.target, boxed(e)).success) return std::pair{e, *w};
    }
    throw std::invalid_argument("no wrong integer-valued expression for an instance");
  };
  const auto [failed, restated] = wrong();
  std::string reflection = restated;
  verifiers::Expr last = failed;
  if (uniform01(rng) < cfg.reflection_search_rate) {
    std::vector<std::pair<verifiers::Expr, std::string>> solved;
    for (const auto& e : tasks::all_solutions(p.numbers, p.target)) {
      if (const auto w = worked(e)) solved.emplace_back(e, *w);
    }
    if (!solved.empty()) {
      const auto extra = uniform_below(rng, cfg.max_wrong_candidates + 1);
      for (std::size_t i = 0; i < extra; ++i) reflection += "," + wrong().second;
      const auto& pick = cfg.random_solution ? solved[uniform_below(rng, solved.size())] : solved.front();
      last = pick.first;
      reflection += "," + pick.second;
    }
  }
  ex.failed = boxed(failed);
  ex.reflection = reflection;
  ex.answer = boxed(last);
  return ex;
}

std::vector<double> imitation_pretrain(policy::PolicyParams& params,
                                       const std::vector<tasks::Problem>& problems,
                                       const ImitationConfig& cfg,
                                       const std::function<void(std::size_t, double)>& on_step) {
  if (problems.empty()) throw std::invalid_argument("no problems to imitate");
  const auto& vocab = params.vocab();

  policy::Optimizer opt(cfg.optimizer, params.data().size());
  Rng rng(cfg.seed);
  std::vector<double> losses;
  const auto warmup = static_cast<std::size_t>(std::ceil(cfg.warmup_ratio * static_cast<double>(cfg.steps)));
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    std::vector<double> grad(params.data().size(), 0.0);
    std::vector<WeightedSequence> batch;
    double tokens = 0.0;
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      const auto ex = draw_example(problems[uniform_below(rng, problems.size())], cfg, rng);
      batch.push_back(ex.reflection ? reflection_example(vocab, ex.problem, ex.failed, *ex.reflection, ex.answer)
                                    : first_attempt_example(vocab, ex.problem, ex.answer));
      for (const double w : batch.back().weights) tokens += w;
    }
    double loss = 0.0;
    for (const auto& s : batch) loss += weighted_nll(params, s, grad, 1.0 / tokens);
    const double lr = step <= warmup
                          ? cfg.lr * static_cast<double>(step) / static_cast<double>(std::max<std::size_t>(warmup, 1))
                          : cfg.lr * 0.5 *
                                (1.0 + std::cos(std::numbers::pi * static_cast<double>(step - warmup) /
                                                static_cast<double>(cfg.steps - warmup + 1)));
    opt.step(params.data(), grad, lr);
    losses.push_back(loss / tokens);
    if (on_step) on_step(step, loss / tokens);
  }
  return losses;
}

}  // namespace reflect::grpo
