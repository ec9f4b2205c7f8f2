#include "reflect/policy/sampler.hpp"

#include <cmath>

#include "reflect/error.hpp"
#include "reflect/random.hpp"

namespace reflect::policy {

TokenId draw_token(const Vector& logits, double temperature, double uniform) {
  if (temperature <= 0.0) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < logits.size(); ++i) {
      if (logits(i) > logits(best)) best = i;
    }
    return static_cast<TokenId>(best);
  }
  const double mx = logits.maxCoeff();
  const Vector p = ((logits.array() - mx) / temperature).exp().matrix();
  const double target = uniform * p.sum();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    acc += p(i);
    if (target < acc) return static_cast<TokenId>(i);
  }
  // Rounding can leave target == sum; return the last token with mass.
  for (Eigen::Index i = p.size() - 1; i >= 0; --i) {
    if (p(i) > 0.0) return static_cast<TokenId>(i);
  }
  return 0;
}

std::vector<TokenId> sample(const PolicyParams& params, std::span<const TokenId> prompt,
                            const SamplingConfig& cfg) {
  const auto context = static_cast<std::size_t>(params.config().context);
  if (prompt.empty()) throw LengthError("empty prompt");
  if (prompt.size() >= context) {
    throw LengthError("prompt of " + std::to_string(prompt.size()) +
                      " tokens leaves no room in context " + std::to_string(context));
  }
  if (cfg.temperature < 0.0) throw std::invalid_argument("temperature must be >= 0");

  Rng rng(cfg.seed);
  Decoder decoder(params);
  const Vector* logits = nullptr;
  for (const TokenId t : prompt) logits = &decoder.push(t);

  const std::size_t budget = std::min(cfg.max_new_tokens, context - prompt.size());
  const Vocab& vocab = params.vocab();
  std::vector<TokenId> out;
  std::string text;
  for (std::size_t i = 0; i < budget; ++i) {
    const double u = cfg.temperature > 0.0 ? uniform01(rng) : 0.0;
    const TokenId next = draw_token(*logits, cfg.temperature, u);
    out.push_back(next);
    if (cfg.stop_at_eos && next == vocab.eos()) break;
    if (!cfg.stop_strings.empty()) {
      if (!vocab.is_reserved(next)) text += vocab.token(next);
      bool stop = false;
      for (const auto& s : cfg.stop_strings) {
        if (!s.empty() && text.size() >= s.size() &&
            text.compare(text.size() - s.size(), s.size(), s) == 0) {
          stop = true;
        }
      }
      if (stop) break;
    }
    if (i + 1 < budget) logits = &decoder.push(next);
  }
  return out;
}

}  // namespace reflect::policy
