#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "reflect/policy/model.hpp"

namespace reflect::policy {

struct SamplingConfig {
  double temperature = 1.0;  // 0 selects the argmax (lowest id on ties)
  std::size_t max_new_tokens = 32;
  bool stop_at_eos = true;
  std::vector<std::string> stop_strings;  // checked against decoded output
  std::uint64_t seed = 0;
};

// Generated continuation, including the stop token when one was emitted.
// Generation is capped at the context limit. Throws LengthError when the
// prompt does not leave room for one token.
std::vector<TokenId> sample(const PolicyParams& params, std::span<const TokenId> prompt,
                            const SamplingConfig& cfg);

// Index drawn from softmax(logits / temperature) using one uniform draw.
TokenId draw_token(const Vector& logits, double temperature, double uniform);

}  // namespace reflect::policy
