#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace reflect::policy {

enum class OptimizerKind { Sgd, Adam };

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_from_string(const std::string& name);  // throws ConfigError

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Sgd;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double grad_clip = 0.0;  // global L2 norm; 0 disables
};

// Minimizes; step() consumes the gradient of the loss.
class Optimizer {
 public:
  Optimizer(OptimizerConfig cfg, std::size_t size);

  // Returns the gradient norm before clipping.
  double step(std::vector<double>& params, std::span<const double> grad, double lr);

  const OptimizerConfig& config() const { return cfg_; }
  std::uint64_t steps() const { return t_; }

  std::vector<std::uint8_t> serialize() const;
  static Optimizer deserialize(const std::vector<std::uint8_t>& bytes);  // throws FormatError

 private:
  OptimizerConfig cfg_;
  std::uint64_t t_ = 0;
  std::vector<double> m_, v_;
};

}  // namespace reflect::policy
