#include "reflect/policy/optimizer.hpp"

#include <cmath>
#include <cstring>

#include "reflect/error.hpp"
#include "reflect/policy/checkpoint.hpp"

namespace reflect::policy {

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::Sgd ? "sgd" : "adam"; }

OptimizerKind optimizer_from_string(const std::string& name) {
  if (name == "sgd") return OptimizerKind::Sgd;
  if (name == "adam") return OptimizerKind::Adam;
  throw ConfigError("unknown optimizer '" + name + "'");
}

Optimizer::Optimizer(OptimizerConfig cfg, std::size_t size) : cfg_(cfg) {
  if (cfg_.kind == OptimizerKind::Adam) {
    m_.assign(size, 0.0);
    v_.assign(size, 0.0);
  }
}

double Optimizer::step(std::vector<double>& params, std::span<const double> grad, double lr) {
  if (grad.size() != params.size()) throw std::invalid_argument("gradient size mismatch");
  double sq = 0.0;
  for (const double g : grad) sq += g * g;
  const double norm = std::sqrt(sq);
  const double scale = (cfg_.grad_clip > 0.0 && norm > cfg_.grad_clip) ? cfg_.grad_clip / norm : 1.0;
  ++t_;
  if (cfg_.kind == OptimizerKind::Sgd) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * scale * grad[i];
    return norm;
  }
  if (m_.size() != params.size()) throw std::invalid_argument("optimizer state size mismatch");
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = scale * grad[i];
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g * g;
    params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + cfg_.eps);
  }
  return norm;
}

std::vector<std::uint8_t> Optimizer::serialize() const {
  ByteWriter w;
  w.bytes("RFLXOPT1", 8);
  w.u32(cfg_.kind == OptimizerKind::Sgd ? 0 : 1);
  w.f64(cfg_.beta1);
  w.f64(cfg_.beta2);
  w.f64(cfg_.eps);
  w.f64(cfg_.grad_clip);
  w.u64(t_);
  w.u64(m_.size());
  for (const double x : m_) w.f64(x);
  for (const double x : v_) w.f64(x);
  return std::move(w.buffer());
}

Optimizer Optimizer::deserialize(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes.data(), bytes.size());
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, "RFLXOPT1", 8) != 0) throw FormatError("not an optimizer state file");
  OptimizerConfig cfg;
  const std::uint32_t kind = r.u32();
  if (kind > 1) throw FormatError("bad optimizer kind");
  cfg.kind = kind == 0 ? OptimizerKind::Sgd : OptimizerKind::Adam;
  cfg.beta1 = r.f64();
  cfg.beta2 = r.f64();
  cfg.eps = r.f64();
  cfg.grad_clip = r.f64();
  Optimizer opt(cfg, 0);
  opt.t_ = r.u64();
  const std::uint64_t n = r.u64();
  if (n * 16 != r.remaining()) throw FormatError("optimizer state size mismatch");
  opt.m_.resize(n);
  opt.v_.resize(n);
  for (auto& x : opt.m_) x = r.f64();
  for (auto& x : opt.v_) x = r.f64();
  return opt;
}

}  // namespace reflect::policy
