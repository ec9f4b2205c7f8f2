#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "reflect/policy/vocab.hpp"

namespace reflect::policy {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

struct ModelConfig {
  int layers = 4;
  int width = 128;
  int heads = 4;
  int context = 512;
  int ffn_mult = 4;

  int head_dim() const { return width / heads; }
  int ffn_width() const { return width * ffn_mult; }
  void validate() const;  // throws ConfigError

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Half-open token index range [begin, end).
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool empty() const { return end <= begin; }
  friend bool operator==(const Span&, const Span&) = default;
};

struct TensorInfo {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t offset = 0;

  std::size_t size() const { return rows * cols; }
};

// Offsets of every weight tensor inside one flat array.
struct Layout {
  struct Block {
    std::size_t ln1_g, ln1_b, attn_w, attn_b, proj_w, proj_b;
    std::size_t ln2_g, ln2_b, fc1_w, fc1_b, fc2_w, fc2_b;
  };

  std::size_t tok_emb = 0, pos_emb = 0;
  std::vector<Block> blocks;
  std::size_t lnf_g = 0, lnf_b = 0, head_w = 0, head_b = 0;
  std::vector<TensorInfo> tensors;
  std::size_t total = 0;

  Layout(const ModelConfig& config, std::size_t vocab_size);
};

// Pre-norm decoder-only transformer with learned positional embeddings.
// All weights live in one flat double array so optimizers and gradient
// checks can treat them uniformly.
class PolicyParams {
 public:
  PolicyParams(ModelConfig config, Vocab vocab);  // all-zero weights

  // Gaussian init (std 0.02, residual projections scaled by 1/sqrt(2L)),
  // unit LayerNorm gains, zero biases.
  static PolicyParams random(ModelConfig config, Vocab vocab, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const Vocab& vocab() const { return vocab_; }
  const Layout& layout() const { return layout_; }
  std::size_t vocab_size() const { return vocab_.size(); }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool all_finite() const;

  friend bool operator==(const PolicyParams& a, const PolicyParams& b) {
    return a.config_ == b.config_ && a.vocab_ == b.vocab_ && a.data_ == b.data_;
  }

 private:
  ModelConfig config_;
  Vocab vocab_;
  Layout layout_;
  std::vector<double> data_;
};

// Activations of one full-sequence forward pass, kept for backpropagation.
class ForwardPass {
 public:
  // Throws LengthError if tokens is empty or longer than the context.
  ForwardPass(const PolicyParams& params, std::span<const TokenId> tokens);

  // Row i holds next-token logits after tokens[0..i].
  const Matrix& logits() const { return logits_; }

  // log p(tokens[t] | tokens[<t]) for t in span. Throws SpanError unless
  // 1 <= span.begin <= span.end <= length.
  std::vector<double> log_probs(Span span) const;

  // Adds d(loss)/d(params) to grad, where d(loss)/d(log_probs[t]) is given
  // by dloss_dlogp[t - span.begin].
  void backward(Span span, std::span<const double> dloss_dlogp, std::vector<double>& grad) const;

  std::size_t length() const { return tokens_.size(); }

 private:
  struct LayerCache {
    Matrix x_in, xhat1, h1, qkv, attn, x_mid, xhat2, h2, u, g;
    Vector rstd1, rstd2;
    std::vector<Matrix> probs;  // per head, T x T
  };

  void check_span(Span span) const;

  const PolicyParams* params_;
  std::vector<TokenId> tokens_;
  std::vector<LayerCache> layers_;
  Matrix x_final_, xhatf_, hf_, logits_, log_softmax_;
  Vector rstdf_;
};

// Convenience wrappers over ForwardPass.
Matrix forward(const PolicyParams& params, std::span<const TokenId> tokens);
std::vector<double> log_probs(const PolicyParams& params, std::span<const TokenId> tokens, Span span);
std::vector<double> gradient(const PolicyParams& params, std::span<const TokenId> tokens, Span span,
                             std::span<const double> dloss_dlogp);

// Incremental decoding with cached keys and values; push() returns the
// next-token logits after the pushed token.
class Decoder {
 public:
  explicit Decoder(const PolicyParams& params);

  const Vector& push(TokenId token);  // throws LengthError at the context limit
  std::size_t length() const { return length_; }

 private:
  const PolicyParams* params_;
  std::vector<Matrix> keys_, values_;
  std::size_t length_ = 0;
  Vector logits_;
};

}  // namespace reflect::policy
