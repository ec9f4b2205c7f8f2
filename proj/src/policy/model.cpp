#include "reflect/policy/model.hpp"

#include <cmath>
#include <limits>

#include "reflect/error.hpp"
#include "reflect/random.hpp"

namespace reflect::policy {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kGeluK = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluC = 0.044715;

using RowVec = Eigen::RowVectorXd;
using CMap = Eigen::Map<const Matrix>;
using MMap = Eigen::Map<Matrix>;
using CRow = Eigen::Map<const RowVec>;
using MRow = Eigen::Map<RowVec>;

double gelu(double u) {
  const double t = std::tanh(kGeluK * (u + kGeluC * u * u * u));
  return 0.5 * u * (1.0 + t);
}

double gelu_grad(double u) {
  const double t = std::tanh(kGeluK * (u + kGeluC * u * u * u));
  return 0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * kGeluK * (1.0 + 3.0 * kGeluC * u * u);
}

void layer_norm(const Matrix& x, const double* gain, const double* bias, Matrix& xhat, Vector& rstd,
                Matrix& out) {
  const Eigen::Index n = x.rows(), d = x.cols();
  xhat.resize(n, d);
  out.resize(n, d);
  rstd.resize(n);
  const CRow g(gain, d), b(bias, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mean = x.row(i).mean();
    const double var = (x.row(i).array() - mean).square().mean();
    rstd(i) = 1.0 / std::sqrt(var + kLnEps);
    xhat.row(i) = (x.row(i).array() - mean) * rstd(i);
    out.row(i) = xhat.row(i).cwiseProduct(g) + b;
  }
}

// Returns d(input) for rows [0, n) and accumulates the gain/bias gradients.
Matrix layer_norm_backward(const Matrix& dout, const Matrix& xhat, const Vector& rstd,
                           const double* gain, double* dgain, double* dbias) {
  const Eigen::Index n = dout.rows(), d = dout.cols();
  const CRow g(gain, d);
  MRow dg(dgain, d), db(dbias, d);
  Matrix dx(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    dg += dout.row(i).cwiseProduct(xhat.row(i));
    db += dout.row(i);
    const RowVec dxhat = dout.row(i).cwiseProduct(g);
    const double m1 = dxhat.mean();
    const double m2 = dxhat.cwiseProduct(xhat.row(i)).mean();
    dx.row(i) = rstd(i) * (dxhat.array() - m1 - xhat.row(i).array() * m2).matrix();
  }
  return dx;
}

void layer_norm_row(const RowVec& x, const double* gain, const double* bias, RowVec& out) {
  const Eigen::Index d = x.size();
  const double mean = x.mean();
  const double var = (x.array() - mean).square().mean();
  const double r = 1.0 / std::sqrt(var + kLnEps);
  out = ((x.array() - mean) * r).matrix().cwiseProduct(CRow(gain, d)) + CRow(bias, d);
}

}  // namespace

void ModelConfig::validate() const {
  if (layers < 1 || width < 1 || heads < 1 || context < 2 || ffn_mult < 1) {
    throw ConfigError("model dimensions must be positive (context >= 2)");
  }
  if (width % heads != 0) throw ConfigError("width must be divisible by heads");
}

Layout::Layout(const ModelConfig& c, std::size_t vocab_size) {
  c.validate();
  const auto d = static_cast<std::size_t>(c.width);
  const auto f = static_cast<std::size_t>(c.ffn_width());
  const auto v = vocab_size;
  auto add = [&](std::string name, std::size_t rows, std::size_t cols) {
    tensors.push_back(TensorInfo{std::move(name), rows, cols, total});
    total += rows * cols;
    return tensors.back().offset;
  };
  tok_emb = add("tok_emb", v, d);
  pos_emb = add("pos_emb", static_cast<std::size_t>(c.context), d);
  for (int l = 0; l < c.layers; ++l) {
    const std::string p = "block" + std::to_string(l) + ".";
    Block b{};
    b.ln1_g = add(p + "ln1.gain", 1, d);
    b.ln1_b = add(p + "ln1.bias", 1, d);
    b.attn_w = add(p + "attn.weight", d, 3 * d);
    b.attn_b = add(p + "attn.bias", 1, 3 * d);
    b.proj_w = add(p + "proj.weight", d, d);
    b.proj_b = add(p + "proj.bias", 1, d);
    b.ln2_g = add(p + "ln2.gain", 1, d);
    b.ln2_b = add(p + "ln2.bias", 1, d);
    b.fc1_w = add(p + "fc1.weight", d, f);
    b.fc1_b = add(p + "fc1.bias", 1, f);
    b.fc2_w = add(p + "fc2.weight", f, d);
    b.fc2_b = add(p + "fc2.bias", 1, d);
    blocks.push_back(b);
  }
  lnf_g = add("lnf.gain", 1, d);
  lnf_b = add("lnf.bias", 1, d);
  head_w = add("head.weight", d, v);
  head_b = add("head.bias", 1, v);
}

PolicyParams::PolicyParams(ModelConfig config, Vocab vocab)
    : config_(config), vocab_(std::move(vocab)), layout_(config_, vocab_.size()),
      data_(layout_.total, 0.0) {}

PolicyParams PolicyParams::random(ModelConfig config, Vocab vocab, std::uint64_t seed) {
  PolicyParams p(config, std::move(vocab));
  Rng rng(seed);
  const double std_dev = 0.02;
  const double resid = std_dev / std::sqrt(2.0 * config.layers);
  for (const auto& t : p.layout_.tensors) {
    double* w = p.data_.data() + t.offset;
    const bool gain = t.name.find(".gain") != std::string::npos;
    const bool bias = t.name.find(".bias") != std::string::npos;
    const bool residual = t.name.find("proj.weight") != std::string::npos ||
                          t.name.find("fc2.weight") != std::string::npos;
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (gain) w[i] = 1.0;
      else if (bias) w[i] = 0.0;
      else w[i] = standard_normal(rng) * (residual ? resid : std_dev);
    }
  }
  return p;
}

bool PolicyParams::all_finite() const {
  for (const double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

ForwardPass::ForwardPass(const PolicyParams& params, std::span<const TokenId> tokens)
    : params_(&params), tokens_(tokens.begin(), tokens.end()) {
  const auto& cfg = params.config();
  const auto& L = params.layout();
  const double* w = params.data().data();
  const Eigen::Index T = static_cast<Eigen::Index>(tokens_.size());
  const Eigen::Index d = cfg.width, V = static_cast<Eigen::Index>(params.vocab_size());
  const Eigen::Index f = cfg.ffn_width(), hd = cfg.head_dim();
  if (T == 0) throw LengthError("empty token sequence");
  if (T > cfg.context) {
    throw LengthError("sequence of " + std::to_string(T) + " tokens exceeds context " +
                      std::to_string(cfg.context));
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  const CMap tok(w + L.tok_emb, V, d), pos(w + L.pos_emb, cfg.context, d);
  Matrix x(T, d);
  for (Eigen::Index t = 0; t < T; ++t) {
    const TokenId id = tokens_[static_cast<std::size_t>(t)];
    if (id < 0 || id >= V) throw VocabError("token id " + std::to_string(id) + " out of range");
    x.row(t) = tok.row(id) + pos.row(t);
  }

  layers_.resize(static_cast<std::size_t>(cfg.layers));
  for (int l = 0; l < cfg.layers; ++l) {
    const auto& B = L.blocks[static_cast<std::size_t>(l)];
    auto& c = layers_[static_cast<std::size_t>(l)];
    c.x_in = x;
    layer_norm(x, w + B.ln1_g, w + B.ln1_b, c.xhat1, c.rstd1, c.h1);
    c.qkv = c.h1 * CMap(w + B.attn_w, d, 3 * d);
    c.qkv.rowwise() += CRow(w + B.attn_b, 3 * d);

    c.attn.setZero(T, d);
    c.probs.resize(static_cast<std::size_t>(cfg.heads));
    for (int h = 0; h < cfg.heads; ++h) {
      const auto q = c.qkv.middleCols(h * hd, hd);
      const auto k = c.qkv.middleCols(d + h * hd, hd);
      const auto v = c.qkv.middleCols(2 * d + h * hd, hd);
      Matrix s = (q * k.transpose()) * scale;
      for (Eigen::Index i = 0; i < T; ++i) {
        const double mx = s.row(i).head(i + 1).maxCoeff();
        double z = 0.0;
        for (Eigen::Index j = 0; j <= i; ++j) {
          s(i, j) = std::exp(s(i, j) - mx);
          z += s(i, j);
        }
        s.row(i).head(i + 1) /= z;
        s.row(i).tail(T - i - 1).setZero();
      }
      c.attn.middleCols(h * hd, hd) = s * v;
      c.probs[static_cast<std::size_t>(h)] = std::move(s);
    }
    x += c.attn * CMap(w + B.proj_w, d, d);
    x.rowwise() += CRow(w + B.proj_b, d);
    c.x_mid = x;

    layer_norm(x, w + B.ln2_g, w + B.ln2_b, c.xhat2, c.rstd2, c.h2);
    c.u = c.h2 * CMap(w + B.fc1_w, d, f);
    c.u.rowwise() += CRow(w + B.fc1_b, f);
    c.g = c.u.unaryExpr([](double u) { return gelu(u); });
    x += c.g * CMap(w + B.fc2_w, f, d);
    x.rowwise() += CRow(w + B.fc2_b, d);
  }

  x_final_ = x;
  layer_norm(x, w + L.lnf_g, w + L.lnf_b, xhatf_, rstdf_, hf_);
  logits_ = hf_ * CMap(w + L.head_w, d, V);
  logits_.rowwise() += CRow(w + L.head_b, V);

  log_softmax_.resize(T, V);
  for (Eigen::Index i = 0; i < T; ++i) {
    const double mx = logits_.row(i).maxCoeff();
    const double lse = mx + std::log((logits_.row(i).array() - mx).exp().sum());
    log_softmax_.row(i) = logits_.row(i).array() - lse;
  }
}

void ForwardPass::check_span(Span span) const {
  if (span.begin < 1 || span.begin > span.end || span.end > tokens_.size()) {
    throw SpanError("span [" + std::to_string(span.begin) + ", " + std::to_string(span.end) +
                    ") invalid for sequence of length " + std::to_string(tokens_.size()));
  }
}

std::vector<double> ForwardPass::log_probs(Span span) const {
  check_span(span);
  std::vector<double> out;
  out.reserve(span.size());
  for (std::size_t t = span.begin; t < span.end; ++t) {
    out.push_back(log_softmax_(static_cast<Eigen::Index>(t - 1), tokens_[t]));
  }
  return out;
}

void ForwardPass::backward(Span span, std::span<const double> dloss_dlogp,
                           std::vector<double>& grad) const {
  check_span(span);
  if (dloss_dlogp.size() != span.size()) {
    throw SpanError("gradient coefficients do not match span length");
  }
  const auto& cfg = params_->config();
  const auto& L = params_->layout();
  if (grad.size() != L.total) grad.assign(L.total, 0.0);
  if (span.empty()) return;

  const double* w = params_->data().data();
  double* gw = grad.data();
  const Eigen::Index d = cfg.width, V = static_cast<Eigen::Index>(params_->vocab_size());
  const Eigen::Index f = cfg.ffn_width(), hd = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  // Causality: rows at or after span.end - 1 cannot influence the loss.
  const Eigen::Index n = static_cast<Eigen::Index>(span.end - 1);

  Matrix dlogits = Matrix::Zero(n, V);
  for (std::size_t t = span.begin; t < span.end; ++t) {
    const Eigen::Index row = static_cast<Eigen::Index>(t - 1);
    const double c = dloss_dlogp[t - span.begin];
    if (c == 0.0) continue;
    dlogits.row(row) -= c * log_softmax_.row(row).array().exp().matrix();
    dlogits(row, tokens_[t]) += c;
  }

  MMap(gw + L.head_w, d, V).noalias() += hf_.topRows(n).transpose() * dlogits;
  MRow(gw + L.head_b, V) += dlogits.colwise().sum();
  Matrix dx = layer_norm_backward(dlogits * CMap(w + L.head_w, d, V).transpose(),
                                  xhatf_.topRows(n), rstdf_.head(n), w + L.lnf_g, gw + L.lnf_g,
                                  gw + L.lnf_b);

  for (int l = cfg.layers - 1; l >= 0; --l) {
    const auto& B = L.blocks[static_cast<std::size_t>(l)];
    const auto& c = layers_[static_cast<std::size_t>(l)];

    // Feed-forward branch.
    Matrix dg = dx * CMap(w + B.fc2_w, f, d).transpose();
    MMap(gw + B.fc2_w, f, d).noalias() += c.g.topRows(n).transpose() * dx;
    MRow(gw + B.fc2_b, d) += dx.colwise().sum();
    Matrix du = dg.cwiseProduct(c.u.topRows(n).unaryExpr([](double u) { return gelu_grad(u); }));
    MMap(gw + B.fc1_w, d, f).noalias() += c.h2.topRows(n).transpose() * du;
    MRow(gw + B.fc1_b, f) += du.colwise().sum();
    dx += layer_norm_backward(du * CMap(w + B.fc1_w, d, f).transpose(), c.xhat2.topRows(n),
                              c.rstd2.head(n), w + B.ln2_g, gw + B.ln2_g, gw + B.ln2_b);

    // Attention branch.
    MMap(gw + B.proj_w, d, d).noalias() += c.attn.topRows(n).transpose() * dx;
    MRow(gw + B.proj_b, d) += dx.colwise().sum();
    const Matrix dattn = dx * CMap(w + B.proj_w, d, d).transpose();
    Matrix dqkv = Matrix::Zero(n, 3 * d);
    for (int h = 0; h < cfg.heads; ++h) {
      const auto p = c.probs[static_cast<std::size_t>(h)].topLeftCorner(n, n);
      const auto q = c.qkv.topRows(n).middleCols(h * hd, hd);
      const auto k = c.qkv.topRows(n).middleCols(d + h * hd, hd);
      const auto v = c.qkv.topRows(n).middleCols(2 * d + h * hd, hd);
      const auto dout = dattn.middleCols(h * hd, hd);
      const Matrix dp = dout * v.transpose();
      Matrix ds = p.cwiseProduct(dp);
      const Vector rowsum = ds.rowwise().sum();
      ds -= p.cwiseProduct(rowsum.replicate(1, n));
      dqkv.middleCols(h * hd, hd) = (ds * k) * scale;
      dqkv.middleCols(d + h * hd, hd) = (ds.transpose() * q) * scale;
      dqkv.middleCols(2 * d + h * hd, hd) = p.transpose() * dout;
    }
    MMap(gw + B.attn_w, d, 3 * d).noalias() += c.h1.topRows(n).transpose() * dqkv;
    MRow(gw + B.attn_b, 3 * d) += dqkv.colwise().sum();
    dx += layer_norm_backward(dqkv * CMap(w + B.attn_w, d, 3 * d).transpose(), c.xhat1.topRows(n),
                              c.rstd1.head(n), w + B.ln1_g, gw + B.ln1_g, gw + B.ln1_b);
  }

  MMap gtok(gw + L.tok_emb, V, d), gpos(gw + L.pos_emb, cfg.context, d);
  for (Eigen::Index t = 0; t < n; ++t) {
    gtok.row(tokens_[static_cast<std::size_t>(t)]) += dx.row(t);
    gpos.row(t) += dx.row(t);
  }
}

Matrix forward(const PolicyParams& params, std::span<const TokenId> tokens) {
  return ForwardPass(params, tokens).logits();
}

std::vector<double> log_probs(const PolicyParams& params, std::span<const TokenId> tokens, Span span) {
  if (span.begin == span.end && span.begin >= 1 && span.end <= tokens.size()) return {};
  return ForwardPass(params, tokens).log_probs(span);
}

std::vector<double> gradient(const PolicyParams& params, std::span<const TokenId> tokens, Span span,
                             std::span<const double> dloss_dlogp) {
  std::vector<double> grad(params.layout().total, 0.0);
  ForwardPass(params, tokens).backward(span, dloss_dlogp, grad);
  return grad;
}

Decoder::Decoder(const PolicyParams& params) : params_(&params) {
  const auto& cfg = params.config();
  keys_.assign(static_cast<std::size_t>(cfg.layers), Matrix(cfg.context, cfg.width));
  values_.assign(static_cast<std::size_t>(cfg.layers), Matrix(cfg.context, cfg.width));
}

const Vector& Decoder::push(TokenId token) {
  const auto& cfg = params_->config();
  const auto& L = params_->layout();
  const double* w = params_->data().data();
  const Eigen::Index d = cfg.width, V = static_cast<Eigen::Index>(params_->vocab_size());
  const Eigen::Index f = cfg.ffn_width(), hd = cfg.head_dim();
  const Eigen::Index n = static_cast<Eigen::Index>(length_);
  if (n >= cfg.context) throw LengthError("decoder reached the context limit");
  if (token < 0 || token >= V) throw VocabError("token id " + std::to_string(token) + " out of range");
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  RowVec x = CMap(w + L.tok_emb, V, d).row(token) + CMap(w + L.pos_emb, cfg.context, d).row(n);
  RowVec h, qkv, attn(d), scores;
  for (int l = 0; l < cfg.layers; ++l) {
    const auto& B = L.blocks[static_cast<std::size_t>(l)];
    auto& K = keys_[static_cast<std::size_t>(l)];
    auto& Vc = values_[static_cast<std::size_t>(l)];
    layer_norm_row(x, w + B.ln1_g, w + B.ln1_b, h);
    qkv = h * CMap(w + B.attn_w, d, 3 * d) + CRow(w + B.attn_b, 3 * d);
    K.row(n) = qkv.segment(d, d);
    Vc.row(n) = qkv.segment(2 * d, d);
    for (int hh = 0; hh < cfg.heads; ++hh) {
      const auto q = qkv.segment(hh * hd, hd);
      scores = (K.topRows(n + 1).middleCols(hh * hd, hd) * q.transpose()).transpose() * scale;
      const double mx = scores.maxCoeff();
      scores = (scores.array() - mx).exp().matrix();
      scores /= scores.sum();
      attn.segment(hh * hd, hd) = scores * Vc.topRows(n + 1).middleCols(hh * hd, hd);
    }
    x += attn * CMap(w + B.proj_w, d, d) + CRow(w + B.proj_b, d);
    layer_norm_row(x, w + B.ln2_g, w + B.ln2_b, h);
    RowVec u = h * CMap(w + B.fc1_w, d, f) + CRow(w + B.fc1_b, f);
    u = u.unaryExpr([](double v) { return gelu(v); });
    x += u * CMap(w + B.fc2_w, f, d) + CRow(w + B.fc2_b, d);
  }
  layer_norm_row(x, w + L.lnf_g, w + L.lnf_b, h);
  logits_ = (h * CMap(w + L.head_w, d, V) + CRow(w + L.head_b, V)).transpose();
  ++length_;
  return logits_;
}

}  // namespace reflect::policy
