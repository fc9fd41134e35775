#include "semsic/nn.hpp"

#include <cmath>
#include <cstring>

namespace semsic::nn {
namespace {

Matrix xavier(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> u(-bound, bound);
  Matrix m(in, out);
  for (auto& v : m.data) v = u(rng);
  return m;
}

}  // namespace

Tensor ForwardContext::maybe_dropout(const Tensor& x) const {
  if (!training || dropout <= 0.0 || rng == nullptr) return x;
  return ag::dropout(x, dropout, *rng);
}

Linear::Linear(std::size_t in, std::size_t out, std::mt19937_64& rng, bool with_bias)
    : weight(Tensor::parameter(xavier(in, out, rng))) {
  if (with_bias) bias = Tensor::parameter(Matrix(1, out));
}

void Linear::collect(const std::string& prefix, ParamList& out) const {
  out.emplace_back(prefix + ".weight", weight);
  if (bias.defined()) out.emplace_back(prefix + ".bias", bias);
}

LayerNorm::LayerNorm(std::size_t width)
    : gamma(Tensor::parameter(Matrix(1, width, 1.0))), beta(Tensor::parameter(Matrix(1, width))) {}

void LayerNorm::collect(const std::string& prefix, ParamList& out) const {
  out.emplace_back(prefix + ".gamma", gamma);
  out.emplace_back(prefix + ".beta", beta);
}

MultiHeadAttention::MultiHeadAttention(std::size_t width, std::size_t h, std::mt19937_64& rng)
    : wq(width, width, rng), wk(width, width, rng), wv(width, width, rng), wo(width, width, rng),
      heads(h) {
  if (h == 0 || width % h != 0) throw Error("attention width must be divisible by head count");
}

Tensor MultiHeadAttention::operator()(const Tensor& query, const Tensor& memory,
                                      std::size_t seq_len,
                                      std::span<const std::uint8_t> key_valid) const {
  const Tensor q = wq(query);
  const Tensor k = wk(memory);
  const Tensor v = wv(memory);
  return wo(ag::attention(q, k, v, heads, seq_len, key_valid));
}

void MultiHeadAttention::collect(const std::string& prefix, ParamList& out) const {
  wq.collect(prefix + ".wq", out);
  wk.collect(prefix + ".wk", out);
  wv.collect(prefix + ".wv", out);
  wo.collect(prefix + ".wo", out);
}

FeedForward::FeedForward(std::size_t width, std::size_t hidden, std::mt19937_64& rng)
    : expand(width, hidden, rng), project(hidden, width, rng) {}

Tensor FeedForward::operator()(const Tensor& x, const ForwardContext& ctx) const {
  return project(ctx.maybe_dropout(ag::relu(expand(x))));
}

void FeedForward::collect(const std::string& prefix, ParamList& out) const {
  expand.collect(prefix + ".expand", out);
  project.collect(prefix + ".project", out);
}

EncoderLayer::EncoderLayer(std::size_t width, std::size_t heads, std::size_t hidden,
                           std::mt19937_64& rng)
    : attn(width, heads, rng), norm1(width), norm2(width), ffn(width, hidden, rng) {}

Tensor EncoderLayer::operator()(const Tensor& x, std::size_t seq_len,
                                std::span<const std::uint8_t> key_valid,
                                const ForwardContext& ctx) const {
  Tensor h = norm1(ag::add(x, ctx.maybe_dropout(attn(x, x, seq_len, key_valid))));
  return norm2(ag::add(h, ctx.maybe_dropout(ffn(h, ctx))));
}

void EncoderLayer::collect(const std::string& prefix, ParamList& out) const {
  attn.collect(prefix + ".attn", out);
  norm1.collect(prefix + ".norm1", out);
  norm2.collect(prefix + ".norm2", out);
  ffn.collect(prefix + ".ffn", out);
}

DecoderLayer::DecoderLayer(std::size_t width, std::size_t heads, std::size_t hidden,
                           std::mt19937_64& rng)
    : self_attn(width, heads, rng), cross_attn(width, heads, rng), norm1(width), norm2(width),
      norm3(width), ffn(width, hidden, rng) {}

Tensor DecoderLayer::operator()(const Tensor& x, const Tensor& memory, std::size_t seq_len,
                                const ForwardContext& ctx) const {
  Tensor h = norm1(ag::add(x, ctx.maybe_dropout(self_attn(x, x, seq_len))));
  h = norm2(ag::add(h, ctx.maybe_dropout(cross_attn(h, memory, seq_len))));
  return norm3(ag::add(h, ctx.maybe_dropout(ffn(h, ctx))));
}

void DecoderLayer::collect(const std::string& prefix, ParamList& out) const {
  self_attn.collect(prefix + ".self_attn", out);
  cross_attn.collect(prefix + ".cross_attn", out);
  norm1.collect(prefix + ".norm1", out);
  norm2.collect(prefix + ".norm2", out);
  norm3.collect(prefix + ".norm3", out);
  ffn.collect(prefix + ".ffn", out);
}

Conv1d::Conv1d(std::size_t in, std::size_t out, std::mt19937_64& rng) : taps(3 * in, out, rng) {}

Tensor Conv1d::operator()(const Tensor& x, std::size_t seq_len) const {
  return taps(ag::im2col_seq(x, seq_len));
}

void Conv1d::collect(const std::string& prefix, ParamList& out) const {
  taps.collect(prefix + ".taps", out);
}

ConvTranspose1d::ConvTranspose1d(std::size_t in, std::size_t out, std::mt19937_64& rng)
    : weight(Tensor::parameter(xavier(in, 3 * out, rng))), bias(Tensor::parameter(Matrix(1, out))) {}

Tensor ConvTranspose1d::operator()(const Tensor& x, std::size_t seq_len) const {
  return ag::add_row(ag::col2im_seq(ag::matmul(x, weight), seq_len), bias);
}

void ConvTranspose1d::collect(const std::string& prefix, ParamList& out) const {
  out.emplace_back(prefix + ".weight", weight);
  out.emplace_back(prefix + ".bias", bias);
}

Gdn::Gdn(std::size_t channels, bool inv) : inverse(inv) {
  beta_raw = Tensor::parameter(Matrix(1, channels, 1.0));
  Matrix g(channels, channels);
  // gamma = gamma_raw^2 starts at 0.1 * identity
  for (std::size_t i = 0; i < channels; ++i) g(i, i) = std::sqrt(0.1);
  gamma_raw = Tensor::parameter(std::move(g));
}

void Gdn::collect(const std::string& prefix, ParamList& out) const {
  out.emplace_back(prefix + ".beta", beta_raw);
  out.emplace_back(prefix + ".gamma", gamma_raw);
}

void AdamConfig::validate() const {
  if (!(learning_rate > 0.0) || !(epsilon > 0.0) || weight_decay < 0.0)
    throw Error("optimizer: learning rate and epsilon must be positive, weight decay non-negative");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
    throw Error("optimizer: betas must lie in (0, 1)");
}

Adam::Adam(ParamList params, AdamConfig config) : params_(std::move(params)), config_(config) {
  config_.validate();
  for (const auto& [name, t] : params_) {
    m_.emplace_back(t.rows(), t.cols());
    v_.emplace_back(t.rows(), t.cols());
  }
}

void Adam::step() {
  ++step_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  for (std::size_t p = 0; p < params_.size(); ++p) {
    Tensor t = params_[p].second;
    if (!t.requires_grad() || t.grad().data.empty()) continue;
    auto& value = t.mutable_value().data;
    const auto& grad = t.grad().data;
    auto& m = m_[p].data;
    auto& v = v_[p].data;
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i] + config_.weight_decay * value[i];
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
      value[i] -= config_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.epsilon);
    }
  }
  zero_grad();
}

void Adam::zero_grad() {
  for (auto& [name, t] : params_) t.zero_grad();
}

void set_trainable(const ParamList& params, bool trainable) {
  for (const auto& [name, t] : params) {
    Tensor h = t;
    h.set_requires_grad(trainable);
    if (!trainable) h.zero_grad();
  }
}

std::uint64_t checksum(const ParamList& params) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& [name, t] : params) {
    mix(name.data(), name.size());
    mix(t.value().data.data(), t.value().data.size() * sizeof(double));
  }
  return h;
}

std::size_t parameter_count(const ParamList& params) {
  std::size_t n = 0;
  for (const auto& [name, t] : params) n += t.value().size();
  return n;
}

}  // namespace semsic::nn
