#pragma once
// Trainable building blocks: dense layers, Transformer layers, sequence
// convolutions with (inverse) generalized divisive normalization, and Adam.

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "semsic/tensor.hpp"

namespace semsic::nn {

using ag::Tensor;
using ParamList = std::vector<std::pair<std::string, Tensor>>;

struct ForwardContext {
  bool training = false;
  double dropout = 0.0;
  std::mt19937_64* rng = nullptr;

  Tensor maybe_dropout(const Tensor& x) const;
};

struct Linear {
  Tensor weight;  // [in x out]
  Tensor bias;    // [1 x out], may be undefined

  Linear() = default;
  Linear(std::size_t in, std::size_t out, std::mt19937_64& rng, bool with_bias = true);
  Tensor operator()(const Tensor& x) const { return ag::linear(x, weight, bias); }
  void collect(const std::string& prefix, ParamList& out) const;
};

struct LayerNorm {
  Tensor gamma, beta;
  LayerNorm() = default;
  explicit LayerNorm(std::size_t width);
  Tensor operator()(const Tensor& x) const { return ag::layer_norm(x, gamma, beta); }
  void collect(const std::string& prefix, ParamList& out) const;
};

struct MultiHeadAttention {
  Linear wq, wk, wv, wo;
  std::size_t heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(std::size_t width, std::size_t heads, std::mt19937_64& rng);
  Tensor operator()(const Tensor& query, const Tensor& memory, std::size_t seq_len,
                    std::span<const std::uint8_t> key_valid = {}) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

struct FeedForward {
  Linear expand, project;
  FeedForward() = default;
  FeedForward(std::size_t width, std::size_t hidden, std::mt19937_64& rng);
  Tensor operator()(const Tensor& x, const ForwardContext& ctx) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

// Post-norm encoder layer: x = LN(x + MHA(x)); x = LN(x + FFN(x)).
struct EncoderLayer {
  MultiHeadAttention attn;
  LayerNorm norm1, norm2;
  FeedForward ffn;

  EncoderLayer() = default;
  EncoderLayer(std::size_t width, std::size_t heads, std::size_t hidden, std::mt19937_64& rng);
  Tensor operator()(const Tensor& x, std::size_t seq_len, std::span<const std::uint8_t> key_valid,
                    const ForwardContext& ctx) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

// Decoder layer with self-attention, cross-attention over a memory sequence,
// and a feed-forward block, each followed by a residual layer norm.
struct DecoderLayer {
  MultiHeadAttention self_attn, cross_attn;
  LayerNorm norm1, norm2, norm3;
  FeedForward ffn;

  DecoderLayer() = default;
  DecoderLayer(std::size_t width, std::size_t heads, std::size_t hidden, std::mt19937_64& rng);
  Tensor operator()(const Tensor& x, const Tensor& memory, std::size_t seq_len,
                    const ForwardContext& ctx) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

// Kernel-3, stride-1, zero-padded convolution along each sequence.
struct Conv1d {
  Linear taps;  // [3*in x out]
  Conv1d() = default;
  Conv1d(std::size_t in, std::size_t out, std::mt19937_64& rng);
  Tensor operator()(const Tensor& x, std::size_t seq_len) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

// Transposed counterpart of Conv1d: each input row scatters into its neighbours.
struct ConvTranspose1d {
  Tensor weight;  // [in x 3*out]
  Tensor bias;    // [1 x out]
  ConvTranspose1d() = default;
  ConvTranspose1d(std::size_t in, std::size_t out, std::mt19937_64& rng);
  Tensor operator()(const Tensor& x, std::size_t seq_len) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

struct Gdn {
  Tensor beta_raw;   // [1 x C]
  Tensor gamma_raw;  // [C x C]
  bool inverse = false;
  Gdn() = default;
  Gdn(std::size_t channels, bool inverse);
  Tensor operator()(const Tensor& x) const { return ag::gdn(x, beta_raw, gamma_raw, inverse); }
  void collect(const std::string& prefix, ParamList& out) const;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double epsilon = 1e-8;
  double weight_decay = 5e-4;

  void validate() const;
};

// Adam with L2 weight decay folded into the gradient.
class Adam {
 public:
  Adam(ParamList params, AdamConfig config);
  // Applies one update to every parameter that currently holds a gradient,
  // then clears the gradients.
  void step();
  void zero_grad();
  std::size_t steps() const { return step_; }
  const ParamList& params() const { return params_; }

 private:
  ParamList params_;
  AdamConfig config_;
  std::vector<Matrix> m_, v_;
  std::size_t step_ = 0;
};

void set_trainable(const ParamList& params, bool trainable);
// FNV-1a over the raw bytes of every parameter value; used for freeze checks.
std::uint64_t checksum(const ParamList& params);
std::size_t parameter_count(const ParamList& params);

}  // namespace semsic::nn
