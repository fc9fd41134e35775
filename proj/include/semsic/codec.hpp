#pragma once
// Per-user semantic encoder (text -> complex symbols) and decoder
// (equalized symbols -> vocabulary scores) stacks.
//
// Tensors that carry one row per word use the layout [sentences * N, width],
// sentence-major.  Frames carry one row per frame of L sentences and 2M
// columns holding (re, im) pairs of the M channel symbols.

#include <complex>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "semsic/corpus.hpp"
#include "semsic/nn.hpp"
#include "semsic/tensor.hpp"

namespace semsic::codec {

using ag::Tensor;

struct CodecDims {
  std::size_t vocab = 0;     // |W|
  std::size_t d = 128;       // embedding width
  std::size_t m = 128;       // word-semantic width
  std::size_t c = 36;        // compressed width per word (even)
  std::size_t N = corpus::kMaxWords + 1;
  std::size_t L = 1;         // sentences per frame
  std::size_t encoder_layers = 4;
  std::size_t decoder_layers = 4;
  std::size_t heads = 8;
  std::size_t ff_hidden = 0;  // 0 -> 4d
  std::size_t ae_hidden = 0;  // 0 -> 2m
  double dropout = 0.1;

  std::size_t M() const { return c * N * L / 2; }
  std::size_t ff() const { return ff_hidden ? ff_hidden : 4 * d; }
  std::size_t ae() const { return ae_hidden ? ae_hidden : 2 * m; }
  void validate() const;
};

// Entry z (1-based) is sin(l * 10^(-4z/d)) for even z and cos(l * 10^(-4(z-1)/d)) for odd z.
std::vector<double> positional_encoding(std::size_t position, std::size_t d);
// Rows for positions 1..N repeated for each of `sentences` sentences.
Matrix positional_table(std::size_t sentences, std::size_t N, std::size_t d);

struct SymbolFrame {
  std::size_t user_index = 0;
  std::vector<std::complex<double>> symbols;  // length M
  double power = 1.0;
  double scale = 1.0;  // sqrt(M P) / ||unnormalized||, known to the receiver
};

class EncoderStack {
 public:
  EncoderStack() = default;
  EncoderStack(std::size_t user_index, const CodecDims& dims, std::mt19937_64& rng);

  std::size_t user_index() const { return user_; }
  const CodecDims& dims() const { return dims_; }

  // Word semantic vectors u = TE(A e + p) for every padded position, [rows*N x m].
  Tensor semantic(const corpus::Batch& batch, const nn::ForwardContext& ctx) const;
  // r = AE(u), [rows*N x c].
  Tensor compress(const Tensor& u) const;
  void collect(const std::string& prefix, nn::ParamList& out) const;

  Tensor embedding_table;  // A^T, [|W| x d]
 private:
  std::size_t user_ = 0;
  CodecDims dims_;
  std::vector<nn::EncoderLayer> layers_;
  std::optional<nn::Linear> to_semantic_;  // d -> m when m != d
  nn::Linear ae_in_, ae_out_;
};

class DecoderStack {
 public:
  DecoderStack() = default;
  DecoderStack(std::size_t user_index, const CodecDims& dims, std::mt19937_64& rng);

  std::size_t user_index() const { return user_; }
  const CodecDims& dims() const { return dims_; }

  // u_hat = AD(r_hat), [rows*N x m].
  Tensor decompress(const Tensor& r_hat) const;
  // Vocabulary logits B f_hat with f_hat = TD(u_hat), [rows*N x |W|].
  Tensor logits(const Tensor& u_hat, const nn::ForwardContext& ctx) const;
  void collect(const std::string& prefix, nn::ParamList& out) const;

  Tensor vocab_projection;  // B^T, [d x |W|]
 private:
  std::size_t user_ = 0;
  CodecDims dims_;
  nn::Linear ad_in_, ad_out_;
  std::optional<nn::Linear> from_semantic_;  // m -> d when m != d
  std::vector<nn::DecoderLayer> layers_;
};

// ---- framing ----

struct FramedSymbols {
  Tensor x;          // [F x 2M] normalized frames
  Tensor inv_scale;  // [F x 1], ||x_check|| / sqrt(M P); differentiable
  std::vector<double> scales() const;  // sqrt(M P) / ||x_check|| per frame
};

// Zeroes the positions at and after each sentence's length (the dummy words),
// concatenates L sentences per frame and scales each frame to power P.
// With allow_empty, frames without any live word stay zero instead of throwing.
FramedSymbols frame_symbols(const Tensor& r, std::span<const int> lengths, const CodecDims& dims,
                            double power, bool allow_empty = false);
// Inverse of frame_symbols: [F x 2M] -> [F*L*N x c], multiplying each frame by inv_scale.
Tensor unframe_symbols(const Tensor& frames, const Tensor& inv_scale, const CodecDims& dims);
// Same with constant per-frame scales as carried by SymbolFrame.
Tensor unframe_symbols(const Tensor& frames, std::span<const double> scales, const CodecDims& dims);

// q[2t-1] + j q[2t] packing of a real vector of even length.
std::vector<std::complex<double>> pack_symbols(std::span<const double> q);
// Scales x_check to average power P; throws "zero-energy frame" when ||x_check|| = 0.
std::vector<std::complex<double>> normalize_power(std::span<const std::complex<double>> x_check,
                                                  double power, double* scale = nullptr);
// Splits M symbols into an (L*N) x c matrix of reals.
Matrix unpack_frame(std::span<const std::complex<double>> symbols, const CodecDims& dims);

// Full transmit chain for a batch; one frame per L sentences.  Runs without gradients.
std::vector<SymbolFrame> encode_text(const corpus::Batch& batch, const EncoderStack& enc,
                                     double power);

// Softmax probabilities for every word position, [rows*N x |W|].
Matrix decode_features(const Tensor& r_hat, const DecoderStack& dec);

// ---- hard decisions ----

// Argmax per row with ties toward the lowest index.
std::vector<int> harden(const Matrix& scores);
// Argmax decode truncated at the first end marker, one string per sentence.
std::vector<std::string> harden_and_detokenize(const Matrix& scores, std::size_t N,
                                               const corpus::Vocabulary& vocab);
// Left-to-right greedy decision where scores of ids already emitted in the
// sentence are divided by `penalty`.  exempt_id (normally the end marker) is
// never penalized.  Returns N ids per sentence.
std::vector<int> greedy_decode_with_repetition_penalty(const Matrix& scores, std::size_t N,
                                                       double penalty,
                                                       std::optional<int> exempt_id = corpus::kEndId);
// Word count before the first end marker for each sentence of a flat id list.
std::vector<int> decoded_lengths(std::span<const int> ids, std::size_t N);
std::vector<std::string> ids_to_sentences(std::span<const int> ids, std::size_t N,
                                          const corpus::Vocabulary& vocab);

// ---- checkpoints ----

// Binary archive: "SEMSICKP", u32 version, u64 entry count, then per entry
// u32 name length, name bytes, u64 rows, u64 cols, rows*cols little-endian doubles.
inline constexpr std::uint32_t kCheckpointVersion = 1;
void save_checkpoint(const nn::ParamList& params, const std::filesystem::path& path);
// Loads into existing tensors by name; every parameter must be present with matching shape.
void load_checkpoint(const nn::ParamList& params, const std::filesystem::path& path);

}  // namespace semsic::codec
