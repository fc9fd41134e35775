#include "semsic/codec.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

namespace semsic::codec {

void CodecDims::validate() const {
  if (vocab < 2) throw Error("codec: vocabulary needs at least two entries");
  if (d == 0 || m == 0 || N == 0 || L == 0) throw Error("codec: widths and lengths must be positive");
  if (c == 0 || c % 2 != 0) throw Error("codec: compressed width c must be even and positive");
  if (c >= m) throw Error("codec: compressed width c must be smaller than m");
  if (heads == 0 || d % heads != 0) throw Error("codec: d must be divisible by the head count");
  if (dropout < 0.0 || dropout >= 1.0) throw Error("codec: dropout must lie in [0, 1)");
}

std::vector<double> positional_encoding(std::size_t position, std::size_t d) {
  if (d == 0) throw Error("positional_encoding: width must be positive");
  std::vector<double> p(d);
  const auto l = static_cast<double>(position);
  const auto dd = static_cast<double>(d);
  for (std::size_t z = 1; z <= d; ++z) {
    const auto zz = static_cast<double>(z);
    p[z - 1] = (z % 2 == 0) ? std::sin(l * std::pow(10.0, -4.0 * zz / dd))
                            : std::cos(l * std::pow(10.0, -4.0 * (zz - 1.0) / dd));
  }
  return p;
}

Matrix positional_table(std::size_t sentences, std::size_t N, std::size_t d) {
  Matrix out(sentences * N, d);
  for (std::size_t pos = 0; pos < N; ++pos) {
    const auto p = positional_encoding(pos + 1, d);
    for (std::size_t s = 0; s < sentences; ++s) std::copy(p.begin(), p.end(), out.row(s * N + pos));
  }
  return out;
}

// ---------------------------------------------------------------------------

EncoderStack::EncoderStack(std::size_t user_index, const CodecDims& dims, std::mt19937_64& rng)
    : user_(user_index), dims_(dims) {
  dims.validate();
  Matrix table(dims.vocab, dims.d);
  std::normal_distribution<double> nd(0.0, 1.0 / std::sqrt(static_cast<double>(dims.d)));
  for (auto& v : table.data) v = nd(rng);
  embedding_table = Tensor::parameter(std::move(table));
  for (std::size_t i = 0; i < dims.encoder_layers; ++i)
    layers_.emplace_back(dims.d, dims.heads, dims.ff(), rng);
  if (dims.m != dims.d) to_semantic_.emplace(dims.d, dims.m, rng);
  ae_in_ = nn::Linear(dims.m, dims.ae(), rng);
  ae_out_ = nn::Linear(dims.ae(), dims.c, rng);
}

Tensor EncoderStack::semantic(const corpus::Batch& batch, const nn::ForwardContext& ctx) const {
  if (batch.seq_len != dims_.N) throw Error("encoder: batch padded length does not match N");
  Tensor f = ag::embedding(embedding_table, batch.ids);
  f = ag::add(f, Tensor::constant(positional_table(batch.rows, dims_.N, dims_.d)));
  f = ctx.maybe_dropout(f);
  const auto mask = batch.content_mask();
  for (const auto& layer : layers_) f = layer(f, dims_.N, mask, ctx);
  if (to_semantic_) f = (*to_semantic_)(f);
  return f;
}

Tensor EncoderStack::compress(const Tensor& u) const { return ae_out_(ag::relu(ae_in_(u))); }

void EncoderStack::collect(const std::string& prefix, nn::ParamList& out) const {
  out.emplace_back(prefix + ".A", embedding_table);
  for (std::size_t i = 0; i < layers_.size(); ++i)
    layers_[i].collect(prefix + ".te" + std::to_string(i), out);
  if (to_semantic_) to_semantic_->collect(prefix + ".to_m", out);
  ae_in_.collect(prefix + ".ae0", out);
  ae_out_.collect(prefix + ".ae1", out);
}

DecoderStack::DecoderStack(std::size_t user_index, const CodecDims& dims, std::mt19937_64& rng)
    : user_(user_index), dims_(dims) {
  dims.validate();
  ad_in_ = nn::Linear(dims.c, dims.ae(), rng);
  ad_out_ = nn::Linear(dims.ae(), dims.m, rng);
  if (dims.m != dims.d) from_semantic_.emplace(dims.m, dims.d, rng);
  for (std::size_t i = 0; i < dims.decoder_layers; ++i)
    layers_.emplace_back(dims.d, dims.heads, dims.ff(), rng);
  vocab_projection = nn::Linear(dims.d, dims.vocab, rng, false).weight;
}

Tensor DecoderStack::decompress(const Tensor& r_hat) const {
  if (r_hat.cols() != dims_.c) throw Error("decoder: input width does not match c");
  return ad_out_(ag::relu(ad_in_(r_hat)));
}

Tensor DecoderStack::logits(const Tensor& u_hat, const nn::ForwardContext& ctx) const {
  if (u_hat.rows() % dims_.N != 0) throw Error("decoder: rows are not a multiple of N");
  Tensor memory = from_semantic_ ? (*from_semantic_)(u_hat) : u_hat;
  Tensor x = ag::add(memory, Tensor::constant(positional_table(u_hat.rows() / dims_.N, dims_.N, dims_.d)));
  for (const auto& layer : layers_) x = layer(x, memory, dims_.N, ctx);
  return ag::matmul(x, vocab_projection);
}

void DecoderStack::collect(const std::string& prefix, nn::ParamList& out) const {
  ad_in_.collect(prefix + ".ad0", out);
  ad_out_.collect(prefix + ".ad1", out);
  if (from_semantic_) from_semantic_->collect(prefix + ".from_m", out);
  for (std::size_t i = 0; i < layers_.size(); ++i)
    layers_[i].collect(prefix + ".td" + std::to_string(i), out);
  out.emplace_back(prefix + ".B", vocab_projection);
}

// ---------------------------------------------------------------------------

std::vector<double> FramedSymbols::scales() const {
  std::vector<double> out(inv_scale.rows());
  for (std::size_t f = 0; f < out.size(); ++f) out[f] = 1.0 / inv_scale.value().data[f];
  return out;
}

FramedSymbols frame_symbols(const Tensor& r, std::span<const int> lengths, const CodecDims& dims,
                            double power, bool allow_empty) {
  if (!(power > 0.0)) throw Error("frame_symbols: power must be positive");
  if (r.cols() != dims.c) throw Error("frame_symbols: feature width does not match c");
  const std::size_t sentences = lengths.size();
  if (r.rows() != sentences * dims.N) throw Error("frame_symbols: row count does not match lengths");
  if (sentences % dims.L != 0) throw Error("frame_symbols: sentence count is not a multiple of L");
  std::vector<double> keep(r.rows(), 0.0);
  for (std::size_t s = 0; s < sentences; ++s) {
    const auto live = std::min<std::size_t>(dims.N, static_cast<std::size_t>(std::max(lengths[s], 0)));
    for (std::size_t p = 0; p < live; ++p) keep[s * dims.N + p] = 1.0;
  }
  const std::size_t frames = sentences / dims.L;
  const Tensor x_check = ag::reshape(ag::scale_rows(r, keep), frames, 2 * dims.M());
  const double target = std::sqrt(static_cast<double>(dims.M()) * power);
  FramedSymbols out;
  out.x = ag::normalize_rows(x_check, target, allow_empty);
  out.inv_scale = ag::scale(ag::row_norms(x_check), 1.0 / target);
  return out;
}

Tensor unframe_symbols(const Tensor& frames, const Tensor& inv_scale, const CodecDims& dims) {
  if (frames.cols() != 2 * dims.M()) throw Error("unframe_symbols: frame length does not match M");
  return ag::reshape(ag::mul_rows(frames, inv_scale), frames.rows() * dims.L * dims.N, dims.c);
}

Tensor unframe_symbols(const Tensor& frames, std::span<const double> scales, const CodecDims& dims) {
  if (scales.size() != frames.rows()) throw Error("unframe_symbols: one scale per frame required");
  Matrix inv(scales.size(), 1);
  for (std::size_t i = 0; i < scales.size(); ++i) {
    if (!(scales[i] > 0.0)) throw Error("unframe_symbols: scale must be positive");
    inv.data[i] = 1.0 / scales[i];
  }
  return unframe_symbols(frames, Tensor::constant(std::move(inv)), dims);
}

std::vector<std::complex<double>> pack_symbols(std::span<const double> q) {
  if (q.size() % 2 != 0) throw Error("pack_symbols: length must be even");
  std::vector<std::complex<double>> out(q.size() / 2);
  for (std::size_t t = 0; t < out.size(); ++t) out[t] = {q[2 * t], q[2 * t + 1]};
  return out;
}

std::vector<std::complex<double>> normalize_power(std::span<const std::complex<double>> x_check,
                                                  double power, double* scale) {
  if (!(power > 0.0)) throw Error("normalize_power: power must be positive");
  double e = 0.0;
  for (const auto& v : x_check) e += std::norm(v);
  if (!(e > 0.0)) throw Error("zero-energy frame");
  const double s = std::sqrt(static_cast<double>(x_check.size()) * power) / std::sqrt(e);
  std::vector<std::complex<double>> out(x_check.begin(), x_check.end());
  for (auto& v : out) v *= s;
  if (scale) *scale = s;
  return out;
}

Matrix unpack_frame(std::span<const std::complex<double>> symbols, const CodecDims& dims) {
  if (symbols.size() != dims.M())
    throw Error("unpack_frame: expected " + std::to_string(dims.M()) + " symbols, got " +
                std::to_string(symbols.size()));
  Matrix out(dims.L * dims.N, dims.c);
  for (std::size_t t = 0; t < symbols.size(); ++t) {
    out.data[2 * t] = symbols[t].real();
    out.data[2 * t + 1] = symbols[t].imag();
  }
  return out;
}

std::vector<SymbolFrame> encode_text(const corpus::Batch& batch, const EncoderStack& enc,
                                     double power) {
  ag::NoGradGuard no_grad;
  const auto& dims = enc.dims();
  const Tensor r = enc.compress(enc.semantic(batch, {}));
  const auto framed = frame_symbols(r, batch.lengths, dims, power);
  const auto scales = framed.scales();
  const Tensor& x = framed.x;
  std::vector<SymbolFrame> frames(x.rows());
  for (std::size_t f = 0; f < x.rows(); ++f) {
    frames[f].user_index = enc.user_index();
    frames[f].power = power;
    frames[f].scale = scales[f];
    frames[f].symbols = pack_symbols(std::span<const double>(x.value().row(f), x.cols()));
  }
  return frames;
}

Matrix decode_features(const Tensor& r_hat, const DecoderStack& dec) {
  ag::NoGradGuard no_grad;
  return ag::softmax_rows(dec.logits(dec.decompress(r_hat), {})).value();
}

// ---------------------------------------------------------------------------

std::vector<int> harden(const Matrix& scores) {
  std::vector<int> ids(scores.rows);
  for (std::size_t r = 0; r < scores.rows; ++r) {
    const double* row = scores.row(r);
    std::size_t best = 0;
    for (std::size_t c = 1; c < scores.cols; ++c)
      if (row[c] > row[best]) best = c;
    ids[r] = static_cast<int>(best);
  }
  return ids;
}

std::vector<int> decoded_lengths(std::span<const int> ids, std::size_t N) {
  if (N == 0 || ids.size() % N != 0) throw Error("decoded_lengths: id count is not a multiple of N");
  std::vector<int> lengths(ids.size() / N);
  for (std::size_t s = 0; s < lengths.size(); ++s) {
    std::size_t p = 0;
    while (p < N && ids[s * N + p] != corpus::kEndId) ++p;
    lengths[s] = static_cast<int>(p);
  }
  return lengths;
}

std::vector<std::string> ids_to_sentences(std::span<const int> ids, std::size_t N,
                                          const corpus::Vocabulary& vocab) {
  if (N == 0 || ids.size() % N != 0) throw Error("ids_to_sentences: id count is not a multiple of N");
  std::vector<std::string> out;
  for (std::size_t s = 0; s < ids.size() / N; ++s)
    out.push_back(corpus::detokenize(ids.subspan(s * N, N), vocab));
  return out;
}

std::vector<std::string> harden_and_detokenize(const Matrix& scores, std::size_t N,
                                               const corpus::Vocabulary& vocab) {
  return ids_to_sentences(harden(scores), N, vocab);
}

std::vector<int> greedy_decode_with_repetition_penalty(const Matrix& scores, std::size_t N,
                                                       double penalty, std::optional<int> exempt_id) {
  if (!(penalty >= 1.0)) throw Error("repetition penalty must be >= 1");
  if (N == 0 || scores.rows % N != 0) throw Error("greedy decode: rows are not a multiple of N");
  std::vector<int> ids(scores.rows);
  std::vector<std::uint8_t> emitted(scores.cols);
  for (std::size_t s = 0; s < scores.rows / N; ++s) {
    std::fill(emitted.begin(), emitted.end(), 0);
    for (std::size_t p = 0; p < N; ++p) {
      const double* row = scores.row(s * N + p);
      std::size_t best = 0;
      double best_score = 0.0;
      for (std::size_t c = 0; c < scores.cols; ++c) {
        double v = row[c];
        if (emitted[c] && !(exempt_id && static_cast<int>(c) == *exempt_id)) v /= penalty;
        if (c == 0 || v > best_score) {
          best = c;
          best_score = v;
        }
      }
      ids[s * N + p] = static_cast<int>(best);
      emitted[best] = 1;
    }
  }
  return ids;
}

// ---------------------------------------------------------------------------

namespace {
constexpr char kMagic[8] = {'S', 'E', 'M', 'S', 'I', 'C', 'K', 'P'};

template <typename T>
void write_le(std::ostream& out, T v) {
  static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes little-endian hosts");
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw Error("checkpoint: truncated file");
  return v;
}
}  // namespace

void save_checkpoint(const nn::ParamList& params, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("checkpoint: cannot write " + tmp);
    out.write(kMagic, sizeof kMagic);
    write_le<std::uint32_t>(out, kCheckpointVersion);
    write_le<std::uint64_t>(out, params.size());
    for (const auto& [name, t] : params) {
      write_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      write_le<std::uint64_t>(out, t.rows());
      write_le<std::uint64_t>(out, t.cols());
      out.write(reinterpret_cast<const char*>(t.value().data.data()),
                static_cast<std::streamsize>(t.value().size() * sizeof(double)));
    }
    if (!out) throw Error("checkpoint: write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

void load_checkpoint(const nn::ParamList& params, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("checkpoint: cannot read " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) throw Error("checkpoint: bad magic in " + path.string());
  const auto version = read_le<std::uint32_t>(in);
  if (version != kCheckpointVersion)
    throw Error("checkpoint: unsupported version " + std::to_string(version));
  const auto count = read_le<std::uint64_t>(in);
  std::map<std::string, Matrix> entries;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = read_le<std::uint32_t>(in);
    std::string name(len, '\0');
    in.read(name.data(), len);
    const auto rows = read_le<std::uint64_t>(in);
    const auto cols = read_le<std::uint64_t>(in);
    Matrix m(rows, cols);
    in.read(reinterpret_cast<char*>(m.data.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!in) throw Error("checkpoint: truncated entry " + name);
    entries.emplace(std::move(name), std::move(m));
  }
  for (const auto& [name, t] : params) {
    auto it = entries.find(name);
    if (it == entries.end()) throw Error("checkpoint: missing parameter " + name);
    if (!it->second.same_shape(t.value())) throw Error("checkpoint: shape mismatch for " + name);
    Tensor h = t;
    h.mutable_value() = it->second;
  }
}

}  // namespace semsic::codec
