#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "gradcheck.hpp"
#include "semsic/codec.hpp"

using namespace semsic;
using namespace semsic::codec;

namespace {

CodecDims tiny_dims(std::size_t vocab) {
  CodecDims d;
  d.vocab = vocab;
  d.d = d.m = 8;
  d.c = 4;
  d.N = 6;
  d.encoder_layers = d.decoder_layers = 1;
  d.heads = 2;
  d.dropout = 0.0;
  return d;
}

corpus::Batch tiny_batch(std::size_t N) {
  corpus::Batch b;
  b.rows = 2;
  b.seq_len = N;
  b.ids = std::vector<int>(2 * N, 0);
  b.lengths = {4, 3};
  const int s0[] = {2, 3, 4, 2};
  const int s1[] = {5, 3, 2};
  for (int p = 0; p < 4; ++p) b.ids[p] = s0[p];
  for (int p = 0; p < 3; ++p) b.ids[N + p] = s1[p];
  b.source_rows = {0, 1};
  return b;
}

}  // namespace

TEST_CASE("positional encoding matches the high-precision oracle") {
  auto p = positional_encoding(1, 4);
  CHECK(std::abs(p[0] - std::cos(1.0)) < 1e-12);
  CHECK(std::abs(p[1] - 0.0099998333341666646825) < 1e-12);
  CHECK(std::abs(p[2] - 0.99995000041666527778) < 1e-12);
  CHECK(std::abs(p[3] - 0.000099999999833333333417) < 1e-12);
  auto q = positional_encoding(7, 6);
  const double q_ref[] = {0.75390225434330463814, 0.31922465060631486034, 0.94767907143994490635,
                          0.015080471170057416143, 0.999886283228892518, 0.00069999994283333473392};
  for (int i = 0; i < 6; ++i) CHECK(std::abs(q[i] - q_ref[i]) < 1e-12);
  auto r = positional_encoding(21, 128);
  CHECK(std::abs(r[0] + 0.54772926022426842138) < 1e-12);
  CHECK(std::abs(r[1] + 0.61651217970340744631) < 1e-12);
  CHECK(std::abs(r[2] - 0.78734537039176996967) < 1e-12);
  CHECK(std::abs(r[63] - 0.20845989984609957061) < 1e-12);
  CHECK(std::abs(r[64] - 0.97803091472414824492) < 1e-12);
  CHECK(std::abs(r[126] - 0.99999705958668308608) < 1e-12);
  CHECK(std::abs(r[127] - 0.0020999984565003403417) < 1e-12);
  auto z = positional_encoding(0, 6);
  for (int i = 0; i < 6; ++i) CHECK(z[i] == (i % 2 == 0 ? 1.0 : 0.0));
}

TEST_CASE("dims validation") {
  CodecDims d;
  d.vocab = 10;
  CHECK(d.M() == 36 * 21 / 2);
  CHECK_NOTHROW(d.validate());
  d.c = 35;
  CHECK_THROWS_AS(d.validate(), Error);
  d.c = 128;
  CHECK_THROWS_AS(d.validate(), Error);
}

TEST_CASE("packing, normalization and unpacking") {
  const std::vector<double> q{1, 0, 0, 1};
  const auto s = pack_symbols(q);
  REQUIRE(s.size() == 2);
  CHECK(s[0] == std::complex<double>(1, 0));
  CHECK(s[1] == std::complex<double>(0, 1));

  double scale = 0;
  const std::vector<std::complex<double>> x{{3, 4}};
  const auto n = normalize_power(x, 1.0, &scale);
  CHECK(std::abs(n[0] - std::complex<double>(0.6, 0.8)) < 1e-15);
  CHECK(scale == doctest::Approx(0.2));
  const std::vector<std::complex<double>> zero(3);
  CHECK_THROWS_WITH_AS(normalize_power(zero, 1.0), "zero-energy frame", Error);

  CodecDims d;
  d.vocab = 4;
  d.d = d.m = 4;
  d.c = 2;
  d.N = 1;
  d.heads = 1;
  const std::vector<std::complex<double>> one{{1, 2}};
  const auto m = unpack_frame(one, d);
  CHECK(m.rows == 1);
  CHECK(m.cols == 2);
  CHECK(m.data == std::vector<double>{1, 2});
  const std::vector<std::complex<double>> two{{1, 2}, {3, 4}};
  CHECK_THROWS_AS(unpack_frame(two, d), Error);

  std::mt19937_64 rng(3);
  d.N = 5;
  d.L = 2;
  const auto rq = testing::random_matrix(1, 2 * d.M(), rng);
  const auto sym = pack_symbols(rq.data);
  CHECK(unpack_frame(sym, d).data == rq.data);
}

TEST_CASE("encode_text zero-pads dummy words and meets the power constraint") {
  std::mt19937_64 rng(4);
  CodecDims d = tiny_dims(7);
  EncoderStack enc(1, d, rng);
  const auto batch = tiny_batch(d.N);
  for (double power : {0.25, 1.0, 7.5}) {
    const auto frames = encode_text(batch, enc, power);
    REQUIRE(frames.size() == 2);
    for (std::size_t f = 0; f < 2; ++f) {
      const auto& x = frames[f].symbols;
      REQUIRE(x.size() == d.M());
      double e = 0.0;
      for (auto v : x) e += std::norm(v);
      CHECK(std::abs(e / static_cast<double>(d.M()) - power) / power <= 1e-9);
      const std::size_t live = static_cast<std::size_t>(batch.lengths[f]) * d.c / 2;
      for (std::size_t t = live; t < x.size(); ++t) CHECK(x[t] == std::complex<double>(0, 0));
      CHECK(std::abs(x[0]) > 0.0);
    }
  }
}

TEST_CASE("frame and unframe invert each other given the scale") {
  std::mt19937_64 rng(5);
  CodecDims d = tiny_dims(7);
  d.L = 2;
  auto r = ag::Tensor::constant(testing::random_matrix(4 * d.N, d.c, rng));
  const int n = static_cast<int>(d.N);
  const std::vector<int> lengths{n, n, n, n};
  const auto framed = frame_symbols(r, lengths, d, 2.0);
  CHECK(framed.x.rows() == 2);
  CHECK(framed.x.cols() == 2 * d.M());
  const auto back = unframe_symbols(framed.x, framed.inv_scale, d);
  const auto back2 = unframe_symbols(framed.x, framed.scales(), d);
  for (std::size_t i = 0; i < r.value().size(); ++i) {
    CHECK(back.value().data[i] == doctest::Approx(r.value().data[i]).epsilon(1e-12));
    CHECK(back2.value().data[i] == doctest::Approx(r.value().data[i]).epsilon(1e-12));
  }
}

TEST_CASE("decode_features yields probabilities and is deterministic") {
  auto build = [] {
    std::mt19937_64 rng(6);
    return DecoderStack(1, tiny_dims(9), rng);
  };
  const auto dec = build();
  std::mt19937_64 rng(7);
  auto r_hat = ag::Tensor::constant(testing::random_matrix(2 * 6, 4, rng));
  const auto p = decode_features(r_hat, dec);
  CHECK(p.rows == 12);
  CHECK(p.cols == 9);
  for (std::size_t r = 0; r < p.rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < p.cols; ++c) {
      CHECK(p(r, c) >= 0.0);
      CHECK(p(r, c) <= 1.0);
      s += p(r, c);
    }
    CHECK(std::abs(s - 1.0) < 1e-6);
  }
  CHECK(decode_features(r_hat, build()).data == p.data);
}

TEST_CASE("hard decisions") {
  Matrix s(1, 3, std::vector<double>{0.1, 0.7, 0.2});
  CHECK(harden(s) == std::vector<int>{1});
  Matrix tie(1, 5, std::vector<double>{0.1, 0.1, 0.3, 0.2, 0.3});
  CHECK(harden(tie) == std::vector<int>{2});

  corpus::Vocabulary vocab(std::vector<std::string>{"<end>", "<unk>", "w2", "w3", "w4", "w5", "w6", "w7", "w8", "w9"});
  const std::vector<int> ids{5, 9, 0, 7};
  CHECK(ids_to_sentences(ids, 4, vocab) == std::vector<std::string>{"w5 w9"});
  CHECK(decoded_lengths(ids, 4) == std::vector<int>{2});

  Matrix onehot(4, 10, 0.0);
  for (std::size_t r = 0; r < 4; ++r) onehot(r, static_cast<std::size_t>(ids[r])) = 1.0;
  CHECK(harden_and_detokenize(onehot, 4, vocab) == std::vector<std::string>{"w5 w9"});
}

TEST_CASE("greedy decode with repetition penalty") {
  Matrix s(2, 2, std::vector<double>{0.6, 0.4, 0.6, 0.4});
  CHECK(greedy_decode_with_repetition_penalty(s, 2, 2.0, std::nullopt) == std::vector<int>{0, 1});
  CHECK(greedy_decode_with_repetition_penalty(s, 2, 2.0) == std::vector<int>{0, 0});
  std::mt19937_64 rng(8);
  Matrix r = testing::random_matrix(12, 6, rng);
  CHECK(greedy_decode_with_repetition_penalty(r, 4, 1.0) == harden(r));
  CHECK_THROWS_AS(greedy_decode_with_repetition_penalty(r, 4, 0.5), Error);
  Matrix t(3, 3, std::vector<double>{0.1, 0.5, 0.4, 0.1, 0.5, 0.45, 0.1, 0.5, 0.45});
  CHECK(greedy_decode_with_repetition_penalty(t, 3, 1.2) == std::vector<int>{1, 2, 1});
}

TEST_CASE("end-to-end gradients for a two-word micro model") {
  CodecDims d;
  d.vocab = 2;
  d.d = d.m = 4;
  d.c = 2;
  d.N = 3;
  d.encoder_layers = d.decoder_layers = 1;
  d.heads = 2;
  d.dropout = 0.0;
  std::mt19937_64 rng(9);
  EncoderStack enc(1, d, rng);
  DecoderStack dec(1, d, rng);
  corpus::Batch b;
  b.rows = 2;
  b.seq_len = 3;
  b.ids = {1, 1, 0, 1, 0, 0};
  b.lengths = {2, 1};
  b.source_rows = {0, 1};
  const std::vector<double> weight{1, 1, 1, 1, 1, 0};
  auto loss = [&] {
    const auto r = enc.compress(enc.semantic(b, {}));
    const auto framed = frame_symbols(r, b.lengths, d, 1.0);
    const auto r_hat = unframe_symbols(framed.x, framed.inv_scale, d);
    return ag::softmax_bce_loss(dec.logits(dec.decompress(r_hat), {}), b.ids, weight, 2.0);
  };
  CHECK(testing::max_grad_error(loss, {enc.embedding_table, dec.vocab_projection}, 1e-6) < 1e-4);
  nn::ParamList all;
  enc.collect("e", all);
  dec.collect("d", all);
  // Zero-initialized biases sit on ReLU kinks for the all-zero padded rows.
  std::normal_distribution<double> jitter(0.0, 0.1);
  for (auto& [name, t] : all)
    if (name.ends_with("bias"))
      for (auto& v : t.mutable_value().data) v += jitter(rng);
  for (auto& [name, t] : all) {
    CAPTURE(name);
    CHECK(testing::max_grad_error(loss, {t}, 1e-6) < 1e-4);
  }
}

TEST_CASE("checkpoint round trip is bit exact") {
  std::mt19937_64 rng(10);
  CodecDims d = tiny_dims(11);
  EncoderStack enc(1, d, rng);
  DecoderStack dec(1, d, rng);
  nn::ParamList params;
  enc.collect("u1.enc", params);
  dec.collect("u1.dec", params);
  const auto path = std::filesystem::temp_directory_path() / "semsic_ckpt_test.bin";
  save_checkpoint(params, path);
  const auto sum = nn::checksum(params);

  std::mt19937_64 other(99);
  EncoderStack enc2(1, d, other);
  DecoderStack dec2(1, d, other);
  nn::ParamList params2;
  enc2.collect("u1.enc", params2);
  dec2.collect("u1.dec", params2);
  CHECK(nn::checksum(params2) != sum);
  load_checkpoint(params2, path);
  CHECK(nn::checksum(params2) == sum);

  CodecDims bigger = d;
  bigger.vocab = 12;
  DecoderStack dec3(1, bigger, other);
  nn::ParamList params3;
  dec3.collect("u1.dec", params3);
  CHECK_THROWS_AS(load_checkpoint(params3, path), Error);
  std::filesystem::remove(path);
}
