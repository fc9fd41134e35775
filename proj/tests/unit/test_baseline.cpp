#include <doctest.h>

#include <cmath>
#include <random>

#include "semsic/baseline.hpp"
#include "semsic/corpus.hpp"

using namespace semsic;
using namespace semsic::baseline;

TEST_CASE("huffman code lengths for a dyadic source") {
  auto cb = HuffmanCodebook::build({{"a", 0.5}, {"b", 0.25}, {"c", 0.25}});
  CHECK(cb.code("a").size() == 1);
  CHECK(cb.code("b").size() == 2);
  CHECK(cb.code("c").size() == 2);
  std::map<std::string, double> w{{"a", 0.5}, {"b", 0.25}, {"c", 0.25}};
  CHECK(cb.average_length(w) == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(entropy_bits(w) == doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("huffman single word vocabulary") {
  auto cb = HuffmanCodebook::build({{"only", 3.0}});
  CHECK(cb.code("only") == Bits{0});
  std::vector<std::string> t{"only", "only"};
  CHECK(cb.decode(cb.encode(t)) == t);
}

TEST_CASE("huffman prefix-free and lossless on corpus text") {
  auto pc = corpus::generate_synthetic_corpus(200, 2, 7);
  auto sentences = pc.all_sentences();
  auto cb = HuffmanCodebook::from_sentences(sentences);
  std::vector<std::string> words;
  std::map<std::string, double> counts;
  for (const auto& s : sentences) {
    for (auto& w : corpus::normalize_words(s)) counts[w] += 1.0;
    counts[std::string(corpus::kEndToken)] += 1.0;
  }
  for (const auto& [a, fa] : counts)
    for (const auto& [b, fb] : counts) {
      if (a == b) continue;
      const auto& ca = cb.code(a);
      const auto& cbb = cb.code(b);
      if (ca.size() <= cbb.size()) CHECK_FALSE(std::equal(ca.begin(), ca.end(), cbb.begin()));
    }
  for (std::size_t i = 0; i < 50; ++i) {
    auto t = corpus::normalize_words(sentences[i]);
    CHECK(cb.decode(cb.encode(t)) == t);
  }
  const double h = entropy_bits(counts);
  const double avg = cb.average_length(counts);
  CHECK(avg >= h - 1e-12);
  CHECK(avg < h + 1.0);
}

TEST_CASE("huffman errors and truncation") {
  auto cb = HuffmanCodebook::build({{"a", 0.5}, {"b", 0.25}, {"c", 0.25}});
  std::vector<std::string> bad{"zzz"};
  CHECK_THROWS(cb.encode(bad));
  std::vector<std::string> t{"b", "a", "c"};
  auto bits = cb.encode(t);
  bits.pop_back();
  CHECK(cb.decode(bits) == std::vector<std::string>{"b", "a"});
}

TEST_CASE("qam64 constellation") {
  const auto& pts = qam64_points();
  REQUIRE(pts.size() == 64);
  double e = 0.0;
  for (auto p : pts) e += std::norm(p);
  CHECK(std::abs(e / 64.0 - 1.0) < 1e-12);
  // Grid neighbors differ in exactly one bit.
  const double dmin = qam64_min_distance();
  CHECK(dmin == doctest::Approx(2.0 / std::sqrt(42.0)).epsilon(1e-15));
  for (int a = 0; a < 64; ++a)
    for (int b = a + 1; b < 64; ++b) {
      const double d = std::abs(pts[a] - pts[b]);
      CHECK(d >= dmin - 1e-12);
      if (std::abs(d - dmin) < 1e-9) CHECK(__builtin_popcount(a ^ b) == 1);
    }
}

TEST_CASE("qam64 round trip and noise tolerance") {
  std::mt19937_64 rng(3);
  Bits bits(600);
  for (auto& b : bits) b = rng() & 1;
  auto sym = qam64_modulate(bits);
  CHECK(sym.size() == 100);
  CHECK(qam64_demodulate(sym) == bits);
  // Displacement below half the minimum distance on each axis keeps every bit.
  const double r = 0.499 * qam64_min_distance();
  std::uniform_real_distribution<double> u(-r, r);
  for (auto& s : sym) s += cplx(u(rng), u(rng));
  CHECK(qam64_demodulate(sym) == bits);
  // Short input is zero padded.
  Bits few{1, 0, 1};
  auto one = qam64_modulate(few);
  REQUIRE(one.size() == 1);
  CHECK(qam64_demodulate(one) == Bits{1, 0, 1, 0, 0, 0});
}

TEST_CASE("repetition code corrects one error per triple") {
  Bits b{1, 0, 1, 1};
  auto c = repetition_encode(b);
  CHECK(c.size() == 12);
  c[0] ^= 1;
  c[4] ^= 1;
  c[11] ^= 1;
  CHECK(repetition_decode(c) == b);
}

namespace {

std::vector<cplx> superpose(const std::vector<std::vector<cplx>>& xs, const std::vector<channel::UserLink>& links) {
  std::vector<cplx> y(xs[0].size());
  for (std::size_t k = 0; k < xs.size(); ++k)
    for (std::size_t t = 0; t < y.size(); ++t) y[t] += links[k].h * xs[k][t];
  return y;
}

}  // namespace

TEST_CASE("classical SIC noise-free") {
  auto pc = corpus::generate_synthetic_corpus(50, 3, 11);
  auto cb = HuffmanCodebook::from_sentences(pc.all_sentences());
  std::vector<HuffmanCodebook> books{cb};
  ClassicalConfig cfg;

  SUBCASE("single user") {
    for (bool rep : {false, true}) {
      cfg.repetition = rep;
      const auto& s = pc.lines[0][0];
      std::vector<channel::UserLink> links{{1, 4.0, cplx(0.3, -0.8)}};
      auto y = superpose({classical_transmit(s, cb, cfg, 4.0)}, links);
      auto out = classical_sic_receive(y, links, books, cfg);
      CHECK(out[0] == corpus::normalize_sentence(s));
    }
  }
  SUBCASE("two users 20 dB apart") {
    // Weak user amplitude after equalization by the strong one: 0.1 * 7/sqrt(42)
    // per axis, below the half distance 1/sqrt(42).
    CHECK(0.1 * 7.0 < 1.0);
    std::vector<channel::UserLink> links{{1, 1.0, 1.0}, {2, 100.0, 1.0}};
    for (std::size_t i = 0; i < 10; ++i) {
      std::vector<std::string> s{pc.lines[i][0], pc.lines[i][1]};
      auto y = superpose({classical_transmit(s[0], cb, cfg, 1.0), classical_transmit(s[1], cb, cfg, 100.0)}, links);
      auto out = classical_sic_receive(y, links, books, cfg);
      CHECK(out[0] == corpus::normalize_sentence(s[0]));
      CHECK(out[1] == corpus::normalize_sentence(s[1]));
    }
  }
  SUBCASE("three users with separated powers, per-user codebooks") {
    std::vector<HuffmanCodebook> per{cb, cb, cb};
    std::vector<channel::UserLink> links{{1, 1e4, 1.0}, {2, 1e2, cplx(0, 1)}, {3, 1.0, -1.0}};
    std::vector<std::string> s{pc.lines[3][0], pc.lines[3][1], pc.lines[3][2]};
    std::vector<std::vector<cplx>> xs;
    for (std::size_t k = 0; k < 3; ++k) xs.push_back(classical_transmit(s[k], cb, cfg, links[k].power));
    auto out = classical_sic_receive(superpose(xs, links), links, per, cfg);
    for (std::size_t k = 0; k < 3; ++k) CHECK(out[k] == corpus::normalize_sentence(s[k]));
  }
}

TEST_CASE("classical SIC equal powers with noise loses words") {
  auto pc = corpus::generate_synthetic_corpus(50, 2, 5);
  auto cb = HuffmanCodebook::from_sentences(pc.all_sentences());
  std::vector<HuffmanCodebook> books{cb};
  ClassicalConfig cfg;
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, std::sqrt(0.5));
  std::vector<channel::UserLink> links{{1, 2.0, 1.0}, {2, 2.0, 1.0}};
  std::size_t exact = 0;
  for (std::size_t i = 0; i < 20; ++i) {
    auto y = superpose({classical_transmit(pc.lines[i][0], cb, cfg, 2.0), classical_transmit(pc.lines[i][1], cb, cfg, 2.0)},
                       links);
    for (auto& v : y) v += cplx(n(rng), n(rng));
    auto out = classical_sic_receive(y, links, books, cfg);
    exact += out[0] == corpus::normalize_sentence(pc.lines[i][0]);
    exact += out[1] == corpus::normalize_sentence(pc.lines[i][1]);
  }
  CHECK(exact < 10);
}

TEST_CASE("classical SIC argument errors") {
  auto cb = HuffmanCodebook::build({{"a", 1.0}, {std::string(corpus::kEndToken), 1.0}});
  std::vector<HuffmanCodebook> books{cb, cb};
  ClassicalConfig cfg;
  std::vector<cplx> y(cfg.symbols_per_frame);
  std::vector<channel::UserLink> links{{1, 1.0, 1.0}, {2, 1.0, 1.0}, {3, 1.0, 1.0}};
  CHECK_THROWS(classical_sic_receive(y, links, books, cfg));
  std::vector<cplx> short_y(5);
  CHECK_THROWS(classical_sic_receive(short_y, std::span(links).first(1), std::span(books).first(1), cfg));
  std::vector<channel::UserLink> dead{{1, 1.0, 0.0}};
  CHECK_THROWS(classical_sic_receive(y, dead, std::span(books).first(1), cfg));
}
