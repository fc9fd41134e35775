#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "semsic/metrics.hpp"
#include "semsic/tensor.hpp"

using namespace semsic;
using namespace semsic::metrics;

namespace {

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::string w;
  for (char c : s) {
    if (c == ' ') {
      if (!w.empty()) out.push_back(w);
      w.clear();
    } else {
      w += c;
    }
  }
  if (!w.empty()) out.push_back(w);
  return out;
}

class FixedEmbedder final : public SentenceEmbedder {
 public:
  std::vector<double> embed(std::string_view s) const override {
    if (s == "t2") return {0.5, std::sqrt(3.0) / 2.0};
    return {1.0, 0.0};
  }
  std::string name() const override { return "fixed"; }
};

}  // namespace

TEST_CASE("cosine similarity") {
  std::vector<double> a(384, 0.0), b(384, 0.0);
  a[0] = a[1] = 1.0;
  b[0] = 1.0;
  CHECK(std::abs(cosine_similarity(a, b) - 1.0 / std::sqrt(2.0)) < 1e-12);
  CHECK(std::abs(cosine_similarity(a, a) - 1.0) < 1e-12);
  std::vector<double> c(384, 0.0);
  c[2] = 3.0;
  CHECK(cosine_similarity(a, c) == 0.0);
  std::vector<double> neg = a;
  for (auto& v : neg) v = -v;
  CHECK(cosine_similarity(a, neg) == 0.0);
  CHECK_THROWS_AS(cosine_similarity(a, std::vector<double>(384, 0.0)), Error);
}

TEST_CASE("text similarity") {
  FixedEmbedder fixed;
  const std::vector<std::string> ref{"s1", "s2"}, cand{"s1", "t2"};
  CHECK(std::abs(text_similarity(ref, cand, fixed) - 0.75) < 1e-12);
  HashEmbedder hash;
  const std::vector<std::string> sents{"a man is riding a horse", "two dogs play in the snow"};
  CHECK(std::abs(text_similarity(sents, sents, hash) - 1.0) < 1e-12);
  const std::vector<std::string> partial{"a man is riding a horse"};
  CHECK(std::abs(text_similarity(sents, partial, hash) - 0.5) < 1e-12);
  const std::vector<std::string> empty{"", ""};
  CHECK(text_similarity(sents, empty, hash) == 0.0);
}

TEST_CASE("fallback embedder is deterministic and unrelated sentences score near zero") {
  HashEmbedder e1, e2;
  CHECK(e1.embed("the cat sleeps") == e2.embed("The cat sleeps!"));
  CHECK(e1.embed("x").size() == kEmbeddingDim);
  std::mt19937_64 rng(1);
  double sum = 0.0;
  const int trials = 200;
  for (int t = 0; t < trials; ++t) {
    std::string a, b;
    for (int w = 0; w < 6; ++w) {
      a += "wa" + std::to_string(rng() % 100000) + " ";
      b += "wb" + std::to_string(rng() % 100000) + " ";
    }
    sum += sentence_similarity(a, b, e1);
  }
  CHECK(sum / trials < 0.05);
}

TEST_CASE("embedding table with fallback") {
  const auto path = std::filesystem::temp_directory_path() / "semsic_embed.tsv";
  {
    std::ofstream out(path);
    out << "A dog runs.\t";
    for (std::size_t i = 0; i < kEmbeddingDim; ++i) out << (i == 0 ? "" : ",") << (i == 3 ? 1.0 : 0.0);
    out << "\n";
  }
  auto fallback = std::make_shared<HashEmbedder>();
  TableEmbedder table(path, fallback);
  CHECK(table.size() == 1);
  CHECK(table.embed("a dog runs")[3] == 1.0);
  CHECK(table.embed("something else") == fallback->embed("something else"));
  TableEmbedder strict(path);
  CHECK_THROWS_AS(strict.embed("missing sentence"), Error);
  std::filesystem::remove(path);
}

TEST_CASE("BLEU hand-derived examples") {
  const auto ref = split("a b d"), cand = split("a b c");
  const std::vector<double> w1{1.0};
  CHECK(std::abs(sentence_bleu(ref, cand, w1, Brevity::kAsPrinted) - 2.0 / 3.0) < 1e-9);
  CHECK(std::abs(sentence_bleu(ref, cand, w1, Brevity::kConventional) - 2.0 / 3.0) < 1e-9);

  const auto long_ref = split("a b c d e f"), half = split("a b c");
  CHECK(std::abs(sentence_bleu(long_ref, half, w1, Brevity::kConventional) - std::exp(-1.0)) < 1e-9);
  CHECK(std::abs(brevity_term(6, 3, Brevity::kConventional) + 1.0) < 1e-12);
  CHECK(brevity_term(6, 3, Brevity::kAsPrinted) == 0.0);
  CHECK(std::abs(brevity_term(3, 6, Brevity::kAsPrinted) + 1.0) < 1e-12);

  const std::vector<std::string> sents{"a man is riding a horse", "two dogs play in the snow"};
  for (auto mode : {Brevity::kAsPrinted, Brevity::kConventional}) {
    BleuOptions opt;
    opt.brevity = mode;
    for (double v : bleu(sents, sents, opt)) CHECK(std::abs(v - 1.0) < 1e-12);
  }
  const std::vector<std::string> none{"", ""};
  for (double v : bleu(sents, none)) CHECK(v == 0.0);
}

TEST_CASE("smoothing of empty n-gram matches") {
  const auto ref = split("a b c d"), cand = split("a c b d");
  // p1 = 1, p2 = 1/(2*3) by smoothing
  const std::vector<double> w2{0.5, 0.5};
  CHECK(std::abs(sentence_bleu(ref, cand, w2, Brevity::kAsPrinted) - std::sqrt(1.0 / 6.0)) < 1e-12);
  // A 1-word candidate has no bigrams at all.
  const auto one = split("a");
  CHECK(sentence_bleu(ref, one, w2, Brevity::kAsPrinted) == 0.0);
}

TEST_CASE("clipped precision is bounded but not monotone in n") {
  const auto ref = split("b a b"), cand = split("a b a");
  const auto p1 = ngram_stats(ref, cand, 1), p2 = ngram_stats(ref, cand, 2);
  CHECK(p1.matches == 2);
  CHECK(p1.total == 3);
  CHECK(p2.matches == 2);
  CHECK(p2.total == 2);

  std::mt19937_64 rng(2);
  const char* words[] = {"a", "b", "c", "d"};
  for (int t = 0; t < 300; ++t) {
    std::vector<std::string> r, c;
    for (std::size_t i = 0, n = 1 + rng() % 8; i < n; ++i) r.push_back(words[rng() % 4]);
    for (std::size_t i = 0, n = rng() % 8; i < n; ++i) c.push_back(words[rng() % 4]);
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto s = ngram_stats(r, c, n);
      CHECK(s.matches <= s.total);
    }
    for (auto mode : {Brevity::kAsPrinted, Brevity::kConventional}) {
      const std::vector<double> w{0.25, 0.25, 0.25, 0.25};
      const double b = sentence_bleu(r, c, w, mode);
      CHECK(b >= 0.0);
      CHECK(b <= 1.0);
    }
  }
}

TEST_CASE("min across users") {
  std::vector<UserMetrics> users(3);
  const double sims[] = {0.9, 0.7, 0.8};
  for (std::size_t i = 0; i < 3; ++i) {
    users[i].user = i + 1;
    users[i].similarity = sims[i];
    users[i].bleu = {0.5 + 0.1 * static_cast<double>(i), 0.4, 0.3, 0.2};
  }
  auto r = min_across_users(users, 0.75);
  CHECK(r.min_similarity == 0.7);
  CHECK(r.min_bleu[0] == 0.5);
  CHECK_FALSE(r.meets_threshold);
  auto one = min_across_users({users[0]});
  CHECK(one.min_similarity == 0.9);
  CHECK(one.min_bleu == users[0].bleu);
  users[2].similarity = 0.0;
  users[2].bleu = {0, 0, 0, 0};
  CHECK(min_across_users(users).min_bleu[0] == 0.0);
  CHECK_THROWS_AS(min_across_users({}), Error);
}

TEST_CASE("per-user evaluation") {
  HashEmbedder e;
  const std::vector<std::string> ref{"a man is riding a horse"};
  const auto m = evaluate_user(2, ref, ref, e);
  CHECK(m.user == 2);
  CHECK(std::abs(m.similarity - 1.0) < 1e-12);
  CHECK(m.bleu.size() == 4);
}
