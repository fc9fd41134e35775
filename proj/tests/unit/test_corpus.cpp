#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "semsic/corpus.hpp"
#include "semsic/tensor.hpp"

using namespace semsic;
using namespace semsic::corpus;

TEST_CASE("vocabulary ordering") {
  const auto v = build_vocabulary({"a man runs", "a dog runs"}, 1);
  const std::vector<std::string> expect{"<end>", "<unk>", "a", "runs", "dog", "man"};
  CHECK(v.words() == expect);
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(v.index_of(v.words()[i]) == static_cast<int>(i));
  CHECK(v.index_of("cat") == kUnkId);
  CHECK_THROWS_AS(build_vocabulary({}, 1), Error);
}

TEST_CASE("vocabulary min count and cap") {
  const auto v = build_vocabulary({"a a a b b c"}, 2);
  CHECK(v.size() == 4);
  CHECK_FALSE(v.contains("c"));
  const auto capped = build_vocabulary({"a a a b b c"}, 1, 3);
  CHECK(capped.size() == 3);
  CHECK(capped.words()[2] == "a");
}

TEST_CASE("vocabulary file is deterministic and round-trips") {
  const auto dir = std::filesystem::temp_directory_path() / "semsic_vocab_test";
  std::filesystem::create_directories(dir);
  const std::vector<std::string> lines{"the cat sat on the mat", "a dog ran in the park"};
  build_vocabulary(lines, 1).save(dir / "v1.txt");
  build_vocabulary(lines, 1).save(dir / "v2.txt");
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  CHECK(slurp(dir / "v1.txt") == slurp(dir / "v2.txt"));
  const auto loaded = Vocabulary::load(dir / "v1.txt");
  CHECK(loaded.words() == build_vocabulary(lines, 1).words());
  std::filesystem::remove_all(dir);
}

TEST_CASE("tokenize and filter") {
  const auto v = build_vocabulary({"a man runs fast", "one two three", "w w w w w w w w w w w w w w w w w w w w w"}, 1);
  auto t = tokenize_and_filter("A man runs fast.", v);
  REQUIRE(t.has_value());
  CHECK(t->raw_length == 4);
  CHECK(t->token_ids.size() == 5);
  CHECK(t->token_ids.back() == kEndId);
  CHECK_FALSE(tokenize_and_filter("one two three", v).has_value());
  CHECK_FALSE(tokenize_and_filter("w w w w w w w w w w w w w w w w w w w w w", v).has_value());
  CHECK(tokenize_and_filter("w w w w w w w w w w w w w w w w w w w w", v).has_value());
  auto unk = tokenize_and_filter("a zebra runs fast", v);
  REQUIRE(unk.has_value());
  CHECK(unk->token_ids[1] == kUnkId);
}

TEST_CASE("detokenize round trip and end truncation") {
  const auto v = build_vocabulary({"Hello, World! the quick brown fox"}, 1);
  const std::string s = "The quick, brown FOX!";
  auto t = tokenize_and_filter(s, v);
  REQUIRE(t.has_value());
  CHECK(detokenize(t->token_ids, v) == normalize_sentence(s));
  std::vector<int> ids{v.index_of("quick"), v.index_of("fox"), kEndId, v.index_of("brown")};
  CHECK(detokenize(ids, v) == "quick fox");
}

TEST_CASE("batch padding and determinism") {
  const auto corpus = generate_synthetic_corpus(40, 3, 7);
  const auto vocab = build_vocabulary(corpus.all_sentences(), 1);
  const auto sets = build_knowledge_sets(corpus, vocab, 3);
  REQUIRE(sets.size() == 3);
  CHECK(sets[0].size() == sets[1].size());
  const auto b1 = batch_source(sets[0], 8, 99);
  const auto b2 = batch_source(sets[0], 8, 99);
  CHECK(b1.ids == b2.ids);
  CHECK(b1.rows == 8);
  for (std::size_t r = 0; r < b1.rows; ++r) {
    int ends = 0;
    for (int p = 0; p <= b1.lengths[r]; ++p) ends += b1.at(r, p) == kEndId;
    CHECK(ends == 1);
    CHECK(b1.at(r, b1.lengths[r]) == kEndId);
  }
}

TEST_CASE("single short sentence pads to N") {
  const auto v = build_vocabulary({"a man runs fast"}, 1);
  KnowledgeSet ks;
  ks.user_index = 1;
  ks.sentences.push_back(*tokenize_and_filter("a man runs fast", v));
  ks.source_line.push_back(0);
  const auto b = batch_source(ks, 4, 1, 21);
  REQUIRE(b.rows == 1);
  CHECK(b.ids.size() == 21);
  const auto mask = b.content_mask();
  int real = 0;
  for (auto m : mask) real += m;
  CHECK(real == 5);
  for (std::size_t p = 5; p < 21; ++p) CHECK(b.at(0, p) == kEndId);
}

TEST_CASE("paired knowledge sets stay row-aligned") {
  const auto corpus = generate_synthetic_corpus(30, 3, 5);
  const auto vocab = build_vocabulary(corpus.all_sentences(), 1);
  const auto sets = build_knowledge_sets(corpus, vocab, 2);
  BatchSource src(sets[0].size(), 7, 3);
  for (const auto& rows : src.epoch(2)) {
    const auto a = make_batch(sets[0], rows, 21);
    const auto b = make_batch(sets[1], rows, 21);
    for (std::size_t r = 0; r < a.rows; ++r)
      CHECK(sets[0].source_line[a.source_rows[r]] == sets[1].source_line[b.source_rows[r]]);
  }
  const auto epochs = src.epoch(0);
  std::size_t total = 0;
  for (const auto& e : epochs) total += e.size();
  CHECK(total == sets[0].size());
  CHECK(epochs.back().size() == sets[0].size() % 7);
}

TEST_CASE("split is disjoint and deterministic") {
  const auto corpus = generate_synthetic_corpus(50, 2, 8);
  const auto vocab = build_vocabulary(corpus.all_sentences(), 1);
  const auto sets = build_knowledge_sets(corpus, vocab, 2);
  const auto s1 = split_knowledge_sets(sets, 0.2, 4);
  const auto s2 = split_knowledge_sets(sets, 0.2, 4);
  CHECK(s1.train[0].source_line == s2.train[0].source_line);
  std::set<std::size_t> train(s1.train[0].source_line.begin(), s1.train[0].source_line.end());
  for (auto l : s1.test[0].source_line) CHECK_FALSE(train.count(l));
  CHECK(s1.train[0].size() + s1.test[0].size() == sets[0].size());
  CHECK(s1.test[1].source_line == s1.test[0].source_line);
}

TEST_CASE("synthetic corpus respects the length filter") {
  const auto corpus = generate_synthetic_corpus(100, 5, 1);
  CHECK(corpus.columns() == 5);
  const auto vocab = build_vocabulary(corpus.all_sentences(), 1);
  for (const auto& line : corpus.lines)
    for (const auto& s : line) CHECK(tokenize_and_filter(s, vocab).has_value());
  CHECK(generate_synthetic_corpus(100, 5, 1).lines == corpus.lines);
}

TEST_CASE("pair corpus file round trip") {
  const auto path = std::filesystem::temp_directory_path() / "semsic_pairs.tsv";
  const auto corpus = generate_synthetic_corpus(10, 3, 2);
  write_pair_corpus(corpus, path);
  CHECK(read_pair_corpus(path).lines == corpus.lines);
  CHECK(read_pair_corpus(path, 4).lines.size() == 4);
  std::filesystem::remove(path);
}
