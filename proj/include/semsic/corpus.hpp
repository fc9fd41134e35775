#pragma once
// Sentence-pair corpus ingestion, dictionary construction, tokenization and
// seed-deterministic batching into per-user knowledge sets.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace semsic::corpus {

inline constexpr int kEndId = 0;
inline constexpr int kUnkId = 1;
inline constexpr std::string_view kEndToken = "<end>";
inline constexpr std::string_view kUnkToken = "<unk>";
inline constexpr std::size_t kMinWords = 4;
inline constexpr std::size_t kMaxWords = 20;

class Vocabulary {
 public:
  Vocabulary();  // just the reserved entries
  explicit Vocabulary(std::vector<std::string> words);

  std::size_t size() const { return words_.size(); }
  const std::string& word(int id) const;
  int index_of(std::string_view word) const;  // kUnkId when absent
  bool contains(std::string_view word) const;
  const std::vector<std::string>& words() const { return words_; }

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

// Lowercases, removes ASCII punctuation, and splits on whitespace.
std::vector<std::string> normalize_words(std::string_view text);
std::string normalize_sentence(std::string_view text);

// Entry 0 is <end>, entry 1 is <unk>; then every word seen at least min_count
// times, by descending count with lexicographic tie-break.
Vocabulary build_vocabulary(const std::vector<std::string>& corpus_lines, std::size_t min_count,
                            std::size_t max_size = 0);

struct TokenizedSentence {
  std::vector<int> token_ids;  // words then the end marker
  std::size_t raw_length = 0;  // word count
};

// Rejects sentences outside the 4..20 word range.
std::optional<TokenizedSentence> tokenize_and_filter(std::string_view text, const Vocabulary& vocab);
std::string detokenize(std::span<const int> ids, const Vocabulary& vocab);

struct KnowledgeSet {
  std::size_t user_index = 0;  // 1-based
  std::vector<TokenizedSentence> sentences;
  // Corpus line each sentence came from; equal vectors across users mean
  // row-aligned (paired) knowledge sets.
  std::vector<std::size_t> source_line;

  std::size_t size() const { return sentences.size(); }
};

struct Batch {
  std::size_t rows = 0;
  std::size_t seq_len = 0;      // N
  std::vector<int> ids;         // rows * seq_len, pad id = end marker
  std::vector<int> lengths;     // raw word count per row
  std::vector<std::size_t> source_rows;  // knowledge-set row indices

  int at(std::size_t r, std::size_t pos) const { return ids[r * seq_len + pos]; }
  // Per-token flag: 1 for words and the end marker, 0 for padding.
  std::vector<std::uint8_t> content_mask() const;
};

Batch make_batch(const KnowledgeSet& ks, std::span<const std::size_t> rows, std::size_t seq_len);

// Seed-deterministic epoch ordering shared by every user of a run so that
// paired knowledge sets stay row-aligned.
class BatchSource {
 public:
  BatchSource(std::size_t num_rows, std::size_t batch_size, std::uint64_t seed);
  // Row indices for every batch of the given epoch; the last batch may be smaller.
  std::vector<std::vector<std::size_t>> epoch(std::size_t epoch_index) const;
  std::size_t batches_per_epoch() const;

 private:
  std::size_t num_rows_;
  std::size_t batch_size_;
  std::uint64_t seed_;
};

Batch batch_source(const KnowledgeSet& ks, std::size_t batch_size, std::uint64_t seed,
                   std::size_t seq_len = kMaxWords + 1);

// ---- corpus files ----

// One line per tab-separated group: premise, then one or more related sentences.
struct PairCorpus {
  std::vector<std::vector<std::string>> lines;

  std::size_t columns() const;
  std::vector<std::string> all_sentences() const;
};

PairCorpus read_pair_corpus(const std::filesystem::path& path, std::size_t max_lines = 0);
void write_pair_corpus(const PairCorpus& corpus, const std::filesystem::path& path);

// Builds row-aligned knowledge sets for users 1..num_users: user i reads column
// (i-1) mod columns.  Lines where any used column fails the length filter are skipped.
std::vector<KnowledgeSet> build_knowledge_sets(const PairCorpus& corpus, const Vocabulary& vocab,
                                               std::size_t num_users);

// Deterministic split of a knowledge set family into train/test by line.
struct Split {
  std::vector<KnowledgeSet> train, test;
};
Split split_knowledge_sets(const std::vector<KnowledgeSet>& sets, double test_fraction,
                           std::uint64_t seed);

// Templated premise/hypothesis generator producing SNLI-like entailment groups
// with a compact vocabulary.  Column 0 is the premise.
PairCorpus generate_synthetic_corpus(std::size_t num_lines, std::size_t columns, std::uint64_t seed);

}  // namespace semsic::corpus
