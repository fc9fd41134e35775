#pragma once
// Sentence similarity through pluggable 384-dimensional sentence embeddings,
// per-sentence BLEU, and min-across-users aggregation.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace semsic::metrics {

inline constexpr std::size_t kEmbeddingDim = 384;

class SentenceEmbedder {
 public:
  virtual ~SentenceEmbedder() = default;
  virtual std::vector<double> embed(std::string_view sentence) const = 0;
  virtual std::string name() const = 0;
};

// Mean of fixed per-word Gaussian vectors; each word's vector is seeded by a
// hash of the word string so it is stable across vocabularies.
class HashEmbedder final : public SentenceEmbedder {
 public:
  explicit HashEmbedder(std::uint64_t seed = 0x5eed) : seed_(seed) {}
  std::vector<double> embed(std::string_view sentence) const override;
  std::string name() const override { return "hash"; }

 private:
  const std::vector<double>& word_vector(const std::string& word) const;
  std::uint64_t seed_;
  mutable std::mutex mu_;
  mutable std::unordered_map<std::string, std::vector<double>> cache_;
};

// Precomputed embeddings keyed by normalized sentence, one per line:
// sentence TAB comma-separated values.  Unknown sentences go to the fallback
// when one is given.
class TableEmbedder final : public SentenceEmbedder {
 public:
  TableEmbedder(const std::filesystem::path& path, std::shared_ptr<const SentenceEmbedder> fallback = nullptr);
  std::vector<double> embed(std::string_view sentence) const override;
  std::string name() const override { return "table"; }
  std::size_t size() const { return table_.size(); }

 private:
  std::unordered_map<std::string, std::vector<double>> table_;
  std::shared_ptr<const SentenceEmbedder> fallback_;
};

// mu . mu_hat / (|mu| |mu_hat|) clamped to [0, 1]; throws on a zero vector.
double cosine_similarity(std::span<const double> a, std::span<const double> b);
// 0 when the candidate is empty.
double sentence_similarity(std::string_view reference, std::string_view candidate, const SentenceEmbedder& embedder);
// Mean over sentences; missing candidates count as empty.
double text_similarity(std::span<const std::string> reference, std::span<const std::string> candidate,
                       const SentenceEmbedder& embedder);

enum class Brevity {
  kAsPrinted,     // min(1 - len(candidate)/len(reference), 0)
  kConventional,  // min(1 - len(reference)/len(candidate), 0)
};

struct BleuOptions {
  std::size_t max_order = 4;
  Brevity brevity = Brevity::kAsPrinted;
};

struct NgramStats {
  std::size_t matches = 0;  // clipped
  std::size_t total = 0;    // candidate n-grams
};

// Clipped n-gram counts of order n.
NgramStats ngram_stats(std::span<const std::string> reference, std::span<const std::string> candidate, std::size_t n);
double brevity_term(std::size_t reference_len, std::size_t candidate_len, Brevity mode);
// exp(BP + sum_n w_n log p_n) for explicit weights w_1..w_K.  Zero matches use
// p_n = 1/(2 total); a candidate without any n-gram of a weighted order scores 0.
double sentence_bleu(std::span<const std::string> reference, std::span<const std::string> candidate,
                     std::span<const double> weights, Brevity mode);

// BLEU-n for n = 1..max_order with uniform weights over 1..n, averaged over sentences.
std::vector<double> bleu(std::span<const std::string> reference, std::span<const std::string> candidate,
                         const BleuOptions& options = {});

struct UserMetrics {
  std::size_t user = 0;
  double similarity = 0.0;
  std::vector<double> bleu;  // orders 1..4
};

struct MetricReport {
  std::vector<UserMetrics> users;
  double min_similarity = 0.0;
  std::vector<double> min_bleu;
  double threshold = 0.0;
  bool meets_threshold = false;
};

UserMetrics evaluate_user(std::size_t user, std::span<const std::string> reference,
                          std::span<const std::string> candidate, const SentenceEmbedder& embedder,
                          const BleuOptions& options = {});
MetricReport min_across_users(std::vector<UserMetrics> users, double threshold = 0.0);

}  // namespace semsic::metrics
