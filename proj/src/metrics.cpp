#include "semsic/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "semsic/corpus.hpp"
#include "semsic/tensor.hpp"

namespace semsic::metrics {

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

const std::vector<double>& HashEmbedder::word_vector(const std::string& word) const {
  std::lock_guard lock(mu_);
  auto it = cache_.find(word);
  if (it != cache_.end()) return it->second;
  std::mt19937_64 rng(fnv1a(word) ^ seed_);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> v(kEmbeddingDim);
  for (auto& x : v) x = nd(rng);
  return cache_.emplace(word, std::move(v)).first->second;
}

std::vector<double> HashEmbedder::embed(std::string_view sentence) const {
  std::vector<double> out(kEmbeddingDim, 0.0);
  const auto words = corpus::normalize_words(sentence);
  if (words.empty()) return out;
  for (const auto& w : words) {
    const auto& v = word_vector(w);
    for (std::size_t i = 0; i < kEmbeddingDim; ++i) out[i] += v[i];
  }
  for (auto& x : out) x /= static_cast<double>(words.size());
  return out;
}

TableEmbedder::TableEmbedder(const std::filesystem::path& path, std::shared_ptr<const SentenceEmbedder> fallback)
    : fallback_(std::move(fallback)) {
  std::ifstream in(path);
  if (!in) throw Error("embedding table: cannot read " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw Error("embedding table: missing tab on line " + std::to_string(lineno));
    std::vector<double> v;
    std::stringstream ss(line.substr(tab + 1));
    std::string tok;
    while (std::getline(ss, tok, ',')) v.push_back(std::stod(tok));
    if (v.size() != kEmbeddingDim)
      throw Error("embedding table: expected " + std::to_string(kEmbeddingDim) + " values on line " +
                  std::to_string(lineno));
    table_.emplace(corpus::normalize_sentence(line.substr(0, tab)), std::move(v));
  }
}

std::vector<double> TableEmbedder::embed(std::string_view sentence) const {
  const auto key = corpus::normalize_sentence(sentence);
  if (key.empty()) return std::vector<double>(kEmbeddingDim, 0.0);
  auto it = table_.find(key);
  if (it != table_.end()) return it->second;
  if (fallback_) return fallback_->embed(sentence);
  throw Error("embedding table: no entry for '" + key + "'");
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("cosine_similarity: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw Error("cosine_similarity: zero vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), 0.0, 1.0);
}

double sentence_similarity(std::string_view reference, std::string_view candidate, const SentenceEmbedder& embedder) {
  if (corpus::normalize_words(candidate).empty()) return 0.0;
  const auto a = embedder.embed(reference);
  const auto b = embedder.embed(candidate);
  return cosine_similarity(a, b);
}

double text_similarity(std::span<const std::string> reference, std::span<const std::string> candidate,
                       const SentenceEmbedder& embedder) {
  if (reference.empty()) throw Error("text_similarity: no reference sentences");
  double sum = 0.0;
  for (std::size_t j = 0; j < reference.size(); ++j)
    if (j < candidate.size()) sum += sentence_similarity(reference[j], candidate[j], embedder);
  return sum / static_cast<double>(reference.size());
}

// ---------------------------------------------------------------------------

NgramStats ngram_stats(std::span<const std::string> reference, std::span<const std::string> candidate, std::size_t n) {
  if (n == 0) throw Error("ngram order must be positive");
  auto count = [n](std::span<const std::string> words) {
    std::map<std::vector<std::string>, std::size_t> c;
    for (std::size_t i = 0; i + n <= words.size(); ++i) ++c[std::vector<std::string>(words.begin() + i, words.begin() + i + n)];
    return c;
  };
  const auto cand = count(candidate);
  const auto ref = count(reference);
  NgramStats s;
  for (const auto& [g, k] : cand) {
    s.total += k;
    auto it = ref.find(g);
    if (it != ref.end()) s.matches += std::min(k, it->second);
  }
  return s;
}

double brevity_term(std::size_t reference_len, std::size_t candidate_len, Brevity mode) {
  if (reference_len == 0 || candidate_len == 0) throw Error("brevity_term: empty sentence");
  const double r = static_cast<double>(reference_len), c = static_cast<double>(candidate_len);
  return std::min(mode == Brevity::kAsPrinted ? 1.0 - c / r : 1.0 - r / c, 0.0);
}

double sentence_bleu(std::span<const std::string> reference, std::span<const std::string> candidate,
                     std::span<const double> weights, Brevity mode) {
  if (reference.empty()) throw Error("bleu: empty reference");
  if (candidate.empty()) return 0.0;
  double log_sum = brevity_term(reference.size(), candidate.size(), mode);
  for (std::size_t n = 1; n <= weights.size(); ++n) {
    if (weights[n - 1] == 0.0) continue;
    const auto s = ngram_stats(reference, candidate, n);
    if (s.total == 0) return 0.0;
    const double p = s.matches > 0 ? static_cast<double>(s.matches) / static_cast<double>(s.total)
                                   : 1.0 / (2.0 * static_cast<double>(s.total));
    log_sum += weights[n - 1] * std::log(p);
  }
  return std::clamp(std::exp(log_sum), 0.0, 1.0);
}

std::vector<double> bleu(std::span<const std::string> reference, std::span<const std::string> candidate,
                         const BleuOptions& options) {
  if (reference.empty()) throw Error("bleu: no reference sentences");
  if (options.max_order == 0) throw Error("bleu: max order must be positive");
  std::vector<double> out(options.max_order, 0.0);
  for (std::size_t j = 0; j < reference.size(); ++j) {
    const auto ref = corpus::normalize_words(reference[j]);
    const auto cand = j < candidate.size() ? corpus::normalize_words(candidate[j]) : std::vector<std::string>{};
    for (std::size_t n = 1; n <= options.max_order; ++n) {
      const std::vector<double> w(n, 1.0 / static_cast<double>(n));
      out[n - 1] += sentence_bleu(ref, cand, w, options.brevity);
    }
  }
  for (auto& v : out) v /= static_cast<double>(reference.size());
  return out;
}

UserMetrics evaluate_user(std::size_t user, std::span<const std::string> reference,
                          std::span<const std::string> candidate, const SentenceEmbedder& embedder,
                          const BleuOptions& options) {
  UserMetrics m;
  m.user = user;
  m.similarity = text_similarity(reference, candidate, embedder);
  m.bleu = bleu(reference, candidate, options);
  return m;
}

MetricReport min_across_users(std::vector<UserMetrics> users, double threshold) {
  if (users.empty()) throw Error("min_across_users: no users");
  MetricReport r;
  r.threshold = threshold;
  r.min_similarity = users[0].similarity;
  r.min_bleu = users[0].bleu;
  for (const auto& u : users) {
    r.min_similarity = std::min(r.min_similarity, u.similarity);
    if (u.bleu.size() != r.min_bleu.size()) throw Error("min_across_users: BLEU order mismatch");
    for (std::size_t n = 0; n < r.min_bleu.size(); ++n) r.min_bleu[n] = std::min(r.min_bleu[n], u.bleu[n]);
  }
  r.users = std::move(users);
  r.meets_threshold = r.min_similarity >= threshold;
  return r;
}

}  // namespace semsic::metrics
