#include "semsic/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "semsic/tensor.hpp"

namespace semsic::corpus {

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(std::vector<std::string> words) {
  words_.emplace_back(kEndToken);
  words_.emplace_back(kUnkToken);
  for (auto& w : words) {
    if (w == kEndToken || w == kUnkToken) continue;
    words_.push_back(std::move(w));
  }
  for (std::size_t i = 0; i < words_.size(); ++i) {
    auto [it, inserted] = index_.emplace(words_[i], static_cast<int>(i));
    if (!inserted) throw Error("vocabulary: duplicate word '" + words_[i] + "'");
  }
}

const std::string& Vocabulary::word(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= words_.size()) throw Error("vocabulary: id out of range");
  return words_[static_cast<std::size_t>(id)];
}

int Vocabulary::index_of(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(std::string_view word) const { return index_.count(std::string(word)) > 0; }

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write vocabulary file " + path.string());
  for (const auto& w : words_) out << w << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read vocabulary file " + path.string());
  std::vector<std::string> words;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    if (lineno == 0 && line != kEndToken) throw Error("vocabulary file must start with <end>");
    if (lineno == 1 && line != kUnkToken) throw Error("vocabulary file line 2 must be <unk>");
    if (lineno >= 2) words.push_back(line);
    ++lineno;
  }
  return Vocabulary(std::move(words));
}

std::vector<std::string> normalize_words(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else if (!std::ispunct(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

std::string normalize_sentence(std::string_view text) {
  std::string out;
  for (const auto& w : normalize_words(text)) {
    if (!out.empty()) out.push_back(' ');
    out += w;
  }
  return out;
}

Vocabulary build_vocabulary(const std::vector<std::string>& corpus_lines, std::size_t min_count,
                            std::size_t max_size) {
  if (corpus_lines.empty()) throw Error("build_vocabulary: empty corpus");
  std::map<std::string, std::size_t> counts;
  for (const auto& line : corpus_lines)
    for (auto& w : normalize_words(line)) ++counts[w];
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> words;
  for (auto& [w, n] : ranked) {
    if (n < std::max<std::size_t>(min_count, 1)) continue;
    if (max_size > 0 && words.size() + 2 >= max_size) break;
    words.push_back(w);
  }
  return Vocabulary(std::move(words));
}

std::optional<TokenizedSentence> tokenize_and_filter(std::string_view text, const Vocabulary& vocab) {
  const auto words = normalize_words(text);
  if (words.size() < kMinWords || words.size() > kMaxWords) return std::nullopt;
  TokenizedSentence s;
  s.raw_length = words.size();
  s.token_ids.reserve(words.size() + 1);
  for (const auto& w : words) s.token_ids.push_back(vocab.index_of(w));
  s.token_ids.push_back(kEndId);
  return s;
}

std::string detokenize(std::span<const int> ids, const Vocabulary& vocab) {
  std::string out;
  for (int id : ids) {
    if (id == kEndId) break;
    if (!out.empty()) out.push_back(' ');
    out += vocab.word(id);
  }
  return out;
}

std::vector<std::uint8_t> Batch::content_mask() const {
  std::vector<std::uint8_t> mask(rows * seq_len, 0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t p = 0; p <= static_cast<std::size_t>(lengths[r]) && p < seq_len; ++p)
      mask[r * seq_len + p] = 1;
  return mask;
}

Batch make_batch(const KnowledgeSet& ks, std::span<const std::size_t> rows, std::size_t seq_len) {
  Batch b;
  b.rows = rows.size();
  b.seq_len = seq_len;
  b.ids.assign(b.rows * seq_len, kEndId);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= ks.sentences.size()) throw Error("make_batch: row out of range");
    const auto& s = ks.sentences[rows[r]];
    if (s.token_ids.size() > seq_len) throw Error("make_batch: sentence longer than padded length");
    std::copy(s.token_ids.begin(), s.token_ids.end(), b.ids.begin() + static_cast<std::ptrdiff_t>(r * seq_len));
    b.lengths.push_back(static_cast<int>(s.raw_length));
    b.source_rows.push_back(rows[r]);
  }
  return b;
}

BatchSource::BatchSource(std::size_t num_rows, std::size_t batch_size, std::uint64_t seed)
    : num_rows_(num_rows), batch_size_(batch_size), seed_(seed) {
  if (batch_size == 0) throw Error("batch size must be at least 1");
}

std::vector<std::vector<std::size_t>> BatchSource::epoch(std::size_t epoch_index) const {
  std::vector<std::size_t> order(num_rows_);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed_ * 0x9E3779B97F4A7C15ULL + epoch_index);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < order.size(); i += batch_size_)
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + batch_size_)));
  return batches;
}

std::size_t BatchSource::batches_per_epoch() const { return (num_rows_ + batch_size_ - 1) / batch_size_; }

Batch batch_source(const KnowledgeSet& ks, std::size_t batch_size, std::uint64_t seed,
                   std::size_t seq_len) {
  if (ks.sentences.empty()) throw Error("batch_source: empty knowledge set");
  BatchSource src(ks.size(), batch_size, seed);
  return make_batch(ks, src.epoch(0).front(), seq_len);
}

std::size_t PairCorpus::columns() const {
  std::size_t c = lines.empty() ? 0 : lines.front().size();
  for (const auto& l : lines) c = std::min(c, l.size());
  return c;
}

std::vector<std::string> PairCorpus::all_sentences() const {
  std::vector<std::string> out;
  for (const auto& l : lines) out.insert(out.end(), l.begin(), l.end());
  return out;
}

PairCorpus read_pair_corpus(const std::filesystem::path& path, std::size_t max_lines) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read corpus file " + path.string());
  PairCorpus c;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    if (cols.size() < 2)
      throw Error("corpus line " + std::to_string(lineno) + ": expected tab-separated sentence pair");
    c.lines.push_back(std::move(cols));
    if (max_lines > 0 && c.lines.size() >= max_lines) break;
  }
  if (c.lines.empty()) throw Error("corpus file is empty: " + path.string());
  return c;
}

void write_pair_corpus(const PairCorpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write corpus file " + path.string());
  for (const auto& l : corpus.lines) {
    for (std::size_t i = 0; i < l.size(); ++i) out << (i ? "\t" : "") << l[i];
    out << '\n';
  }
}

std::vector<KnowledgeSet> build_knowledge_sets(const PairCorpus& corpus, const Vocabulary& vocab,
                                               std::size_t num_users) {
  if (num_users == 0) throw Error("build_knowledge_sets: need at least one user");
  const std::size_t cols = corpus.columns();
  if (cols == 0) throw Error("build_knowledge_sets: corpus has no columns");
  std::vector<KnowledgeSet> sets(num_users);
  for (std::size_t u = 0; u < num_users; ++u) sets[u].user_index = u + 1;
  for (std::size_t li = 0; li < corpus.lines.size(); ++li) {
    std::vector<TokenizedSentence> row;
    for (std::size_t u = 0; u < num_users; ++u) {
      auto t = tokenize_and_filter(corpus.lines[li][u % cols], vocab);
      if (!t) break;
      row.push_back(std::move(*t));
    }
    if (row.size() != num_users) continue;
    for (std::size_t u = 0; u < num_users; ++u) {
      sets[u].sentences.push_back(std::move(row[u]));
      sets[u].source_line.push_back(li);
    }
  }
  if (sets.front().sentences.empty()) throw Error("build_knowledge_sets: no sentence passed the filter");
  return sets;
}

Split split_knowledge_sets(const std::vector<KnowledgeSet>& sets, double test_fraction,
                           std::uint64_t seed) {
  if (sets.empty()) throw Error("split_knowledge_sets: no sets");
  const std::size_t n = sets.front().size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_test = static_cast<std::size_t>(static_cast<double>(n) * test_fraction);
  std::vector<std::size_t> test_rows(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> train_rows(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  std::sort(test_rows.begin(), test_rows.end());
  std::sort(train_rows.begin(), train_rows.end());
  Split s;
  for (const auto& ks : sets) {
    KnowledgeSet tr{ks.user_index, {}, {}}, te{ks.user_index, {}, {}};
    for (auto r : train_rows) {
      tr.sentences.push_back(ks.sentences[r]);
      tr.source_line.push_back(ks.source_line[r]);
    }
    for (auto r : test_rows) {
      te.sentences.push_back(ks.sentences[r]);
      te.source_line.push_back(ks.source_line[r]);
    }
    s.train.push_back(std::move(tr));
    s.test.push_back(std::move(te));
  }
  return s;
}

// ---------------------------------------------------------------------------

namespace {

struct Activity {
  const char* specific;  // "riding a horse"
  const char* general;   // "riding an animal"
  const char* bare;      // "riding"
};

struct Place {
  const char* phrase;
  bool outdoors;
};

}  // namespace

PairCorpus generate_synthetic_corpus(std::size_t num_lines, std::size_t columns, std::uint64_t seed) {
  static const std::vector<std::string> subjects = {
      "man",    "woman",  "boy",     "girl",    "child",  "worker", "player",
      "singer", "chef",   "student", "teacher", "farmer", "dancer", "tourist",
      "runner", "cyclist", "artist", "doctor",  "guard",  "baby"};
  static const std::vector<std::string> adjectives = {"young", "old",   "tall",    "little",
                                                      "happy", "tired", "smiling", "busy"};
  static const std::vector<std::string> colors = {"red",   "blue",  "green",  "black",
                                                  "white", "yellow", "orange", "brown"};
  static const std::vector<std::string> clothes = {"shirt", "hat", "jacket", "dress", "vest", "coat"};
  static const std::vector<Activity> activities = {
      {"riding a horse", "riding an animal", "riding"},
      {"playing a guitar", "playing an instrument", "playing"},
      {"kicking a ball", "playing with a ball", "kicking"},
      {"reading a book", "looking at a book", "reading"},
      {"eating a sandwich", "eating some food", "eating"},
      {"throwing a frisbee", "throwing a toy", "throwing"},
      {"painting a picture", "making some art", "painting"},
      {"pushing a cart", "moving a cart", "pushing"},
      {"walking a dog", "walking with a pet", "walking"},
      {"drinking a coffee", "having a drink", "drinking"},
      {"carrying a bag", "holding a bag", "carrying"},
      {"climbing a rock", "climbing something", "climbing"},
      {"singing a song", "making some music", "singing"},
      {"cooking a meal", "making some food", "cooking"},
      {"fixing a bike", "repairing a bike", "fixing"},
      {"washing a car", "cleaning a car", "washing"}};
  static const std::vector<Place> places = {
      {"on the beach", true},      {"in the park", true},        {"in a kitchen", false},
      {"on a busy street", true},  {"near a lake", true},        {"in a restaurant", false},
      {"at the market", true},     {"in the snow", true},        {"in a classroom", false},
      {"inside a small shop", false}, {"on a mountain trail", true}, {"in a living room", false}};

  std::mt19937_64 rng(seed);
  auto pick = [&rng](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
  PairCorpus c;
  c.lines.reserve(num_lines);
  const std::size_t cols = std::max<std::size_t>(columns, 2);
  for (std::size_t i = 0; i < num_lines; ++i) {
    const auto& subj = subjects[pick(subjects.size())];
    const bool with_adj = pick(2) == 0;
    const auto& adj = adjectives[pick(adjectives.size())];
    const auto& color = colors[pick(colors.size())];
    const auto& cloth = clothes[pick(clothes.size())];
    const auto& act = activities[pick(activities.size())];
    const auto& place = places[pick(places.size())];

    std::string premise = "a ";
    if (with_adj) premise += adj + " ";
    premise += subj + " in a " + color + " " + cloth + " is " + act.specific + " " + place.phrase;

    std::vector<std::string> hyps = {
        "a " + subj + " is " + act.general,
        "the " + subj + " is " + (place.outdoors ? "outside" : "inside") + " today",
        "a " + subj + " is wearing a " + color + " " + cloth,
        "someone is " + std::string(act.specific) + " " + place.phrase,
        "the " + (with_adj ? adj + " " : std::string()) + subj + " is " + act.bare};
    std::vector<std::string> line{premise};
    for (std::size_t k = 1; k < cols; ++k) line.push_back(hyps[(k - 1) % hyps.size()]);
    c.lines.push_back(std::move(line));
  }
  return c;
}

}  // namespace semsic::corpus
