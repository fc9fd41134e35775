#include "semsic/baseline.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <queue>

#include "semsic/corpus.hpp"

namespace semsic::baseline {

namespace {

const std::string kEnd(corpus::kEndToken);

struct HeapEntry {
  double weight;
  int order;  // smallest symbol position in the subtree
  int node;
  bool operator>(const HeapEntry& o) const {
    if (weight != o.weight) return weight > o.weight;
    return order > o.order;
  }
};

}  // namespace

HuffmanCodebook HuffmanCodebook::build(const std::map<std::string, double>& weights) {
  if (weights.empty()) throw Error("huffman: empty alphabet");
  HuffmanCodebook cb;
  for (const auto& [w, f] : weights) {
    if (!(f > 0.0)) throw Error("huffman: weights must be positive");
    cb.symbols_.push_back(w);
  }
  const int n = static_cast<int>(cb.symbols_.size());
  // Build the merge tree: leaves 0..n-1, internal nodes appended.
  std::vector<std::array<int, 2>> kids(n, {-1, -1});
  std::priority_queue<HeapEntry, std::vector<HeapEntry>, std::greater<>> heap;
  int i = 0;
  for (const auto& [w, f] : weights) {
    heap.push({f, i, i});
    ++i;
  }
  while (heap.size() > 1) {
    const auto a = heap.top();
    heap.pop();
    const auto b = heap.top();
    heap.pop();
    kids.push_back({a.node, b.node});
    heap.push({a.weight + b.weight, std::min(a.order, b.order), static_cast<int>(kids.size()) - 1});
  }
  const int root = heap.top().node;
  if (n == 1) {
    cb.codes_[cb.symbols_[0]] = Bits{0};
  } else {
    std::vector<std::pair<int, Bits>> stack{{root, {}}};
    while (!stack.empty()) {
      auto [node, prefix] = std::move(stack.back());
      stack.pop_back();
      if (node < n) {
        cb.codes_[cb.symbols_[static_cast<std::size_t>(node)]] = prefix;
        continue;
      }
      for (std::uint8_t bit : {0, 1}) {
        Bits p = prefix;
        p.push_back(bit);
        stack.emplace_back(kids[static_cast<std::size_t>(node)][bit], std::move(p));
      }
    }
  }
  cb.trie_.emplace_back();
  for (std::size_t s = 0; s < cb.symbols_.size(); ++s) {
    int cur = 0;
    for (auto bit : cb.codes_[cb.symbols_[s]]) {
      if (cb.trie_[static_cast<std::size_t>(cur)].child[bit] < 0) {
        cb.trie_[static_cast<std::size_t>(cur)].child[bit] = static_cast<int>(cb.trie_.size());
        cb.trie_.emplace_back();
      }
      cur = cb.trie_[static_cast<std::size_t>(cur)].child[bit];
    }
    cb.trie_[static_cast<std::size_t>(cur)].symbol = static_cast<int>(s);
  }
  return cb;
}

HuffmanCodebook HuffmanCodebook::from_sentences(std::span<const std::string> sentences) {
  std::map<std::string, double> counts;
  for (const auto& s : sentences) {
    for (const auto& w : corpus::normalize_words(s)) counts[w] += 1.0;
    counts[kEnd] += 1.0;
  }
  return build(counts);
}

const Bits& HuffmanCodebook::code(const std::string& word) const {
  auto it = codes_.find(word);
  if (it == codes_.end()) throw Error("huffman: unknown word '" + word + "'");
  return it->second;
}

Bits HuffmanCodebook::encode(std::span<const std::string> words) const {
  Bits out;
  for (const auto& w : words) {
    const auto& c = code(w);
    out.insert(out.end(), c.begin(), c.end());
  }
  return out;
}

std::vector<std::string> HuffmanCodebook::decode(std::span<const std::uint8_t> bits) const {
  std::vector<std::string> out;
  if (trie_.empty()) return out;
  int cur = 0;
  for (auto bit : bits) {
    cur = trie_[static_cast<std::size_t>(cur)].child[bit & 1];
    if (cur < 0) {
      cur = 0;  // unreachable branch of an incomplete tree
      continue;
    }
    const int sym = trie_[static_cast<std::size_t>(cur)].symbol;
    if (sym >= 0) {
      out.push_back(symbols_[static_cast<std::size_t>(sym)]);
      cur = 0;
    }
  }
  return out;
}

double HuffmanCodebook::average_length(const std::map<std::string, double>& weights) const {
  double total = 0.0, sum = 0.0;
  for (const auto& [w, f] : weights) {
    total += f;
    sum += f * static_cast<double>(code(w).size());
  }
  return sum / total;
}

double entropy_bits(const std::map<std::string, double>& weights) {
  double total = 0.0, h = 0.0;
  for (const auto& [w, f] : weights) total += f;
  for (const auto& [w, f] : weights) {
    const double p = f / total;
    if (p > 0.0) h -= p * std::log2(p);
  }
  return h;
}

// ---------------------------------------------------------------------------

namespace {

constexpr double kLevelScale = 6.48074069840786;  // sqrt(42)

int gray(int k) { return k ^ (k >> 1); }

int inverse_gray(int g) {
  int k = 0;
  for (; g; g >>= 1) k ^= g;
  return k;
}

double level(int bits3) { return (2.0 * inverse_gray(bits3) - 7.0) / kLevelScale; }

int slice_axis(double v) {
  const double k = std::round((v * kLevelScale + 7.0) / 2.0);
  return static_cast<int>(std::clamp(k, 0.0, 7.0));
}

}  // namespace

const std::vector<cplx>& qam64_points() {
  static const std::vector<cplx> points = [] {
    std::vector<cplx> p(64);
    for (int label = 0; label < 64; ++label) p[static_cast<std::size_t>(label)] = {level(label >> 3), level(label & 7)};
    return p;
  }();
  return points;
}

std::vector<cplx> qam64_modulate(std::span<const std::uint8_t> bits) {
  const std::size_t n = (bits.size() + 5) / 6;
  std::vector<cplx> out(n);
  for (std::size_t s = 0; s < n; ++s) {
    int label = 0;
    for (std::size_t b = 0; b < 6; ++b) {
      const std::size_t idx = 6 * s + b;
      label = (label << 1) | (idx < bits.size() ? (bits[idx] & 1) : 0);
    }
    out[s] = qam64_points()[static_cast<std::size_t>(label)];
  }
  return out;
}

Bits qam64_demodulate(std::span<const cplx> symbols) {
  Bits out;
  out.reserve(6 * symbols.size());
  for (const auto& z : symbols) {
    const int label = (gray(slice_axis(z.real())) << 3) | gray(slice_axis(z.imag()));
    for (int b = 5; b >= 0; --b) out.push_back(static_cast<std::uint8_t>((label >> b) & 1));
  }
  return out;
}

std::vector<cplx> qam64_slice(std::span<const cplx> symbols) {
  std::vector<cplx> out(symbols.size());
  for (std::size_t i = 0; i < symbols.size(); ++i)
    out[i] = {(2.0 * slice_axis(symbols[i].real()) - 7.0) / kLevelScale,
              (2.0 * slice_axis(symbols[i].imag()) - 7.0) / kLevelScale};
  return out;
}

double qam64_min_distance() { return 2.0 / kLevelScale; }

Bits repetition_encode(std::span<const std::uint8_t> bits) {
  Bits out;
  out.reserve(3 * bits.size());
  for (auto b : bits)
    for (int r = 0; r < 3; ++r) out.push_back(b);
  return out;
}

Bits repetition_decode(std::span<const std::uint8_t> bits) {
  Bits out(bits.size() / 3);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (bits[3 * i] + bits[3 * i + 1] + bits[3 * i + 2]) >= 2;
  return out;
}

// ---------------------------------------------------------------------------

std::vector<cplx> classical_transmit(const std::string& sentence, const HuffmanCodebook& codebook,
                                     const ClassicalConfig& config, double power) {
  if (!(power > 0.0)) throw Error("classical_transmit: power must be positive");
  auto words = corpus::normalize_words(sentence);
  words.push_back(kEnd);
  Bits bits = codebook.encode(words);
  if (config.repetition) bits = repetition_encode(bits);
  bits.resize(6 * config.symbols_per_frame, 0);
  auto x = qam64_modulate(bits);
  const double a = std::sqrt(power);
  for (auto& v : x) v *= a;
  return x;
}

std::vector<std::string> classical_sic_receive(std::span<const cplx> y, std::span<const channel::UserLink> links,
                                               std::span<const HuffmanCodebook> codebooks,
                                               const ClassicalConfig& config, std::span<const std::size_t> order) {
  if (y.size() != config.symbols_per_frame) throw Error("classical_sic_receive: frame length mismatch");
  if (codebooks.size() != 1 && codebooks.size() != links.size())
    throw Error("classical_sic_receive: need one codebook per link or a shared one");
  std::vector<cplx> cur(y.begin(), y.end());
  std::vector<std::string> out(links.size());
  std::vector<std::size_t> seq(order.begin(), order.end());
  if (seq.empty()) seq = channel::order_users(links);
  if (seq.size() != links.size()) throw Error("classical_sic_receive: order must list every link");
  for (std::size_t k : seq) {
    if (k >= links.size()) throw Error("classical_sic_receive: order index out of range");
    const auto& l = links[k];
    if (std::abs(l.h) == 0.0) throw Error("classical_sic_receive: zero channel gain");
    const cplx scale = l.h * std::sqrt(l.power);
    std::vector<cplx> eq(cur.size());
    for (std::size_t t = 0; t < cur.size(); ++t) eq[t] = cur[t] / scale;
    const auto sliced = qam64_slice(eq);
    Bits bits = qam64_demodulate(sliced);
    if (config.repetition) bits = repetition_decode(bits);
    std::string sentence;
    const auto& codebook = codebooks.size() == 1 ? codebooks[0] : codebooks[k];
    for (const auto& w : codebook.decode(bits)) {
      if (w == kEnd) break;
      if (!sentence.empty()) sentence += ' ';
      sentence += w;
    }
    out[k] = sentence;
    for (std::size_t t = 0; t < cur.size(); ++t) cur[t] -= scale * sliced[t];
  }
  return out;
}

}  // namespace semsic::baseline
