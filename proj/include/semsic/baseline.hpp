#pragma once
// Conventional transmission chain: Huffman source coding, optional rate-1/3
// repetition coding, Gray-mapped 64-QAM, and hard-decision symbol-level SIC.

#include <complex>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "semsic/channel.hpp"

namespace semsic::baseline {

using Bits = std::vector<std::uint8_t>;
using channel::cplx;

class HuffmanCodebook {
 public:
  HuffmanCodebook() = default;
  // Deterministic construction; ties resolve by symbol order.  A single
  // symbol receives the 1-bit code "0".
  static HuffmanCodebook build(const std::map<std::string, double>& weights);
  // Word counts over normalized sentences plus one end marker per sentence.
  static HuffmanCodebook from_sentences(std::span<const std::string> sentences);

  bool contains(const std::string& word) const { return codes_.count(word) > 0; }
  const Bits& code(const std::string& word) const;
  std::size_t size() const { return codes_.size(); }

  Bits encode(std::span<const std::string> words) const;
  // Stops at the last complete code word; trailing bits that do not form one are dropped.
  std::vector<std::string> decode(std::span<const std::uint8_t> bits) const;

  double average_length(const std::map<std::string, double>& weights) const;

 private:
  struct TrieNode {
    int child[2] = {-1, -1};
    int symbol = -1;
  };
  std::map<std::string, Bits> codes_;
  std::vector<std::string> symbols_;
  std::vector<TrieNode> trie_;
};

double entropy_bits(const std::map<std::string, double>& weights);

// 64-QAM with 3 Gray-coded bits per axis on levels {-7..7}/sqrt(42).
const std::vector<cplx>& qam64_points();
std::vector<cplx> qam64_modulate(std::span<const std::uint8_t> bits);  // zero-pads to a multiple of 6
Bits qam64_demodulate(std::span<const cplx> symbols);
std::vector<cplx> qam64_slice(std::span<const cplx> symbols);  // nearest constellation points
double qam64_min_distance();

Bits repetition_encode(std::span<const std::uint8_t> bits);
Bits repetition_decode(std::span<const std::uint8_t> bits);

struct ClassicalConfig {
  std::size_t symbols_per_frame = 18 * 21;  // matched to the semantic frame
  bool repetition = false;
};

// Sentence bits (words then end marker), channel-coded, fitted to the frame
// budget, modulated and scaled by sqrt(P).
std::vector<cplx> classical_transmit(const std::string& sentence, const HuffmanCodebook& codebook,
                                     const ClassicalConfig& config, double power);
// Hard-decision SIC over one received frame.  links carry the frame's gains;
// codebooks holds one entry per link or a single shared one.  The output is
// aligned with links.  order lists link positions in decode order; empty means
// descending received power.
std::vector<std::string> classical_sic_receive(std::span<const cplx> y, std::span<const channel::UserLink> links,
                                               std::span<const HuffmanCodebook> codebooks,
                                               const ClassicalConfig& config,
                                               std::span<const std::size_t> order = {});

}  // namespace semsic::baseline
