#pragma once
// K-user multiple access channel: user ordering, superposition with complex
// Gaussian noise, block Rayleigh fading, and the tabulated SNR cases.

#include <complex>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "semsic/codec.hpp"
#include "semsic/tensor.hpp"

namespace semsic::channel {

using cplx = std::complex<double>;

enum class Model { kAwgn, kRayleigh };
enum class Scenario { kTwoPlusOne, kThreePlusTwo };

Model parse_model(std::string_view name);
Scenario parse_scenario(std::string_view name);
std::string_view to_string(Model m);
std::string_view to_string(Scenario s);

struct UserLink {
  std::size_t index = 0;  // 1-based user index
  double power = 1.0;     // P
  cplx h{1.0, 0.0};       // nominal gain; unit for Rayleigh (average)

  double received_power() const { return power * std::norm(h); }
  double snr_db(double noise_power = 1.0) const;
};

struct ChannelConfig {
  double noise_power = 1.0;
  Model model = Model::kAwgn;
  std::size_t case_index = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ReceivedFrame {
  std::vector<cplx> y;
};

// Positions into `links` sorted by descending P|h|^2, ties to the lower position.
std::vector<std::size_t> order_users(std::span<const UserLink> links);

// y = sum_i h_i x_i + z with z ~ CN(0, noise_power).
ReceivedFrame transmit_mac(std::span<const codec::SymbolFrame> frames, std::span<const UserLink> links,
                           double noise_power, std::mt19937_64& rng);

// Per-user SNRs in dB for a table row (case 1..7).
std::vector<double> case_snrs_db(Scenario scenario, std::size_t case_index);

struct CaseSetup {
  std::vector<UserLink> links;
  double noise_power = 1.0;
};

// Links with noise power 1 and P_i = 10^(snr_i/10); unit nominal gains.
CaseSetup configure_case(Scenario scenario, std::size_t case_index, Model model);
// Links for an arbitrary list of per-user SNRs.
CaseSetup links_from_snrs(std::span<const double> snrs_db);

// Per-frame gains for every link: the nominal h for AWGN, i.i.d. CN(0,1) per
// frame for Rayleigh.  Result is indexed [link][frame].
std::vector<std::vector<cplx>> draw_gains(std::span<const UserLink> links, Model model,
                                          std::size_t frames, std::mt19937_64& rng);

// Complex Gaussian noise frames [F x 2M] with per-component variance noise_power/2.
Matrix noise_frames(std::size_t frames, std::size_t symbols, double noise_power, std::mt19937_64& rng);

// Batched superposition of user frames [F x 2M] with per-frame gains plus noise.
ag::Tensor superpose(std::span<const ag::Tensor> frames, std::span<const std::vector<cplx>> gains,
                     const Matrix& noise);

}  // namespace semsic::channel
