#include "semsic/channel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace semsic::channel {

namespace {

constexpr std::array<std::array<double, 3>, 7> kTwoPlusOne{{
    {-3.29, -5.95, -9.0},
    {-0.29, -2.95, -6.0},
    {2.71, 0.05, -3.0},
    {5.71, 3.05, 0.0},
    {8.71, 6.05, 3.0},
    {11.71, 9.05, 6.0},
    {14.71, 12.05, 9.0},
}};

constexpr std::array<std::array<double, 5>, 7> kThreePlusTwo{{
    {-3.29, -5.95, -6.27, -7.49, -9.0},
    {-0.29, -2.95, -3.27, -4.49, -6.0},
    {2.71, 0.05, -0.27, -1.49, -3.0},
    {5.71, 3.05, 2.73, 1.51, 0.0},
    {8.71, 6.05, 5.73, 4.51, 3.0},
    {11.71, 9.05, 8.73, 7.51, 6.0},
    {14.71, 12.05, 11.73, 10.51, 9.0},
}};

}  // namespace

Model parse_model(std::string_view name) {
  if (name == "awgn") return Model::kAwgn;
  if (name == "rayleigh") return Model::kRayleigh;
  throw Error("unknown channel model '" + std::string(name) + "'");
}

Scenario parse_scenario(std::string_view name) {
  if (name == "two_plus_one") return Scenario::kTwoPlusOne;
  if (name == "three_plus_two") return Scenario::kThreePlusTwo;
  throw Error("unknown scenario '" + std::string(name) + "'");
}

std::string_view to_string(Model m) { return m == Model::kAwgn ? "awgn" : "rayleigh"; }
std::string_view to_string(Scenario s) {
  return s == Scenario::kTwoPlusOne ? "two_plus_one" : "three_plus_two";
}

double UserLink::snr_db(double noise_power) const {
  return 10.0 * std::log10(received_power() / noise_power);
}

void ChannelConfig::validate() const {
  if (!(noise_power > 0.0)) throw Error("channel: noise power must be positive");
  if (case_index < 1 || case_index > 7) throw Error("channel: case index must be in 1..7");
}

std::vector<std::size_t> order_users(std::span<const UserLink> links) {
  std::vector<std::size_t> order(links.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return links[a].received_power() > links[b].received_power();
  });
  return order;
}

ReceivedFrame transmit_mac(std::span<const codec::SymbolFrame> frames, std::span<const UserLink> links,
                           double noise_power, std::mt19937_64& rng) {
  if (frames.empty()) throw Error("transmit_mac: no frames");
  if (frames.size() != links.size()) throw Error("transmit_mac: frames and links are not aligned");
  if (noise_power < 0.0) throw Error("transmit_mac: negative noise power");
  const std::size_t M = frames[0].symbols.size();
  ReceivedFrame out;
  out.y.assign(M, cplx(0.0, 0.0));
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].symbols.size() != M) throw Error("transmit_mac: frame lengths differ");
    for (std::size_t t = 0; t < M; ++t) out.y[t] += links[i].h * frames[i].symbols[t];
  }
  if (noise_power > 0.0) {
    std::normal_distribution<double> nd(0.0, std::sqrt(noise_power / 2.0));
    for (auto& v : out.y) {
      const double re = nd(rng);
      const double im = nd(rng);
      v += cplx(re, im);
    }
  }
  return out;
}

std::vector<double> case_snrs_db(Scenario scenario, std::size_t case_index) {
  if (case_index < 1 || case_index > 7) throw Error("case index must be in 1..7");
  if (scenario == Scenario::kTwoPlusOne) {
    const auto& r = kTwoPlusOne[case_index - 1];
    return {r.begin(), r.end()};
  }
  const auto& r = kThreePlusTwo[case_index - 1];
  return {r.begin(), r.end()};
}

CaseSetup links_from_snrs(std::span<const double> snrs_db) {
  CaseSetup setup;
  for (std::size_t i = 0; i < snrs_db.size(); ++i) {
    UserLink l;
    l.index = i + 1;
    l.power = std::pow(10.0, snrs_db[i] / 10.0) * setup.noise_power;
    setup.links.push_back(l);
  }
  return setup;
}

CaseSetup configure_case(Scenario scenario, std::size_t case_index, Model) {
  const auto snrs = case_snrs_db(scenario, case_index);
  auto setup = links_from_snrs(snrs);
  for (std::size_t i = 1; i < setup.links.size(); ++i)
    if (setup.links[i].received_power() > setup.links[i - 1].received_power())
      throw Error("configure_case: table row is not in decoding order");
  return setup;
}

std::vector<std::vector<cplx>> draw_gains(std::span<const UserLink> links, Model model,
                                          std::size_t frames, std::mt19937_64& rng) {
  std::vector<std::vector<cplx>> gains(links.size());
  std::normal_distribution<double> nd(0.0, std::sqrt(0.5));
  for (std::size_t i = 0; i < links.size(); ++i) {
    gains[i].resize(frames);
    for (std::size_t f = 0; f < frames; ++f) {
      if (model == Model::kAwgn) {
        gains[i][f] = links[i].h;
      } else {
        const double re = nd(rng);
        const double im = nd(rng);
        gains[i][f] = links[i].h * cplx(re, im);
      }
    }
  }
  return gains;
}

Matrix noise_frames(std::size_t frames, std::size_t symbols, double noise_power, std::mt19937_64& rng) {
  Matrix z(frames, 2 * symbols);
  if (noise_power <= 0.0) return z;
  std::normal_distribution<double> nd(0.0, std::sqrt(noise_power / 2.0));
  for (auto& v : z.data) v = nd(rng);
  return z;
}

ag::Tensor superpose(std::span<const ag::Tensor> frames, std::span<const std::vector<cplx>> gains,
                     const Matrix& noise) {
  if (frames.empty() || frames.size() != gains.size()) throw Error("superpose: inputs are not aligned");
  ag::Tensor y = ag::Tensor::constant(noise);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (!frames[i].value().same_shape(noise)) throw Error("superpose: frame shape mismatch");
    y = ag::add(y, ag::complex_scale_rows(frames[i], gains[i]));
  }
  return y;
}

}  // namespace semsic::channel
