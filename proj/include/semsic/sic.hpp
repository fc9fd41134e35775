#pragma once
// Base-station receiver: equalization, semantic successive interference
// cancellation with feature- or text-level re-encoding, side-information
// fusion through the integrated feature generator, and two-phase decoding
// after partial retraining.

#include <complex>
#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "semsic/channel.hpp"
#include "semsic/codec.hpp"
#include "semsic/nn.hpp"

namespace semsic::sic {

using ag::Tensor;
using channel::cplx;

// x_hat = y / h elementwise.
std::vector<cplx> equalize(const channel::ReceivedFrame& y, const channel::UserLink& link);
// Batched form over frames [F x 2M] with one gain per frame.
Tensor equalize_frames(const Tensor& y, std::span<const cplx> gains);

// Conv1d -> GDN -> Conv1d -> GDN, channels c -> 2c -> c.
struct FeatureExtractor {
  nn::Conv1d conv1, conv2;
  nn::Gdn gdn1, gdn2;
  FeatureExtractor() = default;
  FeatureExtractor(std::size_t c, std::mt19937_64& rng);
  Tensor operator()(const Tensor& x, std::size_t seq_len) const;
  void collect(const std::string& prefix, nn::ParamList& out) const;
};

// ConvTranspose1d -> IGDN -> ConvTranspose1d -> IGDN, channels in -> 2c -> c.
struct FusionNet {
  nn::ConvTranspose1d deconv1, deconv2;
  nn::Gdn igdn1, igdn2;
  FusionNet() = default;
  FusionNet(std::size_t in, std::size_t c, std::mt19937_64& rng);
  Tensor operator()(const Tensor& x, std::size_t seq_len) const;
  void collect(const std::string& prefix, nn::ParamList& out) const;
  void zero_output();  // output is exactly zero until trained
};

class IfgNet {
 public:
  IfgNet() = default;
  IfgNet(std::size_t user_index, std::size_t side_inputs, std::size_t c, std::mt19937_64& rng);

  std::size_t user_index() const { return user_; }
  std::size_t side_inputs() const { return omega_.size(); }
  // g = ReLU(theta(pi(r_hat), omega_1(r~_1), ...) + r_hat).
  Tensor operator()(const Tensor& r_hat, std::span<const Tensor> side, std::size_t seq_len) const;
  void collect(const std::string& prefix, nn::ParamList& out) const;
  // Zeroes theta's last layer so that g starts as r_hat (through the outer ReLU).
  void start_as_identity() { theta_.zero_output(); }

  bool zero_fusion = false;  // forces theta's output to zero
  bool outer_relu = true;    // false drops the ReLU around the residual sum

 private:
  std::size_t user_ = 0;
  std::size_t c_ = 0;
  FeatureExtractor pi_;
  std::vector<FeatureExtractor> omega_;
  FusionNet theta_;
};

// Applies the fusion network of user i to r_hat and the cached side information.
Tensor ifg_fuse(const Tensor& r_hat, std::span<const Tensor> cache, const IfgNet& net, std::size_t seq_len);

struct UserModel {
  std::size_t index = 0;  // 1-based user index
  codec::EncoderStack enc;
  codec::DecoderStack dec;
  std::optional<IfgNet> ifg;

  UserModel() = default;
  UserModel(std::size_t index, const codec::CodecDims& dims, std::mt19937_64& rng);
  // Creates (or replaces) the fusion network for a given decode position.
  void attach_ifg(std::size_t side_inputs, std::mt19937_64& rng);
  const codec::CodecDims& dims() const { return enc.dims(); }
  nn::ParamList params() const;
  nn::ParamList codec_params() const;
};

enum class Reencode { kFeature, kText };

struct SicOptions {
  bool use_si = false;
  Reencode reencode = Reencode::kFeature;
  nn::ForwardContext ctx;
  double repetition_penalty = 1.0;
  bool cancel_last = false;  // also cancel the final user (exposes the full residual)
  bool detach_side_info = true;  // cached r~ enter the fusion networks as constants
};

// One transmitting user as seen by the receiver.
struct SicUser {
  const UserModel* model = nullptr;
  channel::UserLink link;   // nominal link, defines decode order
  std::vector<cplx> gains;  // per frame
  Tensor inv_scale;         // [F x 1] known per-frame normalization
};

struct SicOutput {
  std::vector<Tensor> logits;         // aligned with the input users
  std::vector<std::vector<int>> ids;  // hard decisions, N per sentence
  std::vector<std::size_t> order;     // input positions in decode order
  Tensor residual;                    // y after every cancellation performed
};

struct Cancellation {
  Tensor y;        // y - h x~
  Tensor r_tilde;  // re-encoded features, [F*L*N x c]
  Tensor x_tilde;  // re-encoded frames, [F x 2M]
};

// Feature-level re-encoding r~ = AE(u_hat) masked to the decoded lengths.
Cancellation reencode_cancel(const Tensor& y, const Tensor& u_hat, std::span<const int> lengths,
                             const codec::EncoderStack& enc, double power, std::span<const cplx> gains);
// Text-level re-encoding through the full encoder from hard decisions.
Cancellation reencode_cancel_text(const Tensor& y, std::span<const int> ids, const codec::EncoderStack& enc,
                                  double power, std::span<const cplx> gains);

// Decodes every user of `users` from y by semantic SIC in descending received power.
SicOutput semantic_sic_decode(const Tensor& y, std::span<const SicUser> users, const SicOptions& opt);

struct TwoPhasePlan {
  std::vector<std::size_t> g1;         // old-user positions decoded in phase I
  std::vector<std::size_t> g2;         // remaining old users
  std::vector<std::size_t> new_users;  // positions of the new users
};

// users[0..num_old) are the old users, the rest are new.
TwoPhasePlan make_plan(std::span<const channel::UserLink> links, std::size_t num_old);

// Phase I only: SIC over G1 and the new users.  Output is aligned with `users`;
// entries of users outside phase I are left empty.
SicOutput phase_one(const Tensor& y, std::span<const SicUser> users, const TwoPhasePlan& plan,
                    const SicOptions& opt);
// Phase II: cancels ENC(T_hat) of every new user from y and runs the old-user decoder.
SicOutput phase_two(const Tensor& y, std::span<const SicUser> users, const TwoPhasePlan& plan,
                    std::span<const std::vector<int>> new_ids, const SicOptions& opt);
SicOutput two_phase_decode(const Tensor& y, std::span<const SicUser> users, std::size_t num_old,
                           const SicOptions& opt);

}  // namespace semsic::sic
