#include "semsic/sic.hpp"

#include <algorithm>
#include <cmath>

namespace semsic::sic {

std::vector<cplx> equalize(const channel::ReceivedFrame& y, const channel::UserLink& link) {
  if (std::abs(link.h) == 0.0) throw Error("equalize: zero channel gain");
  std::vector<cplx> out(y.y.size());
  for (std::size_t t = 0; t < out.size(); ++t) out[t] = y.y[t] / link.h;
  return out;
}

Tensor equalize_frames(const Tensor& y, std::span<const cplx> gains) {
  std::vector<cplx> inv(gains.size());
  for (std::size_t f = 0; f < gains.size(); ++f) {
    if (std::abs(gains[f]) == 0.0) throw Error("equalize: zero channel gain");
    inv[f] = 1.0 / gains[f];
  }
  return ag::complex_scale_rows(y, inv);
}

// ---------------------------------------------------------------------------

FeatureExtractor::FeatureExtractor(std::size_t c, std::mt19937_64& rng)
    : conv1(c, 2 * c, rng), conv2(2 * c, c, rng), gdn1(2 * c, false), gdn2(c, false) {}

Tensor FeatureExtractor::operator()(const Tensor& x, std::size_t seq_len) const {
  return gdn2(conv2(gdn1(conv1(x, seq_len)), seq_len));
}

void FeatureExtractor::collect(const std::string& prefix, nn::ParamList& out) const {
  conv1.collect(prefix + ".conv1", out);
  gdn1.collect(prefix + ".gdn1", out);
  conv2.collect(prefix + ".conv2", out);
  gdn2.collect(prefix + ".gdn2", out);
}

FusionNet::FusionNet(std::size_t in, std::size_t c, std::mt19937_64& rng)
    : deconv1(in, 2 * c, rng), deconv2(2 * c, c, rng), igdn1(2 * c, true), igdn2(c, true) {}

Tensor FusionNet::operator()(const Tensor& x, std::size_t seq_len) const {
  return igdn2(deconv2(igdn1(deconv1(x, seq_len)), seq_len));
}

void FusionNet::collect(const std::string& prefix, nn::ParamList& out) const {
  deconv1.collect(prefix + ".deconv1", out);
  igdn1.collect(prefix + ".igdn1", out);
  deconv2.collect(prefix + ".deconv2", out);
  igdn2.collect(prefix + ".igdn2", out);
}

void FusionNet::zero_output() {
  for (auto* t : {&deconv2.weight, &deconv2.bias})
    std::fill(t->mutable_value().data.begin(), t->mutable_value().data.end(), 0.0);
}

IfgNet::IfgNet(std::size_t user_index, std::size_t side_inputs, std::size_t c, std::mt19937_64& rng)
    : user_(user_index), c_(c) {
  if (side_inputs == 0) throw Error("IFG: at least one side input is required");
  pi_ = FeatureExtractor(c, rng);
  for (std::size_t j = 0; j < side_inputs; ++j) omega_.emplace_back(c, rng);
  theta_ = FusionNet((side_inputs + 1) * c, c, rng);
}

Tensor IfgNet::operator()(const Tensor& r_hat, std::span<const Tensor> side, std::size_t seq_len) const {
  if (side.size() != omega_.size())
    throw Error("IFG of user " + std::to_string(user_) + " expects " + std::to_string(omega_.size()) +
                " side inputs, got " + std::to_string(side.size()));
  if (r_hat.cols() != c_) throw Error("IFG: feature width mismatch");
  if (zero_fusion) return outer_relu ? ag::relu(r_hat) : r_hat;
  std::vector<Tensor> parts;
  parts.reserve(side.size() + 1);
  parts.push_back(pi_(r_hat, seq_len));
  for (std::size_t j = 0; j < side.size(); ++j) {
    if (!side[j].value().same_shape(r_hat.value())) throw Error("IFG: side information shape mismatch");
    parts.push_back(omega_[j](side[j], seq_len));
  }
  const Tensor g = ag::add(theta_(ag::concat_cols(parts), seq_len), r_hat);
  return outer_relu ? ag::relu(g) : g;
}

void IfgNet::collect(const std::string& prefix, nn::ParamList& out) const {
  pi_.collect(prefix + ".pi", out);
  for (std::size_t j = 0; j < omega_.size(); ++j) omega_[j].collect(prefix + ".omega" + std::to_string(j + 1), out);
  theta_.collect(prefix + ".theta", out);
}

Tensor ifg_fuse(const Tensor& r_hat, std::span<const Tensor> cache, const IfgNet& net, std::size_t seq_len) {
  if (cache.empty()) throw Error("ifg_fuse: side information cache is empty");
  return net(r_hat, cache, seq_len);
}

// ---------------------------------------------------------------------------

UserModel::UserModel(std::size_t index_, const codec::CodecDims& dims, std::mt19937_64& rng)
    : index(index_), enc(index_, dims, rng), dec(index_, dims, rng) {}

void UserModel::attach_ifg(std::size_t side_inputs, std::mt19937_64& rng) {
  ifg.emplace(index, side_inputs, dims().c, rng);
}

nn::ParamList UserModel::codec_params() const {
  nn::ParamList out;
  const std::string p = "u" + std::to_string(index);
  enc.collect(p + ".enc", out);
  dec.collect(p + ".dec", out);
  return out;
}

nn::ParamList UserModel::params() const {
  auto out = codec_params();
  if (ifg) ifg->collect("u" + std::to_string(index) + ".ifg", out);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

Cancellation cancel_frames(const Tensor& y, const Tensor& r_tilde, std::span<const int> lengths,
                           const codec::CodecDims& dims, double power, std::span<const cplx> gains) {
  const auto framed = codec::frame_symbols(r_tilde, lengths, dims, power, true);
  Cancellation out;
  out.x_tilde = framed.x;
  out.y = ag::sub(y, ag::complex_scale_rows(framed.x, gains));
  std::vector<double> keep(r_tilde.rows(), 0.0);
  for (std::size_t s = 0; s < lengths.size(); ++s)
    for (std::size_t p = 0; p < dims.N && static_cast<int>(p) < lengths[s]; ++p) keep[s * dims.N + p] = 1.0;
  out.r_tilde = ag::scale_rows(r_tilde, keep);
  return out;
}

corpus::Batch batch_from_ids(std::span<const int> ids, std::size_t N) {
  corpus::Batch b;
  b.seq_len = N;
  b.lengths = codec::decoded_lengths(ids, N);
  b.rows = b.lengths.size();
  b.ids.assign(ids.begin(), ids.end());
  for (std::size_t s = 0; s < b.rows; ++s)
    for (std::size_t p = static_cast<std::size_t>(b.lengths[s]); p < N; ++p) b.ids[s * N + p] = corpus::kEndId;
  b.source_rows.resize(b.rows);
  for (std::size_t s = 0; s < b.rows; ++s) b.source_rows[s] = s;
  return b;
}

std::vector<int> decide(const Tensor& logits, std::size_t N, double penalty) {
  if (penalty == 1.0) return codec::harden(logits.value());
  ag::NoGradGuard no_grad;
  return codec::greedy_decode_with_repetition_penalty(ag::softmax_rows(logits).value(), N, penalty);
}

}  // namespace

Cancellation reencode_cancel(const Tensor& y, const Tensor& u_hat, std::span<const int> lengths,
                             const codec::EncoderStack& enc, double power, std::span<const cplx> gains) {
  return cancel_frames(y, enc.compress(u_hat), lengths, enc.dims(), power, gains);
}

Cancellation reencode_cancel_text(const Tensor& y, std::span<const int> ids, const codec::EncoderStack& enc,
                                  double power, std::span<const cplx> gains) {
  const auto batch = batch_from_ids(ids, enc.dims().N);
  ag::NoGradGuard no_grad;
  const Tensor r = enc.compress(enc.semantic(batch, {}));
  return cancel_frames(y, r, batch.lengths, enc.dims(), power, gains);
}

SicOutput semantic_sic_decode(const Tensor& y, std::span<const SicUser> users, const SicOptions& opt) {
  if (users.empty()) throw Error("semantic_sic_decode: no users");
  std::vector<channel::UserLink> links;
  for (const auto& u : users) {
    if (u.model == nullptr) throw Error("semantic_sic_decode: missing user model");
    if (u.gains.size() != y.rows()) throw Error("semantic_sic_decode: one gain per frame required");
    links.push_back(u.link);
  }
  SicOutput out;
  out.order = channel::order_users(links);
  out.logits.resize(users.size());
  out.ids.resize(users.size());
  std::vector<Tensor> cache;
  Tensor cur = y;
  for (std::size_t p = 0; p < out.order.size(); ++p) {
    const std::size_t k = out.order[p];
    const SicUser& u = users[k];
    const UserModel& model = *u.model;
    const auto& dims = model.dims();
    const Tensor r_hat = codec::unframe_symbols(equalize_frames(cur, u.gains), u.inv_scale, dims);
    Tensor g = r_hat;
    if (opt.use_si && p > 0) {
      if (!model.ifg) throw Error("user " + std::to_string(model.index) + " has no fusion network");
      g = ifg_fuse(r_hat, cache, *model.ifg, dims.N);
    }
    const Tensor u_hat = model.dec.decompress(g);
    out.logits[k] = model.dec.logits(u_hat, opt.ctx);
    out.ids[k] = decide(out.logits[k], dims.N, opt.repetition_penalty);
    if (p + 1 < out.order.size() || opt.cancel_last) {
      const auto lengths = codec::decoded_lengths(out.ids[k], dims.N);
      Cancellation c = opt.reencode == Reencode::kFeature
                           ? reencode_cancel(cur, u_hat, lengths, model.enc, u.link.power, u.gains)
                           : reencode_cancel_text(cur, out.ids[k], model.enc, u.link.power, u.gains);
      cur = c.y;
      cache.push_back(opt.detach_side_info ? ag::detach(c.r_tilde) : c.r_tilde);
    }
  }
  out.residual = cur;
  return out;
}

// ---------------------------------------------------------------------------

TwoPhasePlan make_plan(std::span<const channel::UserLink> links, std::size_t num_old) {
  if (num_old > links.size()) throw Error("make_plan: more old users than links");
  TwoPhasePlan plan;
  if (num_old == links.size()) {
    for (std::size_t i = 0; i < num_old; ++i) plan.g2.push_back(i);
    return plan;
  }
  double weakest = links[num_old].received_power();
  for (std::size_t i = num_old; i < links.size(); ++i) {
    plan.new_users.push_back(i);
    weakest = std::min(weakest, links[i].received_power());
  }
  for (std::size_t i = 0; i < num_old; ++i)
    (links[i].received_power() >= weakest ? plan.g1 : plan.g2).push_back(i);
  return plan;
}

namespace {

SicOutput decode_subset(const Tensor& y, std::span<const SicUser> users, std::span<const std::size_t> subset,
                        const SicOptions& opt, SicOutput& into) {
  std::vector<SicUser> sub;
  for (auto i : subset) sub.push_back(users[i]);
  SicOutput part = semantic_sic_decode(y, sub, opt);
  for (std::size_t j = 0; j < subset.size(); ++j) {
    into.logits[subset[j]] = part.logits[j];
    into.ids[subset[j]] = part.ids[j];
  }
  for (auto o : part.order) into.order.push_back(subset[o]);
  into.residual = part.residual;
  return part;
}

}  // namespace

SicOutput phase_one(const Tensor& y, std::span<const SicUser> users, const TwoPhasePlan& plan,
                    const SicOptions& opt) {
  SicOutput out;
  out.logits.resize(users.size());
  out.ids.resize(users.size());
  std::vector<std::size_t> subset = plan.g1;
  subset.insert(subset.end(), plan.new_users.begin(), plan.new_users.end());
  if (subset.empty()) {
    out.residual = y;
    return out;
  }
  decode_subset(y, users, subset, opt, out);
  return out;
}

SicOutput phase_two(const Tensor& y, std::span<const SicUser> users, const TwoPhasePlan& plan,
                    std::span<const std::vector<int>> new_ids, const SicOptions& opt) {
  if (new_ids.size() != plan.new_users.size()) throw Error("phase_two: one id list per new user required");
  Tensor cur = y;
  for (std::size_t j = 0; j < plan.new_users.size(); ++j) {
    const SicUser& u = users[plan.new_users[j]];
    cur = reencode_cancel_text(cur, new_ids[j], u.model->enc, u.link.power, u.gains).y;
  }
  SicOutput out;
  out.logits.resize(users.size());
  out.ids.resize(users.size());
  std::vector<std::size_t> old = plan.g1;
  old.insert(old.end(), plan.g2.begin(), plan.g2.end());
  std::sort(old.begin(), old.end());
  decode_subset(cur, users, old, opt, out);
  return out;
}

SicOutput two_phase_decode(const Tensor& y, std::span<const SicUser> users, std::size_t num_old,
                           const SicOptions& opt) {
  std::vector<channel::UserLink> links;
  for (const auto& u : users) links.push_back(u.link);
  const auto plan = make_plan(links, num_old);
  if (plan.new_users.empty()) return semantic_sic_decode(y, users, opt);
  SicOutput one = phase_one(y, users, plan, opt);
  std::vector<std::vector<int>> new_ids;
  for (auto i : plan.new_users) new_ids.push_back(one.ids[i]);
  SicOutput two = phase_two(y, users, plan, new_ids, opt);
  for (auto i : plan.new_users) {
    two.logits[i] = one.logits[i];
    two.ids[i] = one.ids[i];
  }
  std::vector<std::size_t> order = one.order;
  order.insert(order.end(), two.order.begin(), two.order.end());
  two.order = std::move(order);
  return two;
}

}  // namespace semsic::sic
