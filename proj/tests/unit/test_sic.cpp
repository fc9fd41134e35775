#include <doctest.h>

#include <cmath>
#include <random>

#include "gradcheck.hpp"
#include "semsic/sic.hpp"

using namespace semsic;
using namespace semsic::sic;

namespace {

codec::CodecDims dims() {
  codec::CodecDims d;
  d.vocab = 12;
  d.d = d.m = 8;
  d.c = 4;
  d.N = 6;
  d.encoder_layers = d.decoder_layers = 1;
  d.heads = 2;
  d.dropout = 0.0;
  return d;
}

corpus::Batch batch(std::uint64_t seed, std::size_t rows = 3) {
  std::mt19937_64 rng(seed);
  corpus::Batch b;
  b.rows = rows;
  b.seq_len = 6;
  b.ids.assign(rows * 6, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    const int len = 2 + static_cast<int>(rng() % 4);
    b.lengths.push_back(len);
    for (int p = 0; p < len; ++p) b.ids[r * 6 + p] = 2 + static_cast<int>(rng() % 10);
    b.source_rows.push_back(r);
  }
  return b;
}

struct Tx {
  Tensor u, x, inv_scale;
};

Tx transmit(const UserModel& m, const corpus::Batch& b, double power) {
  ag::NoGradGuard g;
  Tx t;
  t.u = m.enc.semantic(b, {});
  const auto framed = codec::frame_symbols(m.enc.compress(t.u), b.lengths, m.dims(), power);
  t.x = framed.x;
  t.inv_scale = framed.inv_scale;
  return t;
}

double norm(const Tensor& t) {
  double s = 0.0;
  for (double v : t.value().data) s += v * v;
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("equalization") {
  channel::ReceivedFrame y{{{2, 2}}};
  channel::UserLink link;
  link.h = 2.0;
  CHECK(equalize(y, link)[0] == cplx(1, 1));
  link.h = 0.0;
  CHECK_THROWS_AS(equalize(y, link), Error);
  link.h = cplx(0.3, -0.8);
  channel::ReceivedFrame hx{{link.h * cplx(0.25, 4.0)}};
  CHECK(std::abs(equalize(hx, link)[0] - cplx(0.25, 4.0)) < 1e-15);
}

TEST_CASE("exact cancellation of three users") {
  std::mt19937_64 rng(1);
  const auto d = dims();
  std::vector<UserModel> models;
  for (std::size_t i = 1; i <= 3; ++i) models.emplace_back(i, d, rng);
  const double power[] = {4.0, 2.0, 1.0};
  const std::vector<cplx> h{{0.8, 0.3}, {-0.4, 1.1}, {1.0, 0.0}};
  std::vector<Tx> tx;
  std::vector<corpus::Batch> batches;
  for (std::size_t i = 0; i < 3; ++i) {
    batches.push_back(batch(10 + i));
    tx.push_back(transmit(models[i], batches[i], power[i]));
  }
  const std::size_t F = 3;
  Tensor y = Tensor::constant(Matrix(F, 2 * d.M()));
  std::vector<std::vector<cplx>> gains;
  for (std::size_t i = 0; i < 3; ++i) {
    gains.emplace_back(F, h[i]);
    y = ag::add(y, ag::complex_scale_rows(tx[i].x, gains[i]));
  }
  Tensor cur = y;
  for (std::size_t i = 0; i < 3; ++i) {
    const Tensor signal = ag::complex_scale_rows(tx[i].x, gains[i]);
    auto c = reencode_cancel(cur, tx[i].u, batches[i].lengths, models[i].enc, power[i], gains[i]);
    CHECK(norm(ag::sub(c.x_tilde, tx[i].x)) <= 1e-9 * norm(tx[i].x));
    cur = c.y;
    if (i == 0) {
      const auto x2 = equalize_frames(ag::sub(cur, ag::complex_scale_rows(tx[2].x, gains[2])), gains[1]);
      CHECK(norm(ag::sub(x2, tx[1].x)) <= 1e-12 * norm(tx[1].x));
    }
    (void)signal;
  }
  CHECK(norm(cur) <= 1e-9 * norm(y));

  // The same through text-level re-encoding from the true ids.
  cur = y;
  for (std::size_t i = 0; i < 3; ++i) cur = reencode_cancel_text(cur, batches[i].ids, models[i].enc, power[i], gains[i]).y;
  CHECK(norm(cur) <= 1e-9 * norm(y));
}

TEST_CASE("imperfect re-encoding still subtracts h x~") {
  std::mt19937_64 rng(2);
  const auto d = dims();
  UserModel m(1, d, rng);
  const auto b = batch(3);
  Tensor y = Tensor::constant(testing::random_matrix(3, 2 * d.M(), rng));
  Tensor u = Tensor::constant(testing::random_matrix(3 * d.N, d.m, rng));
  const std::vector<cplx> g(3, cplx(0.5, 0.5));
  auto c = reencode_cancel(y, u, b.lengths, m.enc, 1.0, g);
  const auto expect = ag::sub(y, ag::complex_scale_rows(c.x_tilde, g));
  CHECK(c.y.value().data == expect.value().data);
  // An empty decoded sentence cancels nothing.
  const std::vector<int> empty{0, 0, 0};
  auto e = reencode_cancel(y, u, empty, m.enc, 1.0, g);
  CHECK(e.y.value().data == y.value().data);
}

TEST_CASE("integrated feature generator") {
  std::mt19937_64 rng(3);
  IfgNet net(2, 1, 4, rng);
  for (std::size_t rows : {6u, 12u, 18u}) {
    auto r = Tensor::constant(testing::random_matrix(rows, 4, rng));
    std::vector<Tensor> cache{Tensor::constant(testing::random_matrix(rows, 4, rng))};
    const auto g = ifg_fuse(r, cache, net, 6);
    CHECK(g.rows() == rows);
    CHECK(g.cols() == 4);
    net.zero_fusion = true;
    const auto z = ifg_fuse(r, cache, net, 6);
    for (std::size_t i = 0; i < r.value().size(); ++i) CHECK(z.value().data[i] == std::max(0.0, r.value().data[i]));
    Matrix neg(rows, 4, -1.0);
    const auto clipped = ifg_fuse(Tensor::constant(neg), cache, net, 6);
    for (double v : clipped.value().data) CHECK(v == 0.0);
    net.zero_fusion = false;
  }
  auto r = Tensor::constant(testing::random_matrix(6, 4, rng));
  CHECK_THROWS_AS(ifg_fuse(r, {}, net, 6), Error);
  std::vector<Tensor> two{r, r};
  CHECK_THROWS_AS(ifg_fuse(r, two, net, 6), Error);
}

TEST_CASE("integrated feature generator gradients") {
  std::mt19937_64 rng(4);
  IfgNet net(3, 2, 2, rng);
  nn::ParamList params;
  net.collect("ifg", params);
  auto r = Tensor::parameter(testing::random_matrix(8, 2, rng));
  std::vector<Tensor> cache{Tensor::constant(testing::random_matrix(8, 2, rng)),
                            Tensor::constant(testing::random_matrix(8, 2, rng))};
  const Matrix w = testing::random_matrix(8, 2, rng);
  auto loss = [&] { return ag::sum_all(ag::mul(ifg_fuse(r, cache, net, 4), Tensor::constant(w))); };
  std::vector<Tensor> all{r};
  for (auto& [n, t] : params) all.push_back(t);
  CHECK(testing::max_grad_error(loss, all, 1e-6) < 1e-5);
}

TEST_CASE("identity-initialized fusion passes r_hat through and still learns") {
  std::mt19937_64 rng(6);
  IfgNet net(2, 1, 2, rng);
  net.start_as_identity();
  const auto r = Tensor::parameter(testing::random_matrix(8, 2, rng));
  const std::vector<Tensor> cache{Tensor::constant(testing::random_matrix(8, 2, rng))};
  net.outer_relu = false;
  CHECK(ifg_fuse(r, cache, net, 4).value().data == r.value().data);
  net.outer_relu = true;
  const auto g = ifg_fuse(r, cache, net, 4);
  for (std::size_t i = 0; i < g.value().size(); ++i) CHECK(g.value().data[i] == std::max(r.value().data[i], 0.0));

  nn::ParamList params;
  net.collect("ifg", params);
  const Matrix w = testing::random_matrix(8, 2, rng);
  ag::sum_all(ag::mul(ifg_fuse(r, cache, net, 4), Tensor::constant(w))).backward();
  double last = 0.0;
  for (auto& [n, t] : params)
    if (n.find("deconv2.weight") != std::string::npos)
      for (double v : t.grad().data) last += std::abs(v);
  CHECK(last > 0.0);
}

namespace {

struct System {
  std::vector<UserModel> models;
  std::vector<corpus::Batch> batches;
  std::vector<Tx> tx;
  std::vector<SicUser> users;
  Tensor y;
};

System make_system(std::size_t K, std::span<const double> power, std::uint64_t seed, bool with_ifg) {
  std::mt19937_64 rng(seed);
  System s;
  const auto d = dims();
  std::vector<channel::UserLink> links(K);
  for (std::size_t i = 0; i < K; ++i) links[i].power = power[i];
  const auto order = channel::order_users(links);
  for (std::size_t i = 1; i <= K; ++i) s.models.emplace_back(i, d, rng);
  for (std::size_t p = 1; with_ifg && p < K; ++p) s.models[order[p]].attach_ifg(p, rng);
  s.y = Tensor::constant(Matrix(3, 2 * d.M()));
  for (std::size_t i = 0; i < K; ++i) {
    s.batches.push_back(batch(seed * 10 + i));
    s.tx.push_back(transmit(s.models[i], s.batches[i], power[i]));
    SicUser u;
    u.model = &s.models[i];
    u.link.index = i + 1;
    u.link.power = power[i];
    u.gains.assign(3, cplx(1, 0));
    u.inv_scale = s.tx[i].inv_scale;
    s.users.push_back(u);
    s.y = ag::add(s.y, s.tx[i].x);
  }
  return s;
}

}  // namespace

TEST_CASE("single-user SIC reduces to the reverse pipeline") {
  const double p[] = {2.0};
  auto s = make_system(1, p, 5, false);
  ag::NoGradGuard g;
  const auto out = semantic_sic_decode(s.y, s.users, {});
  const auto r_hat = codec::unframe_symbols(s.y, s.tx[0].inv_scale, s.models[0].dims());
  const auto probs = codec::decode_features(r_hat, s.models[0].dec);
  CHECK(out.ids[0] == codec::harden(probs));
  CHECK(out.order == std::vector<std::size_t>{0});
}

TEST_CASE("decode order is internal") {
  const double p[] = {1.0, 4.0, 2.0};
  auto s = make_system(3, p, 6, true);
  ag::NoGradGuard g;
  for (bool si : {false, true}) {
    SicOptions opt;
    opt.use_si = si;
    const auto a = semantic_sic_decode(s.y, s.users, opt);
    CHECK(a.order == std::vector<std::size_t>{1, 2, 0});
    std::vector<SicUser> perm{s.users[2], s.users[0], s.users[1]};
    const auto b = semantic_sic_decode(s.y, perm, opt);
    CHECK(b.ids[0] == a.ids[2]);
    CHECK(b.ids[1] == a.ids[0]);
    CHECK(b.ids[2] == a.ids[1]);
  }
}

TEST_CASE("missing fusion network is an error with side information on") {
  const double p[] = {4.0, 1.0};
  auto s = make_system(2, p, 7, false);
  ag::NoGradGuard g;
  SicOptions opt;
  opt.use_si = true;
  CHECK_THROWS_AS(semantic_sic_decode(s.y, s.users, opt), Error);
  opt.use_si = false;
  CHECK_NOTHROW(semantic_sic_decode(s.y, s.users, opt));
}

TEST_CASE("two-phase planning") {
  std::vector<channel::UserLink> links(4);
  const double p[] = {8.0, 4.0, 1.0, 2.0};
  for (std::size_t i = 0; i < 4; ++i) links[i].power = p[i];
  auto plan = make_plan(links, 3);
  CHECK(plan.g1 == std::vector<std::size_t>{0, 1});
  CHECK(plan.g2 == std::vector<std::size_t>{2});
  CHECK(plan.new_users == std::vector<std::size_t>{3});
  links[3].power = 16.0;
  plan = make_plan(links, 3);
  CHECK(plan.g1.empty());
  CHECK(plan.g2.size() == 3);
  plan = make_plan(links, 4);
  CHECK(plan.new_users.empty());
}

TEST_CASE("two-phase decoding") {
  const double p[] = {8.0, 4.0, 1.0};
  auto s = make_system(3, p, 8, true);
  ag::NoGradGuard g;
  SicOptions opt;
  opt.use_si = true;

  SUBCASE("no new users degenerates to plain SIC") {
    std::vector<SicUser> old(s.users.begin(), s.users.begin() + 2);
    Tensor y_old = ag::add(s.tx[0].x, s.tx[1].x);
    const auto a = two_phase_decode(y_old, old, 2, opt);
    const auto b = semantic_sic_decode(y_old, old, opt);
    CHECK(a.ids == b.ids);
  }
  SUBCASE("perfect new-user cancellation reproduces the K-user system") {
    std::vector<channel::UserLink> links;
    for (auto& u : s.users) links.push_back(u.link);
    const auto plan = make_plan(links, 2);
    CHECK(plan.g1 == std::vector<std::size_t>{0, 1});
    const std::vector<std::vector<int>> truth{s.batches[2].ids};
    const auto two = phase_two(s.y, s.users, plan, truth, opt);
    std::vector<SicUser> old(s.users.begin(), s.users.begin() + 2);
    const Tensor y_old = ag::add(s.tx[0].x, s.tx[1].x);
    const auto k = semantic_sic_decode(y_old, old, opt);
    CHECK(two.ids[0] == k.ids[0]);
    CHECK(two.ids[1] == k.ids[1]);
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < k.logits[i].value().size(); ++j)
        CHECK(std::abs(two.logits[i].value().data[j] - k.logits[i].value().data[j]) < 1e-9);
    const auto full = two_phase_decode(s.y, s.users, 2, opt);
    CHECK(full.ids[2].size() == s.batches[2].ids.size());
  }
  SUBCASE("strongest new user is decoded first") {
    s.users[2].link.power = 100.0;
    s.models[2].ifg.reset();
    s.models[1].ifg.reset();
    opt.use_si = false;
    const auto out = two_phase_decode(s.y, s.users, 2, opt);
    CHECK(out.order.front() == 2);
  }
}

TEST_CASE("gradients flow through the whole SIC receiver") {
  const double p[] = {4.0, 1.0};
  std::mt19937_64 rng(9);
  codec::CodecDims d;
  d.vocab = 6;
  d.d = d.m = 4;
  d.c = 2;
  d.N = 3;
  d.encoder_layers = d.decoder_layers = 1;
  d.heads = 1;
  d.dropout = 0.0;
  std::vector<UserModel> models;
  for (std::size_t i = 1; i <= 2; ++i) models.emplace_back(i, d, rng);
  models[1].attach_ifg(1, rng);
  corpus::Batch b;
  b.rows = 2;
  b.seq_len = 3;
  b.ids = {2, 3, 0, 4, 0, 0};
  b.lengths = {2, 1};
  b.source_rows = {0, 1};
  nn::ParamList params;
  for (auto& m : models) {
    auto ps = m.params();
    params.insert(params.end(), ps.begin(), ps.end());
  }
  std::normal_distribution<double> jitter(0.0, 0.1);
  for (auto& [n, t] : params)
    if (n.ends_with("bias"))
      for (auto& v : t.mutable_value().data) v += jitter(rng);
  const std::vector<double> w{1, 1, 1, 1, 1, 0};
  const Matrix noise = testing::random_matrix(2, 2 * d.M(), rng, 0.3);
  auto loss = [&] {
    std::vector<Tensor> frames;
    std::vector<SicUser> users;
    std::vector<std::vector<cplx>> gains{{{1, 0}, {0.6, 0.8}}, {{0, 1}, {1, 0}}};
    for (std::size_t i = 0; i < 2; ++i) {
      auto f = codec::frame_symbols(models[i].enc.compress(models[i].enc.semantic(b, {})), b.lengths, d, p[i]);
      frames.push_back(f.x);
      SicUser u;
      u.model = &models[i];
      u.link.power = p[i];
      u.gains = gains[i];
      u.inv_scale = f.inv_scale;
      users.push_back(u);
    }
    const auto y = channel::superpose(frames, gains, noise);
    SicOptions opt;
    opt.use_si = true;
    opt.detach_side_info = false;
    const auto out = semantic_sic_decode(y, users, opt);
    return ag::add(ag::softmax_bce_loss(out.logits[0], b.ids, w, 2.0),
                   ag::softmax_bce_loss(out.logits[1], b.ids, w, 2.0));
  };
  std::vector<Tensor> all;
  for (auto& [n, t] : params) all.push_back(t);
  CHECK(testing::max_grad_error(loss, all, 1e-6) < 1e-4);
}
