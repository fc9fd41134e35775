#include "semsic/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace semsic::training {

Tensor loss_ce(const corpus::Batch& targets, const Tensor& logits, bool mask_padding) {
  if (targets.rows == 0) throw Error("loss_ce: empty batch");
  if (logits.rows() != targets.rows * targets.seq_len) throw Error("loss_ce: logits/batch row mismatch");
  std::vector<double> w(targets.ids.size(), 1.0);
  if (mask_padding) {
    const auto mask = targets.content_mask();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = mask[i];
  }
  return ag::softmax_bce_loss(logits, targets.ids, w, static_cast<double>(targets.rows));
}

namespace {

void check_range(std::size_t n, std::size_t xi, std::size_t rho, std::span<const double> tau) {
  if (xi < 1 || xi > rho || rho > n) throw Error("loss_fp: empty or out-of-range user index range");
  if (!tau.empty() && tau.size() != n) throw Error("loss_fp: tau must hold one weight per user");
  for (double t : tau)
    if (!(t > 0.0)) throw Error("loss_fp: tau must be positive");
}

double weight(std::span<const double> tau, std::size_t i) { return tau.empty() ? 1.0 : tau[i]; }

}  // namespace

double loss_joint(std::span<const double> per_user) {
  if (per_user.empty()) throw Error("loss_joint: no users");
  double s = 0.0;
  for (double v : per_user) s += v;
  return s;
}

Tensor loss_joint(std::span<const Tensor> per_user) {
  if (per_user.empty()) throw Error("loss_joint: no users");
  Tensor s = per_user[0];
  for (std::size_t i = 1; i < per_user.size(); ++i) s = ag::add(s, per_user[i]);
  return s;
}

double loss_fp(std::span<const double> per_user, std::size_t xi, std::size_t rho, std::span<const double> tau) {
  check_range(per_user.size(), xi, rho, tau);
  double s = 0.0;
  for (std::size_t i = xi - 1; i < rho; ++i) s += weight(tau, i) * per_user[i];
  return s;
}

Tensor loss_fp(std::span<const Tensor> per_user, std::size_t xi, std::size_t rho, std::span<const double> tau) {
  check_range(per_user.size(), xi, rho, tau);
  Tensor s;
  for (std::size_t i = xi - 1; i < rho; ++i) {
    const double w = weight(tau, i);
    Tensor term = w == 1.0 ? per_user[i] : ag::scale(per_user[i], w);
    s = s.defined() ? ag::add(s, term) : term;
  }
  return s;
}

const char* to_string(Stage s) {
  switch (s) {
    case Stage::kPretrainSingle: return "pretrain_single";
    case Stage::kJointK: return "joint_K";
    case Stage::kRetrainFull: return "retrain_full";
    case Stage::kRetrainPartial: return "retrain_partial";
  }
  return "?";
}

std::vector<LossReport> run_stage(std::span<sic::UserModel* const> users, std::span<const corpus::KnowledgeSet> sets,
                                  const StageConfig& config) {
  const std::size_t K = users.size();
  if (K == 0 || sets.size() != K) throw Error("run_stage: need one knowledge set per user");
  for (const auto& s : sets)
    if (s.size() != sets[0].size() || s.size() == 0) throw Error("run_stage: knowledge sets must be non-empty and row-aligned");
  if (config.link_sets.empty()) throw Error("run_stage: no link sets");
  for (const auto& ls : config.link_sets)
    if (ls.size() != K) throw Error("run_stage: link set size differs from user count");
  if (config.batch_size == 0) throw Error("run_stage: batch size must be positive");
  config.optimizer.validate();
  const bool partial = config.stage == Stage::kRetrainPartial;
  if (partial && (config.num_old == 0 || config.num_old >= K))
    throw Error("run_stage: partial retraining needs old and new users");
  const std::size_t xi = partial ? config.num_old + 1 : 1;
  const std::size_t rho = K;

  const auto& dims = users[0]->dims();
  nn::ParamList params;
  for (auto* u : users) {
    auto p = u->params();
    params.insert(params.end(), p.begin(), p.end());
  }
  nn::Adam adam(params, config.optimizer);
  adam.zero_grad();

  std::mt19937_64 rng(config.seed);
  std::mt19937_64 dropout_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  nn::ForwardContext ctx{true, dims.dropout, &dropout_rng};
  sic::SicOptions sopt = config.sic;
  sopt.ctx = ctx;

  corpus::BatchSource source(sets[0].size(), config.batch_size, config.seed);
  std::vector<LossReport> reports;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (const auto& rows : source.epoch(epoch)) {
      if (config.max_steps && step >= config.max_steps) break;
      const auto t0 = std::chrono::steady_clock::now();
      const auto& links = config.link_sets[step % config.link_sets.size()];
      std::vector<corpus::Batch> batches;
      for (std::size_t i = 0; i < K; ++i) batches.push_back(corpus::make_batch(sets[i], rows, dims.N));
      const std::size_t F = rows.size() / dims.L;
      if (F * dims.L != rows.size()) throw Error("run_stage: batch size must be a multiple of L");

      const auto gains = channel::draw_gains(links, config.model, F, rng);
      const Matrix noise = channel::noise_frames(F, dims.M(), config.noise_power, rng);
      std::vector<Tensor> frames;
      std::vector<sic::SicUser> sic_users;
      for (std::size_t i = 0; i < K; ++i) {
        const auto& enc = users[i]->enc;
        auto framed = codec::frame_symbols(enc.compress(enc.semantic(batches[i], ctx)), batches[i].lengths,
                                           users[i]->dims(), links[i].power);
        frames.push_back(framed.x);
        sic::SicUser su;
        su.model = users[i];
        su.link = links[i];
        su.gains = gains[i];
        su.inv_scale = framed.inv_scale;
        sic_users.push_back(std::move(su));
      }
      const Tensor y = channel::superpose(frames, gains, noise);
      sic::SicOutput out;
      if (partial) {
        const auto plan = sic::make_plan(links, config.num_old);
        out = sic::phase_one(y, sic_users, plan, sopt);
      } else {
        out = sic::semantic_sic_decode(y, sic_users, sopt);
      }

      std::vector<Tensor> losses(K);
      LossReport rep;
      rep.step = step;
      rep.epoch = epoch;
      rep.per_user.assign(K, std::numeric_limits<double>::quiet_NaN());
      for (std::size_t i = 0; i < K; ++i) {
        if (!out.logits[i].defined()) {
          if (i + 1 >= xi) throw Error("run_stage: trained user was not decoded");
          losses[i] = Tensor::constant(Matrix(1, 1));
          continue;
        }
        losses[i] = loss_ce(batches[i], out.logits[i], config.mask_padding);
        rep.per_user[i] = losses[i].item();
      }
      const Tensor total = loss_fp(losses, xi, rho, config.tau);
      rep.aggregate = total.item();
      if (!std::isfinite(rep.aggregate))
        throw Error("training diverged: non-finite loss at step " + std::to_string(step));
      total.backward();
      adam.step();
      rep.seconds_per_iteration = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (config.on_step) config.on_step(rep);
      reports.push_back(std::move(rep));
      ++step;
    }
    if (config.max_steps && step >= config.max_steps) break;
  }
  if (!config.log_csv.empty()) write_loss_log(reports, K, config.log_csv, to_string(config.stage));
  return reports;
}

std::vector<LossReport> pretrain_single_user(sic::UserModel& user, const corpus::KnowledgeSet& set,
                                             StageConfig config) {
  config.stage = Stage::kPretrainSingle;
  if (config.epochs == 0) return {};
  if (set.size() == 0) throw Error("pretrain_single_user: empty corpus");
  for (auto& ls : config.link_sets)
    if (ls.size() != 1) throw Error("pretrain_single_user: link sets must hold one link");
  sic::UserModel* ptr = &user;
  nn::set_trainable(user.params(), true);
  return run_stage(std::span(&ptr, 1), std::span(&set, 1), config);
}

std::vector<LossReport> train_initial_K(std::span<sic::UserModel* const> users,
                                        std::span<const corpus::KnowledgeSet> sets, StageConfig config) {
  config.stage = Stage::kJointK;
  for (auto* u : users) nn::set_trainable(u->params(), true);
  return run_stage(users, sets, config);
}

std::vector<LossReport> retrain(RetrainMode mode, std::span<sic::UserModel* const> users, std::size_t num_old,
                                std::span<const corpus::KnowledgeSet> sets, StageConfig config) {
  config.num_old = num_old;
  for (auto* u : users) nn::set_trainable(u->params(), true);
  if (mode == RetrainMode::kFull) {
    config.stage = Stage::kRetrainFull;
    return run_stage(users, sets, config);
  }
  config.stage = Stage::kRetrainPartial;
  for (std::size_t i = 0; i < num_old && i < users.size(); ++i) nn::set_trainable(users[i]->params(), false);
  struct Restore {
    std::span<sic::UserModel* const> u;
    ~Restore() {
      for (auto* m : u) nn::set_trainable(m->params(), true);
    }
  } restore{users};
  return run_stage(users, sets, config);
}

sic::UserModel clone(const sic::UserModel& model) {
  std::mt19937_64 rng(0);
  sic::UserModel copy(model.index, model.dims(), rng);
  if (model.ifg) {
    copy.attach_ifg(model.ifg->side_inputs(), rng);
    copy.ifg->zero_fusion = model.ifg->zero_fusion;
    copy.ifg->outer_relu = model.ifg->outer_relu;
  }
  const auto src = model.params();
  auto dst = copy.params();
  if (src.size() != dst.size()) throw Error("clone: parameter layout mismatch");
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i].first != dst[i].first) throw Error("clone: parameter layout mismatch");
    dst[i].second.mutable_value() = src[i].second.value();
    dst[i].second.set_requires_grad(src[i].second.requires_grad());
  }
  return copy;
}

void write_loss_log(const std::vector<LossReport>& reports, std::size_t num_users, const std::filesystem::path& path,
                    const std::string& header_comment) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  if (!header_comment.empty()) out << "# " << header_comment << '\n';
  out << "step,epoch";
  for (std::size_t i = 1; i <= num_users; ++i) out << ",loss_u" << i;
  out << ",aggregate,seconds_per_iteration\n";
  char buf[64];
  for (const auto& r : reports) {
    out << r.step << ',' << r.epoch;
    for (double v : r.per_user) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << ',' << (std::isnan(v) ? std::string() : std::string(buf));
    }
    std::snprintf(buf, sizeof buf, "%.17g", r.aggregate);
    out << ',' << buf;
    std::snprintf(buf, sizeof buf, "%.6f", r.seconds_per_iteration);
    out << ',' << buf << '\n';
  }
}

}  // namespace semsic::training
