#pragma once
// Losses, single-user pretraining, joint K-user training and full or partial
// retraining after new users join.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "semsic/channel.hpp"
#include "semsic/corpus.hpp"
#include "semsic/sic.hpp"

namespace semsic::training {

using ag::Tensor;
using OptimizerConfig = nn::AdamConfig;

// Two-term base-2 cross-entropy summed over positions and vocabulary entries,
// averaged over sentences.  Padding after the end marker is masked unless
// mask_padding is false.
Tensor loss_ce(const corpus::Batch& targets, const Tensor& logits, bool mask_padding = true);

double loss_joint(std::span<const double> per_user);
Tensor loss_joint(std::span<const Tensor> per_user);
// sum_{i=xi..rho} tau_i L_i with 1-based indices; tau empty means all ones.
double loss_fp(std::span<const double> per_user, std::size_t xi, std::size_t rho, std::span<const double> tau = {});
Tensor loss_fp(std::span<const Tensor> per_user, std::size_t xi, std::size_t rho, std::span<const double> tau = {});

enum class Stage { kPretrainSingle, kJointK, kRetrainFull, kRetrainPartial };
const char* to_string(Stage s);

struct LossReport {
  std::size_t step = 0;
  std::size_t epoch = 0;
  std::vector<double> per_user;  // NaN for users not decoded in the stage
  double aggregate = 0.0;
  double seconds_per_iteration = 0.0;
};

struct StageConfig {
  Stage stage = Stage::kJointK;
  std::size_t epochs = 1;
  std::size_t max_steps = 0;  // 0 = no cap
  std::size_t batch_size = 64;
  OptimizerConfig optimizer;
  std::vector<double> tau;  // per user; empty = all ones
  // Link sets cycled one per step, each holding one link per user.
  std::vector<std::vector<channel::UserLink>> link_sets;
  channel::Model model = channel::Model::kAwgn;
  double noise_power = 1.0;
  sic::SicOptions sic;
  std::size_t num_old = 0;  // old users leading the user list (retraining)
  std::uint64_t seed = 1;
  bool mask_padding = true;
  std::filesystem::path log_csv;  // empty = no log
  std::function<void(const LossReport&)> on_step;
};

// Runs one training stage.  users and sets are aligned; knowledge sets must be
// row-aligned.  Throws on a non-finite loss.
std::vector<LossReport> run_stage(std::span<sic::UserModel* const> users, std::span<const corpus::KnowledgeSet> sets,
                                  const StageConfig& config);

// End-to-end single-user training over the configured link.  epochs = 0 is a no-op.
std::vector<LossReport> pretrain_single_user(sic::UserModel& user, const corpus::KnowledgeSet& set,
                                             StageConfig config);
// L_joint over all K users, every stack trainable.
std::vector<LossReport> train_initial_K(std::span<sic::UserModel* const> users,
                                        std::span<const corpus::KnowledgeSet> sets, StageConfig config);

enum class RetrainMode { kFull, kPartial };
// users[0..num_old) are the trained old users, the rest are new.  Full mode
// trains every stack on L_FP(1, K+n); partial mode freezes the old users,
// decodes phase I only and trains on L_FP(K+1, K+n).
std::vector<LossReport> retrain(RetrainMode mode, std::span<sic::UserModel* const> users, std::size_t num_old,
                                std::span<const corpus::KnowledgeSet> sets, StageConfig config);

// Deep copy with independent parameter storage.
sic::UserModel clone(const sic::UserModel& model);

void write_loss_log(const std::vector<LossReport>& reports, std::size_t num_users, const std::filesystem::path& path,
                    const std::string& header_comment = {});

}  // namespace semsic::training
