#pragma once
// Staged experiment protocol: pretraining, joint K-user training, full or
// partial retraining after new users join, evaluation across SNR cases and the
// classical baseline.  Every stage is checkpointed under the output directory.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "semsic/config.hpp"
#include "semsic/corpus.hpp"
#include "semsic/metrics.hpp"
#include "semsic/sic.hpp"
#include "semsic/training.hpp"

namespace semsic::experiment {

using config::ExperimentConfig;
using config::Method;

struct Dataset {
  corpus::Vocabulary vocab;
  std::vector<corpus::KnowledgeSet> train, test;

  const std::vector<corpus::KnowledgeSet>& split(const std::string& name) const {
    return name == "train" ? train : test;
  }
};

Dataset load_dataset(const ExperimentConfig& cfg);

struct RunOptions {
  bool force = false;
  std::ostream* log = nullptr;  // progress lines
};

struct StageResult {
  std::vector<sic::UserModel> users;
  double seconds_per_iteration = 0.0;
  std::vector<double> epoch_loss;  // mean aggregate loss per epoch
};

// Lazily trains (or loads) the stages of one seed.
class Trainer {
 public:
  Trainer(const ExperimentConfig& cfg, const Dataset& data, std::uint64_t seed, RunOptions opts);

  // Single-user pretrained models for users 1..K+n.
  const StageResult& pretrained();
  // Jointly trained old users 1..K, initialized from pretraining or from scratch.
  const StageResult& joint(bool si, bool from_pretrained = true);
  // All K+n users after retraining.
  const StageResult& retrained(training::RetrainMode mode, bool si);

  const std::filesystem::path& checkpoint_dir() const { return ckpt_dir_; }

 private:
  using Init = std::function<std::vector<sic::UserModel>()>;
  using Train = std::function<std::vector<training::LossReport>(std::vector<sic::UserModel>&, training::StageConfig)>;
  const StageResult& stage(const std::string& name, const Init& init, const Train& train, std::size_t epochs);
  training::StageConfig stage_config(const std::string& name, std::size_t epochs, bool si) const;
  std::vector<std::vector<channel::UserLink>> link_sets(std::size_t first, std::size_t count) const;
  void log(const std::string& line) const;

  const ExperimentConfig& cfg_;
  const Dataset& data_;
  std::uint64_t seed_;
  RunOptions opts_;
  codec::CodecDims dims_;
  std::filesystem::path ckpt_dir_, log_dir_;
  std::map<std::string, std::unique_ptr<StageResult>> stages_;
};

// Creates or resizes fusion networks so that each user at decode position p > 0
// holds one with p side inputs.  New networks start as the identity on r_hat
// when identity_init is set.
void attach_fusion(std::vector<sic::UserModel>& users, std::span<const channel::UserLink> links, std::uint64_t seed,
                   bool outer_relu = true, bool identity_init = true);

// Decodes the evaluation rows of every user for one case.  Output [user][sentence].
std::vector<std::vector<std::string>> decode_case(Method method, const std::vector<sic::UserModel>& users,
                                                  const ExperimentConfig& cfg, const Dataset& data,
                                                  std::size_t case_index, std::uint64_t seed);
std::vector<std::vector<std::string>> classical_case(const ExperimentConfig& cfg, const Dataset& data,
                                                     std::size_t case_index, std::uint64_t seed);
// Reference texts of the evaluation rows, [user][sentence].
std::vector<std::vector<std::string>> references(const ExperimentConfig& cfg, const Dataset& data);

struct ResultRow {
  std::string scenario;
  std::size_t case_index = 0;
  std::string snrs_db;  // ';'-separated, decoding order
  std::string channel;
  std::string method;
  std::size_t user = 0;
  std::uint64_t seed = 0;
  double similarity = 0.0;
  std::array<double, 4> bleu{};
  double min_similarity = 0.0;
  double min_bleu1 = 0.0;
  bool meets_threshold = false;
  double seconds_per_iteration = 0.0;
};

const std::vector<std::string>& result_columns();
void write_results(const std::vector<ResultRow>& rows, const std::filesystem::path& path,
                   const std::string& config_hash);
std::vector<ResultRow> read_results(const std::filesystem::path& path);

std::unique_ptr<metrics::SentenceEmbedder> make_embedder(const ExperimentConfig& cfg);

// Rows for every (seed, case, method, user) of the configuration.
std::vector<ResultRow> run_experiment(const ExperimentConfig& cfg, const RunOptions& opts);
// Trains every stage the configured methods need without evaluating.
void train_all(const ExperimentConfig& cfg, const RunOptions& opts);
// Classical rows only.
std::vector<ResultRow> run_baseline(const ExperimentConfig& cfg, const RunOptions& opts);

struct LossCurves {
  std::vector<double> pretrained, scratch;  // mean joint loss per epoch
};
LossCurves loss_comparison(const ExperimentConfig& cfg, const Dataset& data, std::uint64_t seed,
                           const RunOptions& opts);

std::string format_snrs(const std::vector<double>& snrs);

}  // namespace semsic::experiment
