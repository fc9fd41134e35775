#pragma once
// Experiment configuration: JSON documents checked against a versioned schema
// before any compute, plus a stable content hash.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "semsic/channel.hpp"
#include "semsic/codec.hpp"
#include "semsic/nn.hpp"
#include "semsic/sic.hpp"

namespace semsic::config {

using Json = nlohmann::json;

// Subset of JSON Schema: type, properties, required, additionalProperties
// (boolean), enum, minimum, maximum, exclusiveMinimum, exclusiveMaximum,
// items, minItems, maxItems.  Returns one message per violation with its path.
std::vector<std::string> validate_schema(const Json& schema, const Json& doc);
const Json& experiment_schema();

enum class Method { kFullSi, kFullNoSi, kPartialSi, kPartialNoSi, kIsolated, kClassical };
const char* to_string(Method m);
Method parse_method(const std::string& s);
bool uses_si(Method m);

struct ExperimentConfig {
  std::string name;
  std::string scenario;  // two_plus_one, three_plus_two, custom
  channel::Model model = channel::Model::kAwgn;
  std::vector<std::size_t> cases;
  std::vector<std::size_t> train_cases;
  std::size_t num_old = 0;
  std::size_t num_new = 0;
  std::vector<std::vector<double>> custom_snrs_db;
  std::vector<Method> methods;

  codec::CodecDims dims;
  nn::AdamConfig optimizer;
  std::size_t pretrain_epochs = 20;
  std::size_t joint_epochs = 15;
  std::size_t retrain_epochs = 15;
  std::size_t batch_size = 64;
  std::vector<std::uint64_t> seeds;
  std::vector<double> tau;
  sic::Reencode reencode = sic::Reencode::kFeature;
  bool mask_padding = true;
  bool detach_side_info = true;
  bool ifg_outer_relu = true;
  bool ifg_identity_init = true;

  std::filesystem::path corpus_path;
  std::size_t max_lines = 2000;
  std::size_t vocab_cap = 3000;
  std::size_t min_count = 1;
  double test_fraction = 0.1;
  std::uint64_t split_seed = 7;

  std::string eval_split = "test";
  std::size_t eval_sentences = 0;  // 0 = whole split
  std::string embedder = "hash";
  std::filesystem::path embedding_table;
  double repetition_penalty = 1.0;
  double threshold = 0.0;
  std::uint64_t eval_seed = 1000;

  bool baseline_repetition = false;
  std::filesystem::path output_dir = "results";

  Json document;  // effective configuration after defaults and overrides

  std::size_t num_users() const { return num_old + num_new; }
  std::size_t num_cases() const;
  // SNRs in decoding order for one case (1-based).
  std::vector<double> snrs_db(std::size_t case_index) const;
  std::vector<channel::UserLink> links(std::size_t case_index) const;
  // FNV-1a over the canonical dump of the effective document.
  std::string hash() const;
  // Hash of the fields that determine trained parameters.
  std::string training_hash() const;
};

// Relative paths resolve against base_dir.
ExperimentConfig parse_config(const Json& doc, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

std::string fnv1a_hex(const std::string& text);

}  // namespace semsic::config
