#include "semsic/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

namespace semsic::config {

extern const char* const kExperimentSchemaText;

namespace {

bool type_matches(const std::string& type, const Json& v) {
  if (type == "object") return v.is_object();
  if (type == "array") return v.is_array();
  if (type == "string") return v.is_string();
  if (type == "integer") return v.is_number_integer();
  if (type == "number") return v.is_number();
  if (type == "boolean") return v.is_boolean();
  if (type == "null") return v.is_null();
  return false;
}

void validate_at(const Json& schema, const Json& doc, const std::string& path, std::vector<std::string>& errors) {
  const std::string where = path.empty() ? "/" : path;
  if (schema.contains("type") && !type_matches(schema["type"].get<std::string>(), doc)) {
    errors.push_back(where + ": expected " + schema["type"].get<std::string>());
    return;
  }
  if (schema.contains("enum")) {
    bool found = false;
    for (const auto& e : schema["enum"]) found |= e == doc;
    if (!found) errors.push_back(where + ": value " + doc.dump() + " not allowed");
  }
  if (doc.is_number()) {
    const double x = doc.get<double>();
    if (schema.contains("minimum") && x < schema["minimum"].get<double>())
      errors.push_back(where + ": below minimum " + schema["minimum"].dump());
    if (schema.contains("maximum") && x > schema["maximum"].get<double>())
      errors.push_back(where + ": above maximum " + schema["maximum"].dump());
    if (schema.contains("exclusiveMinimum") && x <= schema["exclusiveMinimum"].get<double>())
      errors.push_back(where + ": must exceed " + schema["exclusiveMinimum"].dump());
    if (schema.contains("exclusiveMaximum") && x >= schema["exclusiveMaximum"].get<double>())
      errors.push_back(where + ": must be below " + schema["exclusiveMaximum"].dump());
  }
  if (doc.is_array()) {
    if (schema.contains("minItems") && doc.size() < schema["minItems"].get<std::size_t>())
      errors.push_back(where + ": needs at least " + schema["minItems"].dump() + " items");
    if (schema.contains("maxItems") && doc.size() > schema["maxItems"].get<std::size_t>())
      errors.push_back(where + ": allows at most " + schema["maxItems"].dump() + " items");
    if (schema.contains("items"))
      for (std::size_t i = 0; i < doc.size(); ++i)
        validate_at(schema["items"], doc[i], path + "/" + std::to_string(i), errors);
  }
  if (doc.is_object()) {
    if (schema.contains("required"))
      for (const auto& r : schema["required"])
        if (!doc.contains(r.get<std::string>())) errors.push_back(where + ": missing " + r.get<std::string>());
    const bool closed = schema.contains("additionalProperties") && schema["additionalProperties"] == false;
    for (const auto& [key, value] : doc.items()) {
      if (schema.contains("properties") && schema["properties"].contains(key))
        validate_at(schema["properties"][key], value, path + "/" + key, errors);
      else if (closed)
        errors.push_back(where + ": unknown key " + key);
    }
  }
}

template <typename T>
T get_or(const Json& obj, const char* key, T fallback) {
  return obj.contains(key) ? obj[key].get<T>() : fallback;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_relative() && !base.empty()) path = base / path;
  return path.lexically_normal();
}

}  // namespace

std::vector<std::string> validate_schema(const Json& schema, const Json& doc) {
  std::vector<std::string> errors;
  validate_at(schema, doc, "", errors);
  return errors;
}

const Json& experiment_schema() {
  static const Json schema = Json::parse(kExperimentSchemaText);
  return schema;
}

const char* to_string(Method m) {
  switch (m) {
    case Method::kFullSi: return "full_retrain_si";
    case Method::kFullNoSi: return "full_retrain_no_si";
    case Method::kPartialSi: return "partial_retrain_si";
    case Method::kPartialNoSi: return "partial_retrain_no_si";
    case Method::kIsolated: return "isolated";
    case Method::kClassical: return "classical";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  for (auto m : {Method::kFullSi, Method::kFullNoSi, Method::kPartialSi, Method::kPartialNoSi, Method::kIsolated,
                 Method::kClassical})
    if (s == to_string(m)) return m;
  throw Error("unknown method '" + s + "'");
}

bool uses_si(Method m) { return m == Method::kFullSi || m == Method::kPartialSi; }

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::size_t ExperimentConfig::num_cases() const {
  return scenario == "custom" ? custom_snrs_db.size() : 7;
}

std::vector<double> ExperimentConfig::snrs_db(std::size_t case_index) const {
  if (case_index < 1 || case_index > num_cases()) throw Error("case index out of range");
  if (scenario == "custom") return custom_snrs_db[case_index - 1];
  return channel::case_snrs_db(channel::parse_scenario(scenario), case_index);
}

std::vector<channel::UserLink> ExperimentConfig::links(std::size_t case_index) const {
  return channel::links_from_snrs(snrs_db(case_index)).links;
}

std::string ExperimentConfig::hash() const { return fnv1a_hex(document.dump()); }

std::string ExperimentConfig::training_hash() const {
  Json t;
  for (const char* key : {"scenario", "custom", "channel", "train_cases", "dims", "optimizer", "epochs", "batch_size",
                          "training", "corpus"})
    if (document.contains(key)) t[key] = document[key];
  return fnv1a_hex(t.dump());
}

ExperimentConfig parse_config(const Json& input, const std::filesystem::path& base_dir) {
  const auto errors = validate_schema(experiment_schema(), input);
  if (!errors.empty()) {
    std::string msg = "config schema error: " + errors.front();
    if (errors.size() > 1) msg += " (+" + std::to_string(errors.size() - 1) + " more)";
    throw Error(msg);
  }
  ExperimentConfig c;
  Json doc = input;
  c.name = get_or<std::string>(doc, "name", "experiment");
  c.scenario = doc["scenario"].get<std::string>();
  if (c.scenario == "two_plus_one") {
    c.num_old = 2;
    c.num_new = 1;
  } else if (c.scenario == "three_plus_two") {
    c.num_old = 3;
    c.num_new = 2;
  } else {
    if (!doc.contains("custom")) throw Error("config: custom scenario needs a 'custom' section");
    c.custom_snrs_db = doc["custom"]["snrs_db"].get<std::vector<std::vector<double>>>();
    c.num_old = doc["custom"]["num_old"].get<std::size_t>();
    const std::size_t k = c.custom_snrs_db.front().size();
    for (const auto& row : c.custom_snrs_db)
      if (row.size() != k) throw Error("config: custom snrs_db rows differ in length");
    if (c.num_old >= k) throw Error("config: custom scenario needs at least one new user");
    c.num_new = k - c.num_old;
  }
  c.model = channel::parse_model(get_or<std::string>(doc, "channel", "awgn"));
  doc["channel"] = channel::to_string(c.model);

  std::vector<std::size_t> all(c.num_cases());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i + 1;
  c.cases = get_or(doc, "cases", all);
  c.train_cases = get_or(doc, "train_cases", all);
  for (auto v : {&c.cases, &c.train_cases})
    for (auto idx : *v)
      if (idx > c.num_cases()) throw Error("config: case " + std::to_string(idx) + " out of range");
  doc["cases"] = c.cases;
  doc["train_cases"] = c.train_cases;

  std::vector<std::string> methods = get_or<std::vector<std::string>>(
      doc, "methods",
      {"full_retrain_si", "full_retrain_no_si", "partial_retrain_si", "partial_retrain_no_si", "isolated", "classical"});
  std::set<std::string> seen;
  for (const auto& m : methods) {
    if (!seen.insert(m).second) throw Error("config: duplicate method " + m);
    c.methods.push_back(parse_method(m));
  }
  doc["methods"] = methods;

  const Json dims = get_or<Json>(doc, "dims", Json::object());
  c.dims.d = get_or<std::size_t>(dims, "d", 64);
  c.dims.m = get_or<std::size_t>(dims, "m", c.dims.d);
  c.dims.c = get_or<std::size_t>(dims, "c", 36);
  c.dims.N = get_or<std::size_t>(dims, "seq_len", corpus::kMaxWords + 1);
  c.dims.encoder_layers = get_or<std::size_t>(dims, "encoder_layers", 2);
  c.dims.decoder_layers = get_or<std::size_t>(dims, "decoder_layers", 2);
  c.dims.heads = get_or<std::size_t>(dims, "heads", 4);
  c.dims.ff_hidden = get_or<std::size_t>(dims, "ff_hidden", 0);
  c.dims.ae_hidden = get_or<std::size_t>(dims, "ae_hidden", 0);
  c.dims.dropout = get_or<double>(dims, "dropout", 0.1);
  doc["dims"] = {{"d", c.dims.d},
                 {"m", c.dims.m},
                 {"c", c.dims.c},
                 {"seq_len", c.dims.N},
                 {"encoder_layers", c.dims.encoder_layers},
                 {"decoder_layers", c.dims.decoder_layers},
                 {"heads", c.dims.heads},
                 {"ff_hidden", c.dims.ff_hidden},
                 {"ae_hidden", c.dims.ae_hidden},
                 {"dropout", c.dims.dropout}};

  const Json opt = get_or<Json>(doc, "optimizer", Json::object());
  c.optimizer.learning_rate = get_or<double>(opt, "learning_rate", 1e-3);
  c.optimizer.beta1 = get_or<double>(opt, "beta1", 0.9);
  c.optimizer.beta2 = get_or<double>(opt, "beta2", 0.98);
  c.optimizer.epsilon = get_or<double>(opt, "epsilon", 1e-8);
  c.optimizer.weight_decay = get_or<double>(opt, "weight_decay", 5e-4);
  c.optimizer.validate();
  doc["optimizer"] = {{"learning_rate", c.optimizer.learning_rate},
                      {"beta1", c.optimizer.beta1},
                      {"beta2", c.optimizer.beta2},
                      {"epsilon", c.optimizer.epsilon},
                      {"weight_decay", c.optimizer.weight_decay}};

  const Json ep = get_or<Json>(doc, "epochs", Json::object());
  c.pretrain_epochs = get_or<std::size_t>(ep, "pretrain", 20);
  c.joint_epochs = get_or<std::size_t>(ep, "joint", 15);
  c.retrain_epochs = get_or<std::size_t>(ep, "retrain", 15);
  doc["epochs"] = {{"pretrain", c.pretrain_epochs}, {"joint", c.joint_epochs}, {"retrain", c.retrain_epochs}};
  c.batch_size = get_or<std::size_t>(doc, "batch_size", 64);
  doc["batch_size"] = c.batch_size;
  c.seeds = get_or<std::vector<std::uint64_t>>(doc, "seeds", {1, 2, 3});
  doc["seeds"] = c.seeds;

  const Json tr = get_or<Json>(doc, "training", Json::object());
  c.tau = get_or<std::vector<double>>(tr, "tau", {});
  if (!c.tau.empty() && c.tau.size() != c.num_users()) throw Error("config: tau needs one weight per user");
  c.reencode = get_or<std::string>(tr, "reencode", "feature") == "text" ? sic::Reencode::kText : sic::Reencode::kFeature;
  c.mask_padding = get_or<bool>(tr, "mask_padding", true);
  c.detach_side_info = get_or<bool>(tr, "detach_side_info", true);
  c.ifg_outer_relu = get_or<bool>(tr, "ifg_outer_relu", true);
  c.ifg_identity_init = get_or<bool>(tr, "ifg_identity_init", true);
  doc["training"] = {{"tau", c.tau},
                     {"reencode", c.reencode == sic::Reencode::kText ? "text" : "feature"},
                     {"mask_padding", c.mask_padding},
                     {"detach_side_info", c.detach_side_info},
                     {"ifg_outer_relu", c.ifg_outer_relu},
                     {"ifg_identity_init", c.ifg_identity_init}};

  const Json& co = doc["corpus"];
  c.corpus_path = resolve(base_dir, co["path"].get<std::string>());
  c.max_lines = get_or<std::size_t>(co, "max_lines", 2000);
  c.vocab_cap = get_or<std::size_t>(co, "vocab_cap", 3000);
  c.min_count = get_or<std::size_t>(co, "min_count", 1);
  c.test_fraction = get_or<double>(co, "test_fraction", 0.1);
  c.split_seed = get_or<std::uint64_t>(co, "split_seed", 7);
  doc["corpus"] = {{"path", c.corpus_path.generic_string()},
                   {"max_lines", c.max_lines},
                   {"vocab_cap", c.vocab_cap},
                   {"min_count", c.min_count},
                   {"test_fraction", c.test_fraction},
                   {"split_seed", c.split_seed}};
  if (!std::filesystem::exists(c.corpus_path)) throw Error("config: corpus not found: " + c.corpus_path.string());

  const Json ev = get_or<Json>(doc, "evaluation", Json::object());
  c.eval_split = get_or<std::string>(ev, "split", "test");
  c.eval_sentences = get_or<std::size_t>(ev, "max_sentences", 0);
  c.embedder = get_or<std::string>(ev, "embedder", "hash");
  if (ev.contains("embedding_table")) c.embedding_table = resolve(base_dir, ev["embedding_table"].get<std::string>());
  if (c.embedder == "table" && !std::filesystem::exists(c.embedding_table))
    throw Error("config: embedding table not found: " + c.embedding_table.string());
  c.repetition_penalty = get_or<double>(ev, "repetition_penalty", 1.0);
  c.threshold = get_or<double>(ev, "threshold", 0.0);
  c.eval_seed = get_or<std::uint64_t>(ev, "seed", 1000);
  doc["evaluation"] = {{"split", c.eval_split},
                       {"max_sentences", c.eval_sentences},
                       {"embedder", c.embedder},
                       {"repetition_penalty", c.repetition_penalty},
                       {"threshold", c.threshold},
                       {"seed", c.eval_seed}};
  if (!c.embedding_table.empty()) doc["evaluation"]["embedding_table"] = c.embedding_table.generic_string();

  const Json bl = get_or<Json>(doc, "baseline", Json::object());
  c.baseline_repetition = get_or<bool>(bl, "repetition_code", false);
  doc["baseline"] = {{"repetition_code", c.baseline_repetition}};
  c.output_dir = resolve(base_dir, get_or<std::string>(doc, "output_dir", "results"));
  doc["output_dir"] = c.output_dir.generic_string();

  c.dims.vocab = 2;  // placeholder until the vocabulary is built
  c.dims.validate();
  for (std::size_t k = 1; k <= c.num_cases(); ++k) {
    const auto links = c.links(k);
    for (std::size_t i = 1; i < links.size(); ++i)
      if (links[i].received_power() > links[i - 1].received_power())
        throw Error("config: case " + std::to_string(k) + " is not listed in decoding order");
  }
  c.document = std::move(doc);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  Json doc;
  try {
    doc = Json::parse(in, nullptr, true, true);
  } catch (const Json::parse_error& e) {
    throw Error("config parse error in " + path.string() + ": " + e.what());
  }
  return parse_config(doc, path.parent_path());
}

}  // namespace semsic::config
