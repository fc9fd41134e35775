#include "semsic/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "semsic/baseline.hpp"

namespace semsic::experiment {

using ag::Tensor;

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t name_seed(const std::string& s) { return std::stoull(config::fnv1a_hex(s), nullptr, 16); }

nn::ParamList all_params(const std::vector<sic::UserModel>& users) {
  nn::ParamList out;
  for (const auto& u : users) {
    auto p = u.params();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::vector<sic::UserModel*> pointers(std::vector<sic::UserModel>& users) {
  std::vector<sic::UserModel*> p;
  for (auto& u : users) p.push_back(&u);
  return p;
}

std::vector<double> epoch_means(const std::vector<training::LossReport>& reports) {
  std::vector<double> sum, count;
  for (const auto& r : reports) {
    if (r.epoch >= sum.size()) {
      sum.resize(r.epoch + 1, 0.0);
      count.resize(r.epoch + 1, 0.0);
    }
    sum[r.epoch] += r.aggregate;
    count[r.epoch] += 1.0;
  }
  for (std::size_t e = 0; e < sum.size(); ++e) sum[e] /= std::max(count[e], 1.0);
  return sum;
}

std::size_t eval_rows(const ExperimentConfig& cfg, const Dataset& data) {
  const std::size_t n = data.split(cfg.eval_split).front().size();
  if (n == 0) throw Error("evaluation split is empty");
  return cfg.eval_sentences ? std::min(cfg.eval_sentences, n) : n;
}

std::string fmt(double v, const char* spec = "%.10g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace

std::string format_snrs(const std::vector<double>& snrs) {
  std::string s;
  for (std::size_t i = 0; i < snrs.size(); ++i) s += (i ? ";" : "") + fmt(snrs[i], "%g");
  return s;
}

Dataset load_dataset(const ExperimentConfig& cfg) {
  const auto pc = corpus::read_pair_corpus(cfg.corpus_path, cfg.max_lines);
  Dataset d;
  d.vocab = corpus::build_vocabulary(pc.all_sentences(), cfg.min_count, cfg.vocab_cap);
  const auto sets = corpus::build_knowledge_sets(pc, d.vocab, cfg.num_users());
  auto split = corpus::split_knowledge_sets(sets, cfg.test_fraction, cfg.split_seed);
  d.train = std::move(split.train);
  d.test = std::move(split.test);
  if (d.train.front().size() == 0) throw Error("training split is empty");
  return d;
}

void attach_fusion(std::vector<sic::UserModel>& users, std::span<const channel::UserLink> links, std::uint64_t seed,
                   bool outer_relu, bool identity_init) {
  if (links.size() != users.size()) throw Error("attach_fusion: one link per user required");
  const auto order = channel::order_users(links);
  for (std::size_t pos = 1; pos < order.size(); ++pos) {
    auto& u = users[order[pos]];
    if (!u.ifg || u.ifg->side_inputs() != pos) {
      std::mt19937_64 rng(mix(seed, 100 + u.index));
      u.attach_ifg(pos, rng);
      if (identity_init) u.ifg->start_as_identity();
    }
    u.ifg->outer_relu = outer_relu;
  }
}

// ---------------------------------------------------------------------------

Trainer::Trainer(const ExperimentConfig& cfg, const Dataset& data, std::uint64_t seed, RunOptions opts)
    : cfg_(cfg), data_(data), seed_(seed), opts_(opts), dims_(cfg.dims) {
  dims_.vocab = data.vocab.size();
  dims_.validate();
  const std::string tag = cfg.training_hash() + "_seed" + std::to_string(seed);
  ckpt_dir_ = cfg.output_dir / "checkpoints" / tag;
  log_dir_ = cfg.output_dir / "logs" / tag;
}

void Trainer::log(const std::string& line) const {
  if (opts_.log) *opts_.log << line << std::endl;
}

std::vector<std::vector<channel::UserLink>> Trainer::link_sets(std::size_t first, std::size_t count) const {
  std::vector<std::vector<channel::UserLink>> out;
  for (auto k : cfg_.train_cases) {
    const auto links = cfg_.links(k);
    out.emplace_back(links.begin() + static_cast<std::ptrdiff_t>(first),
                     links.begin() + static_cast<std::ptrdiff_t>(first + count));
  }
  return out;
}

training::StageConfig Trainer::stage_config(const std::string& name, std::size_t epochs, bool si) const {
  training::StageConfig c;
  c.epochs = epochs;
  c.batch_size = cfg_.batch_size;
  c.optimizer = cfg_.optimizer;
  c.model = cfg_.model;
  c.sic.use_si = si;
  c.sic.reencode = cfg_.reencode;
  c.sic.detach_side_info = cfg_.detach_side_info;
  c.mask_padding = cfg_.mask_padding;
  c.seed = mix(seed_, name_seed(name));
  return c;
}

const StageResult& Trainer::stage(const std::string& name, const Init& init, const Train& train, std::size_t epochs) {
  if (auto it = stages_.find(name); it != stages_.end()) return *it->second;
  auto result = std::make_unique<StageResult>();
  result->users = init();
  const auto ckpt = ckpt_dir_ / (name + ".ckpt");
  const auto meta = ckpt_dir_ / (name + ".json");
  const auto params = all_params(result->users);
  if (!opts_.force && std::filesystem::exists(ckpt) && std::filesystem::exists(meta)) {
    codec::load_checkpoint(params, ckpt);
    std::ifstream in(meta);
    const auto j = config::Json::parse(in);
    result->seconds_per_iteration = j.at("seconds_per_iteration").get<double>();
    result->epoch_loss = j.at("epoch_loss").get<std::vector<double>>();
    log("[seed " + std::to_string(seed_) + "] " + name + ": loaded checkpoint");
  } else {
    log("[seed " + std::to_string(seed_) + "] " + name + ": training " + std::to_string(epochs) + " epochs");
    std::vector<training::LossReport> reports;
    if (epochs > 0) reports = train(result->users, stage_config(name, epochs, false));
    double spi = 0.0;
    for (const auto& r : reports) spi += r.seconds_per_iteration;
    result->seconds_per_iteration = reports.empty() ? 0.0 : spi / static_cast<double>(reports.size());
    result->epoch_loss = epoch_means(reports);
    std::filesystem::create_directories(ckpt_dir_);
    codec::save_checkpoint(params, ckpt);
    config::Json j{{"stage", name},
                   {"seed", seed_},
                   {"config_hash", cfg_.training_hash()},
                   {"seconds_per_iteration", result->seconds_per_iteration},
                   {"epoch_loss", result->epoch_loss},
                   {"steps", reports.size()}};
    std::ofstream(meta) << j.dump(2) << '\n';
    if (!reports.empty())
      training::write_loss_log(reports, reports.front().per_user.size(), log_dir_ / (name + ".csv"),
                               "config_hash=" + cfg_.hash() + " stage=" + name);
    if (!result->epoch_loss.empty())
      log("[seed " + std::to_string(seed_) + "] " + name + ": final epoch loss " + fmt(result->epoch_loss.back(), "%.4f") +
          ", " + fmt(result->seconds_per_iteration, "%.3f") + " s/it");
  }
  return *stages_.emplace(name, std::move(result)).first->second;
}

const StageResult& Trainer::pretrained() {
  const std::string all = "pretrain_all";
  if (auto it = stages_.find(all); it != stages_.end()) return *it->second;
  auto combined = std::make_unique<StageResult>();
  double spi = 0.0;
  for (std::size_t i = 1; i <= cfg_.num_users(); ++i) {
    const std::string name = "pretrain_u" + std::to_string(i);
    const auto& r = stage(
        name,
        [&] {
          std::mt19937_64 rng(mix(seed_, i));
          std::vector<sic::UserModel> v;
          v.emplace_back(i, dims_, rng);
          return v;
        },
        [&, i, name](std::vector<sic::UserModel>& users, training::StageConfig c) {
          c.link_sets = link_sets(i - 1, 1);
          return training::pretrain_single_user(users[0], data_.train[i - 1], c);
        },
        cfg_.pretrain_epochs);
    combined->users.push_back(training::clone(r.users[0]));
    spi += r.seconds_per_iteration;
    if (combined->epoch_loss.size() < r.epoch_loss.size()) combined->epoch_loss.resize(r.epoch_loss.size(), 0.0);
    for (std::size_t e = 0; e < r.epoch_loss.size(); ++e) combined->epoch_loss[e] += r.epoch_loss[e];
  }
  combined->seconds_per_iteration = spi / static_cast<double>(cfg_.num_users());
  return *stages_.emplace(all, std::move(combined)).first->second;
}

const StageResult& Trainer::joint(bool si, bool from_pretrained) {
  const std::string name = std::string(from_pretrained ? "joint_" : "joint_scratch_") + (si ? "si" : "nosi");
  const std::size_t K = cfg_.num_old;
  return stage(
      name,
      [&] {
        std::vector<sic::UserModel> v;
        if (from_pretrained) {
          const auto& pre = pretrained();
          for (std::size_t i = 0; i < K; ++i) v.push_back(training::clone(pre.users[i]));
        } else {
          for (std::size_t i = 1; i <= K; ++i) {
            std::mt19937_64 rng(mix(seed_, i));
            v.emplace_back(i, dims_, rng);
          }
        }
        if (si) attach_fusion(v, link_sets(0, K).front(), seed_, cfg_.ifg_outer_relu, cfg_.ifg_identity_init);
        return v;
      },
      [&, si](std::vector<sic::UserModel>& users, training::StageConfig c) {
        c.link_sets = link_sets(0, K);
        c.sic.use_si = si;
        auto p = pointers(users);
        return training::train_initial_K(p, std::span(data_.train).first(K), c);
      },
      cfg_.joint_epochs);
}

const StageResult& Trainer::retrained(training::RetrainMode mode, bool si) {
  const bool full = mode == training::RetrainMode::kFull;
  const std::string name = std::string(full ? "retrain_full_" : "retrain_partial_") + (si ? "si" : "nosi");
  const std::size_t K = cfg_.num_old, total = cfg_.num_users();
  return stage(
      name,
      [&] {
        std::vector<sic::UserModel> v;
        for (const auto& u : joint(si).users) v.push_back(training::clone(u));
        const auto& pre = pretrained();
        for (std::size_t i = K; i < total; ++i) v.push_back(training::clone(pre.users[i]));
        if (si) attach_fusion(v, link_sets(0, total).front(), seed_, cfg_.ifg_outer_relu, cfg_.ifg_identity_init);
        return v;
      },
      [&, si, mode](std::vector<sic::UserModel>& users, training::StageConfig c) {
        c.link_sets = link_sets(0, total);
        c.sic.use_si = si;
        c.tau = cfg_.tau;
        auto p = pointers(users);
        return training::retrain(mode, p, K, data_.train, c);
      },
      cfg_.retrain_epochs);
}

// ---------------------------------------------------------------------------

std::vector<std::vector<std::string>> references(const ExperimentConfig& cfg, const Dataset& data) {
  const auto& sets = data.split(cfg.eval_split);
  const std::size_t rows = eval_rows(cfg, data);
  std::vector<std::vector<std::string>> out(sets.size());
  for (std::size_t u = 0; u < sets.size(); ++u)
    for (std::size_t r = 0; r < rows; ++r) out[u].push_back(corpus::detokenize(sets[u].sentences[r].token_ids, data.vocab));
  return out;
}

std::vector<std::vector<std::string>> decode_case(Method method, const std::vector<sic::UserModel>& users,
                                                  const ExperimentConfig& cfg, const Dataset& data,
                                                  std::size_t case_index, std::uint64_t seed) {
  if (method == Method::kClassical) return classical_case(cfg, data, case_index, seed);
  const auto& sets = data.split(cfg.eval_split);
  const std::size_t K = cfg.num_users();
  if (users.size() != K) throw Error("decode_case: model count differs from user count");
  const auto links = cfg.links(case_index);
  const auto& dims = users.front().dims();
  const std::size_t rows = eval_rows(cfg, data);
  // Every case reuses the same base draws; only the transmit powers change.
  std::mt19937_64 rng(mix(cfg.eval_seed, seed));
  sic::SicOptions opt;
  opt.use_si = config::uses_si(method);
  opt.reencode = cfg.reencode;
  opt.repetition_penalty = cfg.repetition_penalty;
  const bool two_phase = method == Method::kPartialSi || method == Method::kPartialNoSi;

  ag::NoGradGuard no_grad;
  std::vector<std::vector<std::string>> out(K);
  for (std::size_t start = 0; start < rows; start += cfg.batch_size) {
    std::vector<std::size_t> chunk(std::min(cfg.batch_size, rows - start));
    std::iota(chunk.begin(), chunk.end(), start);
    const auto gains = channel::draw_gains(links, cfg.model, chunk.size(), rng);
    const Matrix noise = channel::noise_frames(chunk.size(), dims.M(), 1.0, rng);
    std::vector<Tensor> frames;
    std::vector<sic::SicUser> su(K);
    for (std::size_t i = 0; i < K; ++i) {
      const auto b = corpus::make_batch(sets[i], chunk, dims.N);
      const auto& enc = users[i].enc;
      auto f = codec::frame_symbols(enc.compress(enc.semantic(b, {})), b.lengths, dims, links[i].power);
      frames.push_back(f.x);
      su[i].model = &users[i];
      su[i].link = links[i];
      su[i].gains = gains[i];
      su[i].inv_scale = f.inv_scale;
    }
    const Tensor y = channel::superpose(frames, gains, noise);
    const auto res = two_phase ? sic::two_phase_decode(y, su, cfg.num_old, opt) : sic::semantic_sic_decode(y, su, opt);
    for (std::size_t i = 0; i < K; ++i) {
      auto s = codec::ids_to_sentences(res.ids[i], dims.N, data.vocab);
      out[i].insert(out[i].end(), s.begin(), s.end());
    }
  }
  return out;
}

std::vector<std::vector<std::string>> classical_case(const ExperimentConfig& cfg, const Dataset& data,
                                                     std::size_t case_index, std::uint64_t seed) {
  std::vector<std::string> all;
  for (const auto* split : {&data.train, &data.test})
    for (const auto& ks : *split)
      for (const auto& s : ks.sentences) all.push_back(corpus::detokenize(s.token_ids, data.vocab));
  const std::vector<baseline::HuffmanCodebook> books{baseline::HuffmanCodebook::from_sentences(all)};
  baseline::ClassicalConfig bc;
  bc.symbols_per_frame = cfg.dims.c * cfg.dims.N * cfg.dims.L / 2;
  bc.repetition = cfg.baseline_repetition;

  const auto refs = references(cfg, data);
  const auto links = cfg.links(case_index);
  const std::size_t K = links.size();
  std::mt19937_64 rng(mix(mix(cfg.eval_seed, seed), 1000));
  std::normal_distribution<double> nd(0.0, std::sqrt(0.5));
  const auto order = channel::order_users(links);
  std::vector<std::vector<std::string>> out(K);
  for (std::size_t r = 0; r < refs.front().size(); ++r) {
    const auto gains = channel::draw_gains(links, cfg.model, 1, rng);
    std::vector<channel::cplx> y(bc.symbols_per_frame);
    auto frame_links = links;
    for (std::size_t i = 0; i < K; ++i) {
      frame_links[i].h = gains[i][0];
      const auto x = baseline::classical_transmit(refs[i][r], books[0], bc, links[i].power);
      for (std::size_t t = 0; t < y.size(); ++t) y[t] += gains[i][0] * x[t];
    }
    for (auto& v : y) v += channel::cplx(nd(rng), nd(rng));
    const auto dec = baseline::classical_sic_receive(y, frame_links, books, bc, order);
    for (std::size_t i = 0; i < K; ++i) out[i].push_back(dec[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------

const std::vector<std::string>& result_columns() {
  static const std::vector<std::string> cols = {
      "scenario", "case",  "snrs_db", "channel",        "method",    "user",           "seed",
      "similarity", "bleu1", "bleu2", "bleu3",          "bleu4",     "min_similarity", "min_bleu1",
      "meets_threshold", "seconds_per_iteration"};
  return cols;
}

void write_results(const std::vector<ResultRow>& rows, const std::filesystem::path& path,
                   const std::string& config_hash) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << "# config_hash=" << config_hash << '\n';
  const auto& cols = result_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  for (const auto& r : rows) {
    out << r.scenario << ',' << r.case_index << ',' << r.snrs_db << ',' << r.channel << ',' << r.method << ','
        << r.user << ',' << r.seed << ',' << fmt(r.similarity);
    for (double b : r.bleu) out << ',' << fmt(b);
    out << ',' << fmt(r.min_similarity) << ',' << fmt(r.min_bleu1) << ',' << (r.meets_threshold ? 1 : 0) << ','
        << fmt(r.seconds_per_iteration, "%.6f") << '\n';
  }
}

std::vector<ResultRow> read_results(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open results " + path.string());
  std::string line;
  bool header = false;
  std::vector<ResultRow> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (!header) {
      if (f != result_columns()) throw Error("results schema mismatch in " + path.string());
      header = true;
      continue;
    }
    if (f.size() != result_columns().size()) throw Error("malformed results row in " + path.string());
    ResultRow r;
    r.scenario = f[0];
    r.case_index = std::stoul(f[1]);
    r.snrs_db = f[2];
    r.channel = f[3];
    r.method = f[4];
    r.user = std::stoul(f[5]);
    r.seed = std::stoull(f[6]);
    r.similarity = std::stod(f[7]);
    for (std::size_t b = 0; b < 4; ++b) r.bleu[b] = std::stod(f[8 + b]);
    r.min_similarity = std::stod(f[12]);
    r.min_bleu1 = std::stod(f[13]);
    r.meets_threshold = f[14] == "1";
    r.seconds_per_iteration = std::stod(f[15]);
    rows.push_back(std::move(r));
  }
  if (!header) throw Error("results file has no header: " + path.string());
  if (rows.empty()) throw Error("results file has no rows: " + path.string());
  return rows;
}

std::unique_ptr<metrics::SentenceEmbedder> make_embedder(const ExperimentConfig& cfg) {
  if (cfg.embedder == "table")
    return std::make_unique<metrics::TableEmbedder>(cfg.embedding_table, std::make_shared<metrics::HashEmbedder>());
  return std::make_unique<metrics::HashEmbedder>();
}

namespace {

struct MethodModels {
  const std::vector<sic::UserModel>* users = nullptr;
  double seconds_per_iteration = 0.0;
};

MethodModels models_for(Method m, Trainer& t) {
  switch (m) {
    case Method::kFullSi: {
      const auto& r = t.retrained(training::RetrainMode::kFull, true);
      return {&r.users, r.seconds_per_iteration};
    }
    case Method::kFullNoSi: {
      const auto& r = t.retrained(training::RetrainMode::kFull, false);
      return {&r.users, r.seconds_per_iteration};
    }
    case Method::kPartialSi: {
      const auto& r = t.retrained(training::RetrainMode::kPartial, true);
      return {&r.users, r.seconds_per_iteration};
    }
    case Method::kPartialNoSi: {
      const auto& r = t.retrained(training::RetrainMode::kPartial, false);
      return {&r.users, r.seconds_per_iteration};
    }
    case Method::kIsolated: {
      const auto& r = t.pretrained();
      return {&r.users, r.seconds_per_iteration};
    }
    case Method::kClassical:
      return {};
  }
  return {};
}

std::vector<ResultRow> evaluate(const ExperimentConfig& cfg, const RunOptions& opts, bool classical_only) {
  const Dataset data = load_dataset(cfg);
  const auto embedder = make_embedder(cfg);
  const auto refs = references(cfg, data);
  std::vector<ResultRow> rows;
  for (auto seed : cfg.seeds) {
    Trainer trainer(cfg, data, seed, opts);
    std::vector<std::pair<Method, MethodModels>> methods;
    for (auto m : cfg.methods) {
      if (classical_only && m != Method::kClassical) continue;
      methods.emplace_back(m, models_for(m, trainer));
    }
    if (classical_only && methods.empty()) methods.emplace_back(Method::kClassical, MethodModels{});
    for (auto k : cfg.cases) {
      const auto snrs = format_snrs(cfg.snrs_db(k));
      for (const auto& [m, models] : methods) {
        const auto cands = m == Method::kClassical ? classical_case(cfg, data, k, seed)
                                                   : decode_case(m, *models.users, cfg, data, k, seed);
        std::vector<metrics::UserMetrics> um;
        for (std::size_t u = 0; u < cands.size(); ++u)
          um.push_back(metrics::evaluate_user(u + 1, refs[u], cands[u], *embedder));
        const auto report = metrics::min_across_users(um, cfg.threshold);
        for (const auto& u : report.users) {
          ResultRow r;
          r.scenario = cfg.scenario;
          r.case_index = k;
          r.snrs_db = snrs;
          r.channel = channel::to_string(cfg.model);
          r.method = config::to_string(m);
          r.user = u.user;
          r.seed = seed;
          r.similarity = u.similarity;
          for (std::size_t b = 0; b < 4; ++b) r.bleu[b] = u.bleu[b];
          r.min_similarity = report.min_similarity;
          r.min_bleu1 = report.min_bleu[0];
          r.meets_threshold = report.meets_threshold;
          r.seconds_per_iteration = models.seconds_per_iteration;
          rows.push_back(std::move(r));
        }
        if (opts.log)
          *opts.log << "[seed " << seed << "] case " << k << " " << config::to_string(m) << ": min similarity "
                    << fmt(report.min_similarity, "%.3f") << ", min BLEU-1 " << fmt(report.min_bleu[0], "%.3f")
                    << std::endl;
      }
    }
  }
  return rows;
}

void write_effective_config(const ExperimentConfig& cfg) {
  std::filesystem::create_directories(cfg.output_dir);
  std::ofstream(cfg.output_dir / "config.json") << cfg.document.dump(2) << '\n';
}

}  // namespace

std::vector<ResultRow> run_experiment(const ExperimentConfig& cfg, const RunOptions& opts) {
  write_effective_config(cfg);
  auto rows = evaluate(cfg, opts, false);
  write_results(rows, cfg.output_dir / "results.csv", cfg.hash());
  return rows;
}

void train_all(const ExperimentConfig& cfg, const RunOptions& opts) {
  write_effective_config(cfg);
  const Dataset data = load_dataset(cfg);
  for (auto seed : cfg.seeds) {
    Trainer trainer(cfg, data, seed, opts);
    for (auto m : cfg.methods) models_for(m, trainer);
  }
}

std::vector<ResultRow> run_baseline(const ExperimentConfig& cfg, const RunOptions& opts) {
  write_effective_config(cfg);
  auto rows = evaluate(cfg, opts, true);
  write_results(rows, cfg.output_dir / "baseline.csv", cfg.hash());
  return rows;
}

LossCurves loss_comparison(const ExperimentConfig& cfg, const Dataset& data, std::uint64_t seed,
                           const RunOptions& opts) {
  bool si = false;
  for (auto m : cfg.methods) si |= config::uses_si(m);
  Trainer trainer(cfg, data, seed, opts);
  LossCurves c;
  c.pretrained = trainer.joint(si, true).epoch_loss;
  c.scratch = trainer.joint(si, false).epoch_loss;
  return c;
}

}  // namespace semsic::experiment
