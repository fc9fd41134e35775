// Command-line runner for training, evaluation, the classical baseline and figures.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "semsic/config.hpp"
#include "semsic/corpus.hpp"
#include "semsic/experiment.hpp"
#include "semsic/plot.hpp"

namespace fs = std::filesystem;
using namespace semsic;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool force = false;
};

void add_common(CLI::App* cmd, Common& c, bool config_required) {
  auto* opt = cmd->add_option("--config", c.config, "Experiment configuration (JSON)");
  if (config_required) opt->required();
  cmd->add_option("--seed", c.seed, "Run a single seed instead of the configured list");
  cmd->add_option("--out", c.out, "Output directory (overrides the configuration)");
  cmd->add_flag("--force", c.force, "Retrain even when matching checkpoints exist");
}

config::ExperimentConfig load(const Common& c) {
  std::ifstream in(c.config);
  if (!in) throw Error("cannot open config " + c.config);
  config::Json doc;
  try {
    doc = config::Json::parse(in, nullptr, true, true);
  } catch (const config::Json::parse_error& e) {
    throw Error(std::string("config parse error: ") + e.what());
  }
  if (c.seed) doc["seeds"] = {*c.seed};
  if (!c.out.empty()) doc["output_dir"] = fs::absolute(c.out).lexically_normal().generic_string();
  return config::parse_config(doc, fs::path(c.config).parent_path());
}

experiment::RunOptions run_options(const Common& c) { return {c.force, &std::cerr}; }

const std::map<std::string, std::string>& figure_configs() {
  static const std::map<std::string, std::string> m = {{"sim3", "config/desk_2p1_awgn.json"},
                                                       {"bleu3-awgn", "config/desk_2p1_awgn.json"},
                                                       {"bleu3-rayleigh", "config/desk_2p1_rayleigh.json"},
                                                       {"sim5", "config/desk_3p2_awgn.json"},
                                                       {"loss", "config/desk_2p1_awgn.json"}};
  return m;
}

void reproduce(const std::string& figure, Common c) {
  if (c.config.empty()) c.config = figure_configs().at(figure);
  const auto cfg = load(c);
  const auto opts = run_options(c);
  const auto fig = cfg.output_dir / "figures" / (figure + ".svg");
  if (figure == "loss") {
    const auto data = experiment::load_dataset(cfg);
    std::vector<double> pre, scratch;
    fs::create_directories(cfg.output_dir);
    std::ofstream csv(cfg.output_dir / "loss_comparison.csv");
    csv << "# config_hash=" << cfg.hash() << "\nseed,epoch,pretrained,scratch\n";
    for (auto seed : cfg.seeds) {
      const auto curves = experiment::loss_comparison(cfg, data, seed, opts);
      pre.resize(curves.pretrained.size(), 0.0);
      scratch.resize(curves.scratch.size(), 0.0);
      for (std::size_t e = 0; e < curves.pretrained.size(); ++e) {
        pre[e] += curves.pretrained[e] / static_cast<double>(cfg.seeds.size());
        scratch[e] += curves.scratch[e] / static_cast<double>(cfg.seeds.size());
        csv << seed << ',' << e + 1 << ',' << curves.pretrained[e] << ',' << curves.scratch[e] << '\n';
      }
    }
    auto chart = plot::loss_chart({{"pretrained init", pre}, {"random init", scratch}}, "Joint training loss");
    chart.comment = "config_hash=" + cfg.hash();
    plot::write_svg(chart, fig);
  } else {
    const auto rows = experiment::run_experiment(cfg, opts);
    const bool sim = figure == "sim3" || figure == "sim5";
    const std::string title = std::string(sim ? "Min semantic similarity" : "Min BLEU-1") + " (" + cfg.scenario +
                              ", " + std::string(channel::to_string(cfg.model)) + ")";
    auto chart =
        plot::results_chart(rows, sim ? plot::Metric::kMinSimilarity : plot::Metric::kMinBleu1, title);
    chart.comment = "config_hash=" + cfg.hash();
    plot::write_svg(chart, fig);
  }
  std::cout << fig.string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semantic SIC experiment runner"};
  app.require_subcommand(1);

  Common train_c, eval_c, base_c, repro_c;
  auto* train = app.add_subcommand("train", "Run every training stage the configured methods need");
  add_common(train, train_c, true);
  auto* eval = app.add_subcommand("evaluate", "Train if needed, evaluate every case and write results.csv");
  add_common(eval, eval_c, true);
  auto* base = app.add_subcommand("baseline", "Evaluate the classical Huffman + 64-QAM SIC chain");
  add_common(base, base_c, true);

  std::vector<std::string> plot_inputs;
  std::string plot_metric = "bleu1", plot_output, plot_title = "Results";
  auto* plt = app.add_subcommand("plot", "Plot per-case minima from result CSVs as SVG");
  plt->add_option("--input", plot_inputs, "Result CSV files")->required();
  plt->add_option("--metric", plot_metric, "similarity or bleu1")->check(CLI::IsMember({"similarity", "bleu1"}));
  plt->add_option("--output", plot_output, "SVG path")->required();
  plt->add_option("--title", plot_title, "Chart title");

  std::string figure;
  auto* repro = app.add_subcommand("reproduce", "Train, evaluate and draw one figure");
  repro->add_option("--figure", figure, "Figure to reproduce")
      ->required()
      ->check(CLI::IsMember({"sim3", "bleu3-awgn", "bleu3-rayleigh", "sim5", "loss"}));
  add_common(repro, repro_c, false);

  std::size_t synth_lines = 1000, synth_cols = 3;
  std::uint64_t synth_seed = 1;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth-corpus", "Write a synthetic entailment-style sentence corpus");
  synth->add_option("--lines", synth_lines, "Number of lines");
  synth->add_option("--columns", synth_cols, "Sentences per line (at least 2)");
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->add_option("--output", synth_out, "TSV path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      experiment::train_all(load(train_c), run_options(train_c));
    } else if (*eval) {
      const auto cfg = load(eval_c);
      experiment::run_experiment(cfg, run_options(eval_c));
      std::cout << (cfg.output_dir / "results.csv").string() << '\n';
    } else if (*base) {
      const auto cfg = load(base_c);
      experiment::run_baseline(cfg, run_options(base_c));
      std::cout << (cfg.output_dir / "baseline.csv").string() << '\n';
    } else if (*plt) {
      std::vector<fs::path> paths(plot_inputs.begin(), plot_inputs.end());
      plot::write_svg(plot::plot_results(paths, plot::parse_metric(plot_metric), plot_title), plot_output);
      std::cout << plot_output << '\n';
    } else if (*repro) {
      reproduce(figure, repro_c);
    } else if (*synth) {
      const auto pc = corpus::generate_synthetic_corpus(synth_lines, synth_cols, synth_seed);
      if (fs::path(synth_out).has_parent_path()) fs::create_directories(fs::path(synth_out).parent_path());
      corpus::write_pair_corpus(pc, synth_out);
      std::cout << synth_out << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
