#pragma once
// Static SVG line charts for result CSVs and loss curves.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "semsic/experiment.hpp"

namespace semsic::plot {

struct Series {
  std::string label;
  std::vector<std::optional<double>> y;  // one entry per x tick; missing values leave a gap
};

struct LineChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<std::string> x_ticks;
  std::vector<Series> series;
  std::string comment;  // embedded as an XML comment
  std::optional<double> y_min, y_max;
};

std::string render_svg(const LineChart& chart);
void write_svg(const LineChart& chart, const std::filesystem::path& path);

enum class Metric { kMinSimilarity, kMinBleu1 };
Metric parse_metric(const std::string& s);

// One line per method: mean over seeds of the per-case minimum across users.
LineChart results_chart(const std::vector<experiment::ResultRow>& rows, Metric metric, const std::string& title);
// Loads every CSV (same schema required) and charts the union.
LineChart plot_results(const std::vector<std::filesystem::path>& csvs, Metric metric, const std::string& title);

LineChart loss_chart(const std::vector<std::pair<std::string, std::vector<double>>>& curves, const std::string& title);

}  // namespace semsic::plot
