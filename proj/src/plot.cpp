#include "semsic/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace semsic::plot {

namespace {

constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 70, kRight = 170, kTop = 40, kBottom = 60;

const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string esc(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '&': o += "&amp;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

}  // namespace

std::string render_svg(const LineChart& chart) {
  if (chart.x_ticks.empty()) throw Error("plot: no x values");
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& s : chart.series) {
    if (s.y.size() != chart.x_ticks.size()) throw Error("plot: series length differs from x ticks");
    for (const auto& v : s.y)
      if (v) {
        lo = std::min(lo, *v);
        hi = std::max(hi, *v);
      }
  }
  if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
  if (chart.y_min) lo = *chart.y_min;
  if (chart.y_max) hi = *chart.y_max;
  if (hi - lo < 1e-12) hi = lo + 1.0;

  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  const std::size_t n = chart.x_ticks.size();
  auto X = [&](std::size_t i) { return kLeft + (n == 1 ? pw / 2 : pw * static_cast<double>(i) / static_cast<double>(n - 1)); };
  auto Y = [&](double v) { return kTop + ph * (1.0 - (v - lo) / (hi - lo)); };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  if (!chart.comment.empty()) o << "<!-- " << esc(chart.comment) << " -->\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << num(kLeft + pw / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << esc(chart.title)
    << "</text>\n";
  for (int t = 0; t <= 5; ++t) {
    const double v = lo + (hi - lo) * t / 5.0;
    o << "<line x1=\"" << kLeft << "\" x2=\"" << num(kLeft + pw) << "\" y1=\"" << num(Y(v)) << "\" y2=\"" << num(Y(v))
      << "\" stroke=\"#ddd\"/>\n";
    o << "<text x=\"" << num(kLeft - 6) << "\" y=\"" << num(Y(v) + 4) << "\" text-anchor=\"end\">" << tick_label(v)
      << "</text>\n";
  }
  for (std::size_t i = 0; i < n; ++i)
    o << "<text x=\"" << num(X(i)) << "\" y=\"" << num(kTop + ph + 18) << "\" text-anchor=\"middle\">"
      << esc(chart.x_ticks[i]) << "</text>\n";
  o << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << num(pw) << "\" height=\"" << num(ph)
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  o << "<text x=\"" << num(kLeft + pw / 2) << "\" y=\"" << num(kHeight - 16) << "\" text-anchor=\"middle\">"
    << esc(chart.x_label) << "</text>\n";
  o << "<text transform=\"translate(18," << num(kTop + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
    << esc(chart.y_label) << "</text>\n";

  for (std::size_t s = 0; s < chart.series.size(); ++s) {
    const auto& series = chart.series[s];
    const char* color = kColors[s % std::size(kColors)];
    std::string d;
    bool pen = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (!series.y[i]) {
        pen = false;
        continue;
      }
      d += (pen ? " L" : " M") + num(X(i)) + " " + num(Y(*series.y[i]));
      pen = true;
    }
    if (!d.empty())
      o << "<path d=\"" << d.substr(1) << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    for (std::size_t i = 0; i < n; ++i)
      if (series.y[i])
        o << "<circle cx=\"" << num(X(i)) << "\" cy=\"" << num(Y(*series.y[i])) << "\" r=\"3\" fill=\"" << color
          << "\"/>\n";
    const double ly = kTop + 10 + 18.0 * static_cast<double>(s);
    o << "<line x1=\"" << num(kLeft + pw + 12) << "\" x2=\"" << num(kLeft + pw + 32) << "\" y1=\"" << num(ly)
      << "\" y2=\"" << num(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << num(kLeft + pw + 38) << "\" y=\"" << num(ly + 4) << "\">" << esc(series.label) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

void write_svg(const LineChart& chart, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << render_svg(chart);
}

Metric parse_metric(const std::string& s) {
  if (s == "similarity" || s == "min_similarity") return Metric::kMinSimilarity;
  if (s == "bleu1" || s == "min_bleu1") return Metric::kMinBleu1;
  throw Error("unknown metric '" + s + "' (expected similarity or bleu1)");
}

LineChart results_chart(const std::vector<experiment::ResultRow>& rows, Metric metric, const std::string& title) {
  if (rows.empty()) throw Error("plot: no result rows");
  std::set<std::size_t> cases;
  std::vector<std::string> methods;
  // (method, case) -> seed -> value; the minimum is repeated on every user row.
  std::map<std::pair<std::string, std::size_t>, std::map<std::uint64_t, double>> values;
  for (const auto& r : rows) {
    cases.insert(r.case_index);
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
    values[{r.method, r.case_index}][r.seed] = metric == Metric::kMinSimilarity ? r.min_similarity : r.min_bleu1;
  }
  LineChart c;
  c.title = title;
  c.x_label = "case";
  c.y_label = metric == Metric::kMinSimilarity ? "min semantic similarity" : "min BLEU-1";
  const std::size_t first = *cases.begin(), last = *cases.rbegin();
  for (std::size_t k = first; k <= last; ++k) c.x_ticks.push_back(std::to_string(k));
  for (const auto& m : methods) {
    Series s{m, std::vector<std::optional<double>>(c.x_ticks.size())};
    for (std::size_t k = first; k <= last; ++k) {
      auto it = values.find({m, k});
      if (it == values.end()) continue;
      double sum = 0.0;
      for (const auto& [seed, v] : it->second) sum += v;
      s.y[k - first] = sum / static_cast<double>(it->second.size());
    }
    c.series.push_back(std::move(s));
  }
  c.y_min = 0.0;
  c.y_max = 1.0;
  return c;
}

LineChart plot_results(const std::vector<std::filesystem::path>& csvs, Metric metric, const std::string& title) {
  if (csvs.empty()) throw Error("plot: no input files");
  std::vector<experiment::ResultRow> rows;
  std::string hashes;
  for (const auto& p : csvs) {
    auto r = experiment::read_results(p);
    rows.insert(rows.end(), r.begin(), r.end());
    std::ifstream in(p);
    std::string first;
    std::getline(in, first);
    if (first.rfind("# ", 0) == 0) hashes += (hashes.empty() ? "" : " ") + first.substr(2);
  }
  auto chart = results_chart(rows, metric, title);
  chart.comment = hashes;
  return chart;
}

LineChart loss_chart(const std::vector<std::pair<std::string, std::vector<double>>>& curves, const std::string& title) {
  std::size_t n = 0;
  for (const auto& [name, v] : curves) n = std::max(n, v.size());
  if (n == 0) throw Error("plot: empty loss curves");
  LineChart c;
  c.title = title;
  c.x_label = "epoch";
  c.y_label = "joint loss";
  for (std::size_t e = 1; e <= n; ++e) c.x_ticks.push_back(std::to_string(e));
  for (const auto& [name, v] : curves) {
    Series s{name, std::vector<std::optional<double>>(n)};
    for (std::size_t e = 0; e < v.size(); ++e) s.y[e] = v[e];
    c.series.push_back(std::move(s));
  }
  c.y_min = 0.0;
  return c;
}

}  // namespace semsic::plot
