#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "common/error.hpp"
#include "harness/harness.hpp"

namespace b4g::harness {
namespace {

std::string exact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

void aggregate(RunMetrics& metrics) {
  if (metrics.folds.empty()) return;
  double val = 0, acc = 0, f1 = 0;
  for (const auto& f : metrics.folds) {
    val += f.val_accuracy;
    acc += f.test_accuracy;
    f1 += f.test_macro_f1;
  }
  const double n = static_cast<double>(metrics.folds.size());
  metrics.mean_val_accuracy = val / n;
  metrics.mean_test_accuracy = acc / n;
  metrics.mean_test_macro_f1 = f1 / n;
}

std::string metrics_tsv(const RunMetrics& metrics) {
  std::string out = "config_hash\tfold\tbest_epoch\tval_accuracy\tval_macro_f1\ttest_accuracy\ttest_macro_f1\n";
  for (const auto& f : metrics.folds) {
    out += metrics.config_hash + "\t" + std::to_string(f.fold) + "\t" + std::to_string(f.best_epoch) + "\t" +
           exact(f.val_accuracy) + "\t" + exact(f.val_macro_f1) + "\t" + exact(f.test_accuracy) + "\t" +
           exact(f.test_macro_f1) + "\n";
  }
  out += metrics.config_hash + "\tmean\t\t" + exact(metrics.mean_val_accuracy) + "\t\t" +
         exact(metrics.mean_test_accuracy) + "\t" + exact(metrics.mean_test_macro_f1) + "\n";
  return out;
}

nlohmann::json to_json(const FoldResult& r) {
  nlohmann::json history = nlohmann::json::array();
  for (const auto& e : r.history)
    history.push_back({{"epoch", e.epoch},
                       {"train_loss", e.train_loss},
                       {"val_accuracy", e.val_accuracy},
                       {"val_macro_f1", e.val_macro_f1}});
  return {{"fold", r.fold},
          {"best_epoch", r.best_epoch},
          {"val_accuracy", r.val_accuracy},
          {"val_macro_f1", r.val_macro_f1},
          {"test_accuracy", r.test_accuracy},
          {"test_macro_f1", r.test_macro_f1},
          {"checkpoint", r.checkpoint},
          {"history", history}};
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "window,accuracy,macro_f1,config_hash\n";
  for (const auto& r : rows)
    out += std::to_string(r.window) + "," + exact(r.accuracy) + "," + exact(r.macro_f1) + "," + r.config_hash + "\n";
  return out;
}

std::vector<SweepRow> parse_sweep_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || trim(line) != "window,accuracy,macro_f1,config_hash")
    fail(ErrorKind::format, "sweep CSV lacks the window,accuracy,macro_f1,config_hash header");
  std::vector<SweepRow> rows;
  int number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (trim(line).empty()) continue;
    const auto f = split(trim(line), ',');
    if (f.size() != 4) fail(ErrorKind::format, "sweep CSV line " + std::to_string(number) + " has " +
                                                   std::to_string(f.size()) + " fields");
    SweepRow r;
    auto num = [&](const std::string& s, auto& out) {
      auto res = std::from_chars(s.data(), s.data() + s.size(), out);
      if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        fail(ErrorKind::format, "sweep CSV line " + std::to_string(number) + ": bad number '" + s + "'");
    };
    num(f[0], r.window);
    num(f[1], r.accuracy);
    num(f[2], r.macro_f1);
    r.config_hash = f[3];
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string render_line_chart_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                                  const std::vector<ChartSeries>& series) {
  constexpr double W = 640, H = 400, left = 70, right = 150, top = 40, bottom = 60;
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) fail(ErrorKind::shape, "chart series '" + s.name + "' has mismatched x and y");
    for (double v : s.x) xmin = std::min(xmin, v), xmax = std::max(xmax, v);
    for (double v : s.y) ymin = std::min(ymin, v), ymax = std::max(ymax, v);
  }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (xmax == xmin) xmin -= 0.5, xmax += 0.5;
  if (ymax == ymin) ymin -= 0.01, ymax += 0.01;
  const double pad = 0.05 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;
  const double pw = W - left - right, ph = H - top - bottom;
  auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return top + (1.0 - (y - ymin) / (ymax - ymin)) * ph; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
    << " " << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << xml_escape(title)
    << "</text>\n";
  o << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph
    << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
    << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 5; ++k) {
    const double yv = ymin + (ymax - ymin) * k / 5.0;
    o << "<line x1=\"" << left - 4 << "\" y1=\"" << py(yv) << "\" x2=\"" << left << "\" y2=\"" << py(yv)
      << "\" stroke=\"black\"/>";
    o << "<text x=\"" << left - 8 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << fixed(yv)
      << "</text>\n";
  }
  std::vector<double> xticks;
  for (const auto& s : series) xticks.insert(xticks.end(), s.x.begin(), s.x.end());
  std::sort(xticks.begin(), xticks.end());
  xticks.erase(std::unique(xticks.begin(), xticks.end()), xticks.end());
  for (double xv : xticks) {
    o << "<line x1=\"" << px(xv) << "\" y1=\"" << top + ph << "\" x2=\"" << px(xv) << "\" y2=\"" << top + ph + 4
      << "\" stroke=\"black\"/>";
    o << "<text x=\"" << px(xv) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">" << exact(xv)
      << "</text>\n";
  }
  o << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 18 << "\" text-anchor=\"middle\">" << xml_escape(x_label)
    << "</text>\n";
  o << "<text transform=\"translate(18," << top + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
    << xml_escape(y_label) << "</text>\n";
  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* color = colors[si % (sizeof colors / sizeof *colors)];
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) o << (i ? " " : "") << px(s.x[i]) << "," << py(s.y[i]);
    o << "\"/>\n";
    for (std::size_t i = 0; i < s.x.size(); ++i)
      o << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i]) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    const double ly = top + 10 + 20.0 * static_cast<double>(si);
    o << "<line x1=\"" << left + pw + 15 << "\" y1=\"" << ly << "\" x2=\"" << left + pw + 35 << "\" y2=\"" << ly
      << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>";
    o << "<text x=\"" << left + pw + 40 << "\" y=\"" << ly + 4 << "\">" << xml_escape(s.name) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::string sweep_chart_svg(const std::vector<SweepRow>& rows, const std::string& title) {
  ChartSeries acc{"accuracy", {}, {}}, f1{"macro-F1", {}, {}};
  for (const auto& r : rows) {
    acc.x.push_back(r.window);
    acc.y.push_back(r.accuracy);
    f1.x.push_back(r.window);
    f1.y.push_back(r.macro_f1);
  }
  return render_line_chart_svg(title, "window size w", "score", {acc, f1});
}

}  // namespace b4g::harness
