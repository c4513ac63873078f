// b4g: command-line front end over the bert4gcn C API.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "bert4gcn/bert4gcn.h"

namespace {

struct Failure {
  int code;
};

void check(b4g_status status) {
  if (status == B4G_OK) return;
  std::fprintf(stderr, "b4g: %s: %s\n", b4g_status_name(status), b4g_last_error());
  throw Failure{static_cast<int>(status)};
}

std::string take(char* text) {
  std::string out = text ? text : "";
  b4g_string_free(text);
  return out;
}

struct Common {
  std::vector<std::string> config_files;
  std::vector<std::string> overrides;
  bool quiet = false;
  bool verbose = false;
};

struct ConfigHandle {
  b4g_config* ptr = nullptr;
  ~ConfigHandle() { b4g_config_destroy(ptr); }
};

struct SessionHandle {
  b4g_session* ptr = nullptr;
  ~SessionHandle() { b4g_session_destroy(ptr); }
};

void build_config(const Common& common, ConfigHandle& config) {
  b4g_set_log_level(common.quiet ? B4G_LOG_QUIET : common.verbose ? B4G_LOG_INFO : B4G_LOG_WARNING);
  check(b4g_config_create(&config.ptr));
  for (const auto& f : common.config_files) check(b4g_config_load_file(config.ptr, f.c_str()));
  for (const auto& o : common.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "b4g: --set expects key=value, got '%s'\n", o.c_str());
      throw Failure{B4G_ERR_CONFIG};
    }
    check(b4g_config_set(config.ptr, o.substr(0, eq).c_str(), o.substr(eq + 1).c_str()));
  }
}

void open_session(const Common& common, ConfigHandle& config, SessionHandle& session) {
  build_config(common, config);
  check(b4g_session_create(config.ptr, &session.ptr));
  check(b4g_session_prepare(session.ptr));
}

std::string output_dir(const ConfigHandle& config, const std::string& flag) {
  if (!flag.empty()) return flag;
  char* dir = nullptr;
  check(b4g_config_get(config.ptr, "output_dir", &dir));
  return take(dir);
}

std::vector<int> parse_windows(const std::string& text) {
  std::vector<int> out;
  std::stringstream in(text);
  std::string part;
  while (std::getline(in, part, ',')) {
    if (part.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      std::fprintf(stderr, "b4g: bad window value '%s'\n", part.c_str());
      throw Failure{B4G_ERR_CONFIG};
    }
  }
  return out;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    std::fprintf(stderr, "b4g: cannot read %s\n", path.c_str());
    throw Failure{B4G_ERR_IO};
  }
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BERT4GCN aspect sentiment classification"};
  app.require_subcommand(1);
  Common common;
  app.add_option("-c,--config", common.config_files, "Config file (key = value lines); repeatable");
  app.add_option("-s,--set", common.overrides, "Override key=value; repeatable");
  app.add_flag("-q,--quiet", common.quiet, "Suppress warnings");
  app.add_flag("-v,--verbose", common.verbose, "Log per-epoch progress");

  auto* prepare = app.add_subcommand("prepare", "Load data, parse through the cache and precompute features");
  auto* stats = app.add_subcommand("stats", "Print per-class counts as TSV");

  int fold = 0;
  std::string out_flag;
  auto* train = app.add_subcommand("train", "Train one cross-validation fold");
  train->add_option("--fold", fold, "Fold index")->capture_default_str();
  train->add_option("-o,--out", out_flag, "Output directory (default: output_dir)");

  std::string checkpoint, split = "test";
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--split", split, "train or test")->capture_default_str();

  bool ablation = false;
  auto* cv = app.add_subcommand("cv", "Run k-fold cross validation");
  cv->add_option("-o,--out", out_flag, "Output directory (default: output_dir)");
  cv->add_flag("--ablation", ablation, "Run the full / w/o pos. / w/o att. / w/o both matrix");

  std::string windows_text;
  auto* sweep = app.add_subcommand("sweep-window", "Cross validate across position window sizes");
  sweep->add_option("--windows", windows_text, "Comma-separated window sizes (default: sweep_windows)");
  sweep->add_option("-o,--out", out_flag, "Output directory (default: output_dir)");

  std::size_t index = 0;
  auto* diff = app.add_subcommand("graph-diff", "List edges added and pruned by attention for one instance");
  diff->add_option("--split", split, "train or test")->capture_default_str();
  diff->add_option("--index", index, "Instance index")->capture_default_str();

  std::string csv_path, svg_path, title = "Relative position window";
  auto* plot = app.add_subcommand("plot", "Render a sweep CSV as an SVG chart");
  plot->add_option("csv", csv_path, "sweep.csv")->required();
  plot->add_option("-o,--out", svg_path, "SVG output (default: stdout)");
  plot->add_option("--title", title, "Chart title");

  CLI11_PARSE(app, argc, argv);

  try {
    ConfigHandle config;
    SessionHandle session;
    if (prepare->parsed()) {
      open_session(common, config, session);
      char* s = nullptr;
      check(b4g_session_metadata_json(session.ptr, &s));
      std::cout << take(s) << "\n";
    } else if (stats->parsed()) {
      open_session(common, config, session);
      char* s = nullptr;
      check(b4g_session_stats_tsv(session.ptr, &s));
      std::cout << take(s);
    } else if (train->parsed()) {
      open_session(common, config, session);
      const std::string dir = output_dir(config, out_flag);
      b4g_fold_metrics m{};
      check(b4g_session_train_fold(session.ptr, fold, dir.c_str(), &m));
      std::printf("fold\tbest_epoch\tval_accuracy\tval_macro_f1\ttest_accuracy\ttest_macro_f1\n");
      std::printf("%d\t%d\t%.6f\t%.6f\t%.6f\t%.6f\n", m.fold, m.best_epoch, m.val_accuracy, m.val_macro_f1,
                  m.test_accuracy, m.test_macro_f1);
    } else if (eval->parsed()) {
      open_session(common, config, session);
      double acc = 0, f1 = 0;
      check(b4g_session_evaluate(session.ptr, checkpoint.c_str(), split.c_str(), &acc, &f1));
      std::printf("split\taccuracy\tmacro_f1\n%s\t%.6f\t%.6f\n", split.c_str(), acc, f1);
    } else if (cv->parsed()) {
      open_session(common, config, session);
      const std::string dir = output_dir(config, out_flag);
      b4g_run_summary s{};
      check(b4g_session_cross_validate(session.ptr, dir.c_str(), ablation ? 1 : 0, &s));
      std::printf("folds\tmean_val_accuracy\tmean_test_accuracy\tmean_test_macro_f1\n");
      std::printf("%zu\t%.6f\t%.6f\t%.6f\n", s.folds, s.mean_val_accuracy, s.mean_test_accuracy,
                  s.mean_test_macro_f1);
      std::printf("results in %s\n", dir.c_str());
    } else if (sweep->parsed()) {
      open_session(common, config, session);
      if (windows_text.empty()) {
        char* w = nullptr;
        check(b4g_config_get(config.ptr, "sweep_windows", &w));
        windows_text = take(w);
      }
      const auto windows = parse_windows(windows_text);
      const std::string dir = output_dir(config, out_flag);
      char* csv = nullptr;
      check(b4g_session_window_sweep(session.ptr, windows.data(), windows.size(), dir.c_str(), &csv));
      std::cout << take(csv);
    } else if (diff->parsed()) {
      open_session(common, config, session);
      char* s = nullptr;
      check(b4g_session_graph_diff(session.ptr, split.c_str(), index, &s));
      std::cout << take(s);
    } else if (plot->parsed()) {
      b4g_set_log_level(common.quiet ? B4G_LOG_QUIET : B4G_LOG_WARNING);
      char* svg = nullptr;
      check(b4g_render_sweep_chart(read_text(csv_path).c_str(), title.c_str(), &svg));
      const std::string text = take(svg);
      if (svg_path.empty()) {
        std::cout << text;
      } else {
        std::ofstream out(svg_path, std::ios::binary);
        if (!(out << text)) {
          std::fprintf(stderr, "b4g: cannot write %s\n", svg_path.c_str());
          return B4G_ERR_IO;
        }
      }
    }
  } catch (const Failure& f) {
    return f.code;
  }
  return 0;
}
