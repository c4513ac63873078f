#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "corpus/corpus.hpp"
#include "depgraph/depgraph.hpp"
#include "model/model.hpp"
#include "plmfeat/encoder.hpp"

namespace b4g::harness {

// Flat key=value run configuration. Resolution order: built-in defaults,
// then each config file in order, then explicit overrides.
struct RunConfig {
  std::string dataset = "custom";
  std::string train_path;
  std::string test_path;
  std::string format = "auto";  // auto | semeval_xml | twitter_lines
  bool strict_alignment = false;
  std::string vectors_path;  // empty: every word takes the OOV policy
  int word_dim = 300;
  std::string oov_policy = "uniform_init";
  std::string parser = "cache";
  std::string cache_dir = ".b4g-cache";
  std::string encoder = "bert:bert-base-uncased";
  bool finetune_encoder = true;
  std::vector<int> layers{1, 5, 9, 12};
  double alpha = 0.25;
  double beta = 0.01;
  int window = -1;  // -1: dataset default (twitter 2, laptop 3, restaurant 5, custom 3)
  double lambda = 1e-5;
  int hidden = 300;
  int batch_size = 32;
  int epochs = 30;
  int patience = 10;  // epochs without validation improvement; 0 disables early stopping
  double warmup = 0.1;
  double lr_encoder = 2e-5;
  double lr_head = 1e-3;
  double dropout = 0.8;
  std::uint64_t seed = 42;
  int folds = 10;
  bool use_position = true;
  bool use_attention_graph = true;
  std::vector<int> sweep_windows{1, 2, 3, 4, 5, 6, 7};
  std::string output_dir = "runs";

  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static std::vector<std::string> keys();

  // "key = value" lines; '#' starts a comment.
  void load_file(const std::filesystem::path& path);
  void apply(const std::string& assignment);  // "key=value"

  // Sorted "key=value" lines of every key.
  std::string serialize() const;
  // FNV-1a over serialize() minus output_dir and cache_dir, as 16 hex digits.
  std::string hash() const;
  nlohmann::json to_json() const;

  corpus::DatasetId dataset_id() const;
  int resolved_window() const;
  model::ModelConfig model_config(int word_dim, int encoder_dim) const;
  void validate() const;
};

int default_window(corpus::DatasetId id) noexcept;

struct Metrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::array<std::array<std::size_t, 3>, 3> confusion{};  // [gold][predicted]
  std::size_t total = 0;
};

// Macro-F1 averages per-class F1 over all three classes; a class with
// precision and recall both zero (or absent) scores 0.
Metrics compute_metrics(const std::vector<int>& predictions, const std::vector<int>& labels);

// Piecewise-linear: 0 at step 0, peak at the end of warmup, 0 at total_steps.
class LinearSchedule {
 public:
  LinearSchedule(double peak, std::size_t total_steps, double warmup_fraction);
  double at(std::size_t step) const;
  std::size_t warmup_steps() const noexcept { return warmup_; }
  std::size_t total_steps() const noexcept { return total_; }

 private:
  double peak_;
  std::size_t total_;
  std::size_t warmup_;
};

class Adam {
 public:
  struct Group {
    std::vector<ag::Var> params;
    LinearSchedule schedule;
  };
  explicit Adam(std::vector<Group> groups, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  // Applies one update from the accumulated gradients at learning rate
  // schedule.at(step) and advances the step.
  void step();
  std::size_t steps_taken() const noexcept { return t_; }
  double current_lr(std::size_t group) const { return groups_[group].schedule.at(t_); }

 private:
  std::vector<Group> groups_;
  std::vector<std::vector<ag::Matrix>> m_, v_;
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

// One loaded, parsed and embedded classification unit.
struct Prepared {
  corpus::Instance instance;
  depgraph::DepGraph graph;
  ag::Var embeddings;  // n x d_e constant
  plmfeat::RenderedInput rendered;
  depgraph::SubwordAlignment alignment;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  double val_macro_f1 = 0.0;
  double lr_head = 0.0;
  double lr_encoder = 0.0;
};

struct FoldResult {
  int fold = 0;
  int best_epoch = 0;  // 0: initialization
  double val_accuracy = 0.0;
  double val_macro_f1 = 0.0;
  double test_accuracy = 0.0;
  double test_macro_f1 = 0.0;
  std::vector<EpochRecord> history;
  std::string checkpoint;
};

struct RunMetrics {
  std::string config_hash;
  std::vector<FoldResult> folds;
  double mean_val_accuracy = 0.0;
  double mean_test_accuracy = 0.0;
  double mean_test_macro_f1 = 0.0;
};
void aggregate(RunMetrics& metrics);

// Owns the data, parser output, word vectors and encoder of one run.
class Session {
 public:
  explicit Session(RunConfig config);
  ~Session();

  const RunConfig& config() const noexcept { return config_; }

  // Loads both splits, parses through the cache (saving new parses), loads
  // word vectors and the encoder, and precomputes frozen features.
  void prepare();
  bool prepared() const noexcept { return prepared_; }

  // In-memory data for tests and embedding callers; replaces prepare().
  void prepare_instances(std::vector<corpus::Instance> train, std::vector<corpus::Instance> test,
                         const std::vector<depgraph::Heads>& train_heads,
                         const std::vector<depgraph::Heads>& test_heads,
                         std::unique_ptr<plmfeat::EncoderBackend> encoder, corpus::WordVectorTable vectors);

  const std::vector<Prepared>& train() const { return train_; }
  const std::vector<Prepared>& test() const { return test_; }
  plmfeat::EncoderBackend& encoder() { return *encoder_; }

  std::string stats_tsv() const;
  // Added/pruned edges of one instance; split is "train" or "test".
  std::string graph_diff(const std::string& split, std::size_t index);

  plmfeat::PlmFeatures features(const Prepared& item);
  model::ForwardTrace forward(const model::ModelParams& params, const Prepared& item,
                              const model::ForwardOptions& options = {});

  std::vector<int> predict(const model::ModelParams& params, const std::vector<const Prepared*>& items);
  Metrics evaluate(const model::ModelParams& params, const std::vector<const Prepared*>& items);

  // Trains on `train_items`, selecting the epoch with the best accuracy on
  // `val_items`; reports test metrics of that epoch's parameters when
  // `test_items` is non-empty. Writes the checkpoint and epoch log under
  // `out_dir` when given.
  FoldResult fit(int fold, const std::vector<const Prepared*>& train_items,
                 const std::vector<const Prepared*>& val_items, const std::vector<const Prepared*>& test_items,
                 const std::optional<std::filesystem::path>& out_dir, bool track_train_accuracy = false);

  FoldResult train_fold(int fold, const std::optional<std::filesystem::path>& out_dir);
  RunMetrics run_cv(const std::filesystem::path& out_dir);
  // Runs the four rows full / w/o pos. / w/o att. / w/o both into
  // sub-directories and writes ablation.tsv.
  std::vector<std::pair<std::string, RunMetrics>> run_ablation(const std::filesystem::path& out_dir);
  // One run_cv per window; writes sweep.csv and sweep.svg.
  std::vector<std::pair<int, RunMetrics>> window_sweep(const std::vector<int>& windows,
                                                        const std::filesystem::path& out_dir);

  Metrics evaluate_checkpoint(const std::filesystem::path& checkpoint, const std::string& split);

  nlohmann::json metadata() const;

 private:
  model::ModelParams init_params(std::uint64_t seed) const;
  std::vector<const Prepared*> all(const std::vector<Prepared>& items) const;
  Prepared make_prepared(corpus::Instance instance, const depgraph::Heads& heads) const;
  void precompute_features();

  RunConfig config_;
  bool prepared_ = false;
  std::unique_ptr<plmfeat::EncoderBackend> encoder_;
  std::optional<corpus::WordVectorTable> vectors_;
  std::unique_ptr<plmfeat::FeatureCache> feature_cache_;
  std::map<std::string, ag::Matrix> encoder_initial_;
  bool live_features_ = false;
  std::vector<Prepared> train_;
  std::vector<Prepared> test_;
  std::string parser_id_;
};

// Fold rows plus a mean row, tab separated.
std::string metrics_tsv(const RunMetrics& metrics);
nlohmann::json to_json(const FoldResult& result);

struct SweepRow {
  int window = 0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::string config_hash;
};
// Header "window,accuracy,macro_f1,config_hash"; values printed with 17
// significant digits so that parse_sweep_csv round-trips exactly.
std::string sweep_csv(const std::vector<SweepRow>& rows);
std::vector<SweepRow> parse_sweep_csv(const std::string& text);

struct ChartSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};
std::string render_line_chart_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                                  const std::vector<ChartSeries>& series);
// Accuracy and macro-F1 against window size.
std::string sweep_chart_svg(const std::vector<SweepRow>& rows, const std::string& title);

}  // namespace b4g::harness
