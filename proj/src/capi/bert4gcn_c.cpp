#include "bert4gcn/bert4gcn.h"

#include <cstring>
#include <new>
#include <string>

#include "common/error.hpp"
#include "corpus/corpus.hpp"
#include "graphsup/graphsup.hpp"
#include "harness/harness.hpp"

struct b4g_config {
  b4g::harness::RunConfig config;
};

struct b4g_dataset {
  std::vector<b4g::corpus::Instance> instances;
};

struct b4g_session {
  std::unique_ptr<b4g::harness::Session> session;
};

namespace {

thread_local std::string last_error;

template <typename F>
b4g_status guard(F&& body) {
  try {
    body();
    return B4G_OK;
  } catch (const b4g::Error& e) {
    last_error = e.what();
    return static_cast<b4g_status>(static_cast<int>(e.kind()));
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return B4G_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return B4G_ERR_INTERNAL;
  } catch (...) {
    last_error = "unknown error";
    return B4G_ERR_INTERNAL;
  }
}

b4g_status null_argument(const char* what) {
  last_error = std::string("null argument: ") + what;
  return B4G_ERR_NULL_ARGUMENT;
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

#define B4G_REQUIRE(ptr) \
  if (!(ptr)) return null_argument(#ptr)

}  // namespace

extern "C" {

const char* b4g_version(void) { return "1.0.0"; }
const char* b4g_last_error(void) { return last_error.c_str(); }

const char* b4g_status_name(b4g_status status) {
  if (status == B4G_OK) return "ok";
  if (status == B4G_ERR_NULL_ARGUMENT) return "null_argument";
  if (status >= B4G_ERR_PARSE && status <= B4G_ERR_INTERNAL)
    return b4g::to_string(static_cast<b4g::ErrorKind>(static_cast<int>(status)));
  return "unknown";
}

void b4g_string_free(char* text) { std::free(text); }

void b4g_set_log_level(int level) {
  b4g::set_log_level(level <= B4G_LOG_QUIET     ? b4g::LogLevel::quiet
                     : level == B4G_LOG_WARNING ? b4g::LogLevel::warning
                                                : b4g::LogLevel::info);
}

b4g_status b4g_config_create(b4g_config** out) {
  B4G_REQUIRE(out);
  return guard([&] { *out = new b4g_config(); });
}

void b4g_config_destroy(b4g_config* config) { delete config; }

b4g_status b4g_config_load_file(b4g_config* config, const char* path) {
  B4G_REQUIRE(config);
  B4G_REQUIRE(path);
  return guard([&] { config->config.load_file(path); });
}

b4g_status b4g_config_set(b4g_config* config, const char* key, const char* value) {
  B4G_REQUIRE(config);
  B4G_REQUIRE(key);
  B4G_REQUIRE(value);
  return guard([&] { config->config.set(key, value); });
}

b4g_status b4g_config_get(const b4g_config* config, const char* key, char** out) {
  B4G_REQUIRE(config);
  B4G_REQUIRE(key);
  B4G_REQUIRE(out);
  return guard([&] { *out = dup(config->config.get(key)); });
}

b4g_status b4g_config_serialize(const b4g_config* config, char** out) {
  B4G_REQUIRE(config);
  B4G_REQUIRE(out);
  return guard([&] { *out = dup(config->config.serialize()); });
}

b4g_status b4g_config_hash(const b4g_config* config, char** out) {
  B4G_REQUIRE(config);
  B4G_REQUIRE(out);
  return guard([&] { *out = dup(config->config.hash()); });
}

b4g_status b4g_dataset_load(const char* path, const char* format, const char* dataset, int strict_alignment,
                            b4g_dataset** out) {
  B4G_REQUIRE(path);
  B4G_REQUIRE(out);
  return guard([&] {
    const std::string ds = dataset ? dataset : "custom";
    auto id = b4g::corpus::parse_dataset_id(ds);
    if (!id) b4g::fail(b4g::ErrorKind::config, "unknown dataset '" + ds + "'");
    const std::string fmt = format ? format : "auto";
    b4g::corpus::FileFormat f;
    if (fmt == "auto") {
      f = b4g::corpus::default_format(*id, path);
    } else {
      auto parsed = b4g::corpus::parse_file_format(fmt);
      if (!parsed) b4g::fail(b4g::ErrorKind::config, "unknown format '" + fmt + "'");
      f = *parsed;
    }
    auto d = std::make_unique<b4g_dataset>();
    d->instances = b4g::corpus::load_dataset(path, f, *id, strict_alignment != 0);
    *out = d.release();
  });
}

void b4g_dataset_destroy(b4g_dataset* dataset) { delete dataset; }

size_t b4g_dataset_size(const b4g_dataset* dataset) { return dataset ? dataset->instances.size() : 0; }

b4g_status b4g_dataset_instance(const b4g_dataset* dataset, size_t index, b4g_instance_info* out) {
  B4G_REQUIRE(dataset);
  B4G_REQUIRE(out);
  return guard([&] {
    if (index >= dataset->instances.size())
      b4g::fail(b4g::ErrorKind::index, "instance " + std::to_string(index) + " out of range");
    const auto& inst = dataset->instances[index];
    out->num_tokens = inst.tokens.size();
    out->aspect_start = inst.aspect_start;
    out->aspect_len = inst.aspect_len;
    out->label = static_cast<int>(inst.label);
    out->sentence_id = inst.sentence_id.c_str();
  });
}

b4g_status b4g_dataset_token(const b4g_dataset* dataset, size_t index, size_t token, const char** out) {
  B4G_REQUIRE(dataset);
  B4G_REQUIRE(out);
  return guard([&] {
    if (index >= dataset->instances.size())
      b4g::fail(b4g::ErrorKind::index, "instance " + std::to_string(index) + " out of range");
    const auto& tokens = dataset->instances[index].tokens;
    if (token >= tokens.size()) b4g::fail(b4g::ErrorKind::index, "token " + std::to_string(token) + " out of range");
    *out = tokens[token].c_str();
  });
}

b4g_status b4g_dataset_label_counts(const b4g_dataset* dataset, size_t counts[3]) {
  B4G_REQUIRE(dataset);
  B4G_REQUIRE(counts);
  return guard([&] {
    const auto c = b4g::corpus::count_labels(dataset->instances);
    for (int i = 0; i < 3; ++i) counts[i] = c.by_label[static_cast<std::size_t>(i)];
  });
}

b4g_status b4g_make_folds(size_t count, int k, uint64_t seed, int* assignments) {
  B4G_REQUIRE(assignments);
  return guard([&] {
    const auto plan = b4g::corpus::make_folds(count, k, seed);
    for (size_t i = 0; i < count; ++i) assignments[i] = plan.assignments[i];
  });
}

b4g_status b4g_to_adjacency(const int* heads, size_t n, uint8_t* adjacency) {
  B4G_REQUIRE(heads);
  B4G_REQUIRE(adjacency);
  return guard([&] {
    const auto g = b4g::depgraph::to_adjacency(b4g::depgraph::Heads(heads, heads + n), n);
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < n; ++j)
        adjacency[i * n + j] = g.adjacency(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  });
}

b4g_status b4g_supplement(const uint8_t* adjacency, const double* attention, size_t n, double alpha, double beta,
                          uint8_t* out) {
  B4G_REQUIRE(adjacency);
  B4G_REQUIRE(attention);
  B4G_REQUIRE(out);
  return guard([&] {
    const auto N = static_cast<Eigen::Index>(n);
    b4g::depgraph::Adjacency a(N, N);
    b4g::ag::Matrix att(N, N);
    for (Eigen::Index i = 0; i < N; ++i)
      for (Eigen::Index j = 0; j < N; ++j) {
        a(i, j) = adjacency[i * N + j];
        att(i, j) = attention[i * N + j];
      }
    const auto s = b4g::graphsup::supplement(a, att, alpha, beta);
    for (Eigen::Index i = 0; i < N; ++i)
      for (Eigen::Index j = 0; j < N; ++j) out[i * N + j] = s(i, j);
  });
}

b4g_status b4g_position_index(int i, int j, int window, int* out) {
  B4G_REQUIRE(out);
  return guard([&] { *out = b4g::graphsup::position_index(i, j, window); });
}

b4g_status b4g_evaluate_predictions(const int* predictions, const int* labels, size_t n, double* accuracy,
                                    double* macro_f1) {
  B4G_REQUIRE(predictions);
  B4G_REQUIRE(labels);
  return guard([&] {
    const auto m = b4g::harness::compute_metrics(std::vector<int>(predictions, predictions + n),
                                                 std::vector<int>(labels, labels + n));
    if (accuracy) *accuracy = m.accuracy;
    if (macro_f1) *macro_f1 = m.macro_f1;
  });
}

b4g_status b4g_session_create(const b4g_config* config, b4g_session** out) {
  B4G_REQUIRE(config);
  B4G_REQUIRE(out);
  return guard([&] {
    config->config.validate();
    auto s = std::make_unique<b4g_session>();
    s->session = std::make_unique<b4g::harness::Session>(config->config);
    *out = s.release();
  });
}

void b4g_session_destroy(b4g_session* session) { delete session; }

b4g_status b4g_session_prepare(b4g_session* session) {
  B4G_REQUIRE(session);
  return guard([&] { session->session->prepare(); });
}

b4g_status b4g_session_stats_tsv(b4g_session* session, char** out) {
  B4G_REQUIRE(session);
  B4G_REQUIRE(out);
  return guard([&] { *out = dup(session->session->stats_tsv()); });
}

b4g_status b4g_session_metadata_json(b4g_session* session, char** out) {
  B4G_REQUIRE(session);
  B4G_REQUIRE(out);
  return guard([&] { *out = dup(session->session->metadata().dump(2)); });
}

b4g_status b4g_session_graph_diff(b4g_session* session, const char* split, size_t index, char** out) {
  B4G_REQUIRE(session);
  B4G_REQUIRE(split);
  B4G_REQUIRE(out);
  return guard([&] { *out = dup(session->session->graph_diff(split, index)); });
}

b4g_status b4g_session_train_fold(b4g_session* session, int fold, const char* out_dir, b4g_fold_metrics* out) {
  B4G_REQUIRE(session);
  return guard([&] {
    std::optional<std::filesystem::path> dir;
    if (out_dir) dir = out_dir;
    const auto r = session->session->train_fold(fold, dir);
    if (out) *out = {r.fold, r.best_epoch, r.val_accuracy, r.val_macro_f1, r.test_accuracy, r.test_macro_f1};
  });
}

b4g_status b4g_session_cross_validate(b4g_session* session, const char* out_dir, int ablation,
                                      b4g_run_summary* out) {
  B4G_REQUIRE(session);
  B4G_REQUIRE(out_dir);
  return guard([&] {
    b4g::harness::RunMetrics m;
    if (ablation) {
      m = session->session->run_ablation(out_dir).front().second;
    } else {
      m = session->session->run_cv(out_dir);
    }
    if (out) *out = {m.folds.size(), m.mean_val_accuracy, m.mean_test_accuracy, m.mean_test_macro_f1};
  });
}

b4g_status b4g_session_window_sweep(b4g_session* session, const int* windows, size_t count, const char* out_dir,
                                    char** csv_out) {
  B4G_REQUIRE(session);
  B4G_REQUIRE(out_dir);
  if (count > 0) B4G_REQUIRE(windows);
  return guard([&] {
    const auto runs = session->session->window_sweep(std::vector<int>(windows, windows + count), out_dir);
    if (csv_out) {
      std::vector<b4g::harness::SweepRow> rows;
      for (const auto& [w, m] : runs) rows.push_back({w, m.mean_test_accuracy, m.mean_test_macro_f1, m.config_hash});
      *csv_out = dup(b4g::harness::sweep_csv(rows));
    }
  });
}

b4g_status b4g_session_evaluate(b4g_session* session, const char* checkpoint, const char* split, double* accuracy,
                                double* macro_f1) {
  B4G_REQUIRE(session);
  B4G_REQUIRE(checkpoint);
  return guard([&] {
    const auto m = session->session->evaluate_checkpoint(checkpoint, split ? split : "test");
    if (accuracy) *accuracy = m.accuracy;
    if (macro_f1) *macro_f1 = m.macro_f1;
  });
}

b4g_status b4g_render_sweep_chart(const char* csv, const char* title, char** svg_out) {
  B4G_REQUIRE(csv);
  B4G_REQUIRE(svg_out);
  return guard([&] {
    const auto rows = b4g::harness::parse_sweep_csv(csv);
    *svg_out = dup(b4g::harness::sweep_chart_svg(rows, title ? title : "Relative position window"));
  });
}

}  // extern "C"
