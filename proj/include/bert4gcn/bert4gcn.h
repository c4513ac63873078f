#ifndef BERT4GCN_BERT4GCN_H
#define BERT4GCN_BERT4GCN_H

/*
 * C interface to the BERT4GCN aspect sentiment library.
 *
 * Every fallible call returns a b4g_status. On failure, b4g_last_error()
 * returns a message for the calling thread that stays valid until that
 * thread's next failing call. Strings returned through `char**` are owned by
 * the caller and must be released with b4g_string_free().
 */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define B4G_API __declspec(dllexport)
#else
#define B4G_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum b4g_status {
  B4G_OK = 0,
  B4G_ERR_PARSE = 1,
  B4G_ERR_ALIGNMENT = 2,
  B4G_ERR_FORMAT = 3,
  B4G_ERR_VALUE = 4,
  B4G_ERR_CONFIG = 5,
  B4G_ERR_ENVIRONMENT = 6,
  B4G_ERR_SHAPE = 7,
  B4G_ERR_INDEX = 8,
  B4G_ERR_TRUNCATION = 9,
  B4G_ERR_DIVERGENCE = 10,
  B4G_ERR_IO = 11,
  B4G_ERR_INTERNAL = 12,
  B4G_ERR_NULL_ARGUMENT = 100
} b4g_status;

/* Labels use the classifier order. */
enum { B4G_LABEL_POSITIVE = 0, B4G_LABEL_NEUTRAL = 1, B4G_LABEL_NEGATIVE = 2 };

/* Log verbosity on stderr. */
enum { B4G_LOG_QUIET = 0, B4G_LOG_WARNING = 1, B4G_LOG_INFO = 2 };

B4G_API const char* b4g_version(void);
B4G_API const char* b4g_last_error(void);
B4G_API const char* b4g_status_name(b4g_status status);
B4G_API void b4g_string_free(char* text);
B4G_API void b4g_set_log_level(int level);

/* Run configuration: built-in defaults, then files, then key=value sets. */
typedef struct b4g_config b4g_config;

B4G_API b4g_status b4g_config_create(b4g_config** out);
B4G_API void b4g_config_destroy(b4g_config* config);
B4G_API b4g_status b4g_config_load_file(b4g_config* config, const char* path);
B4G_API b4g_status b4g_config_set(b4g_config* config, const char* key, const char* value);
B4G_API b4g_status b4g_config_get(const b4g_config* config, const char* key, char** out);
/* Sorted key=value lines. */
B4G_API b4g_status b4g_config_serialize(const b4g_config* config, char** out);
B4G_API b4g_status b4g_config_hash(const b4g_config* config, char** out);

/* A loaded split. */
typedef struct b4g_dataset b4g_dataset;

typedef struct b4g_instance_info {
  size_t num_tokens;
  size_t aspect_start;
  size_t aspect_len;
  int label;
  const char* sentence_id; /* borrowed from the dataset */
} b4g_instance_info;

/* format: "auto", "semeval_xml" or "twitter_lines".
 * dataset: "twitter", "laptop", "restaurant" or "custom". */
B4G_API b4g_status b4g_dataset_load(const char* path, const char* format, const char* dataset, int strict_alignment,
                                    b4g_dataset** out);
B4G_API void b4g_dataset_destroy(b4g_dataset* dataset);
B4G_API size_t b4g_dataset_size(const b4g_dataset* dataset);
B4G_API b4g_status b4g_dataset_instance(const b4g_dataset* dataset, size_t index, b4g_instance_info* out);
/* Borrowed token text, valid for the dataset's lifetime. */
B4G_API b4g_status b4g_dataset_token(const b4g_dataset* dataset, size_t index, size_t token, const char** out);
/* counts[0..2] in label order. */
B4G_API b4g_status b4g_dataset_label_counts(const b4g_dataset* dataset, size_t counts[3]);

/* Shuffled k-fold partition; assignments has `count` slots. */
B4G_API b4g_status b4g_make_folds(size_t count, int k, uint64_t seed, int* assignments);
/* heads: 0-based, -1 for the root. adjacency: n*n row-major output. */
B4G_API b4g_status b4g_to_adjacency(const int* heads, size_t n, uint8_t* adjacency);
/* Attention-thresholded edge editing of an n*n row-major adjacency. */
B4G_API b4g_status b4g_supplement(const uint8_t* adjacency, const double* attention, size_t n, double alpha,
                                  double beta, uint8_t* out);
B4G_API b4g_status b4g_position_index(int i, int j, int window, int* out);
B4G_API b4g_status b4g_evaluate_predictions(const int* predictions, const int* labels, size_t n, double* accuracy,
                                            double* macro_f1);

/* A prepared run: data, parses, word vectors and encoder. */
typedef struct b4g_session b4g_session;

typedef struct b4g_fold_metrics {
  int fold;
  int best_epoch;
  double val_accuracy;
  double val_macro_f1;
  double test_accuracy;
  double test_macro_f1;
} b4g_fold_metrics;

typedef struct b4g_run_summary {
  size_t folds;
  double mean_val_accuracy;
  double mean_test_accuracy;
  double mean_test_macro_f1;
} b4g_run_summary;

B4G_API b4g_status b4g_session_create(const b4g_config* config, b4g_session** out);
B4G_API void b4g_session_destroy(b4g_session* session);
B4G_API b4g_status b4g_session_prepare(b4g_session* session);
B4G_API b4g_status b4g_session_stats_tsv(b4g_session* session, char** out);
B4G_API b4g_status b4g_session_metadata_json(b4g_session* session, char** out);
/* split: "train" or "test". */
B4G_API b4g_status b4g_session_graph_diff(b4g_session* session, const char* split, size_t index, char** out);
/* out_dir may be NULL to skip checkpoint and log files. */
B4G_API b4g_status b4g_session_train_fold(b4g_session* session, int fold, const char* out_dir, b4g_fold_metrics* out);
/* With ablation set, runs the four ablation rows and reports the full model. */
B4G_API b4g_status b4g_session_cross_validate(b4g_session* session, const char* out_dir, int ablation,
                                              b4g_run_summary* out);
/* csv_out (optional) receives the sweep CSV. */
B4G_API b4g_status b4g_session_window_sweep(b4g_session* session, const int* windows, size_t count,
                                            const char* out_dir, char** csv_out);
B4G_API b4g_status b4g_session_evaluate(b4g_session* session, const char* checkpoint, const char* split,
                                        double* accuracy, double* macro_f1);

/* Renders a sweep CSV (window,accuracy,macro_f1,config_hash) as an SVG line chart. */
B4G_API b4g_status b4g_render_sweep_chart(const char* csv, const char* title, char** svg_out);

#ifdef __cplusplus
}
#endif

#endif
