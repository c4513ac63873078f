#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "bert4gcn/bert4gcn.h"

namespace fs = std::filesystem;

namespace {

std::string fixture(const std::string& name) { return (fs::path(B4G_FIXTURES) / name).string(); }

std::string take(char* s) {
  std::string out = s ? s : "";
  b4g_string_free(s);
  return out;
}

struct Config {
  b4g_config* ptr = nullptr;
  Config() { REQUIRE(b4g_config_create(&ptr) == B4G_OK); }
  ~Config() { b4g_config_destroy(ptr); }
  void set(const char* k, const std::string& v) { REQUIRE(b4g_config_set(ptr, k, v.c_str()) == B4G_OK); }
};

}  // namespace

TEST_CASE("status names and errors") {
  CHECK(std::string(b4g_version()).size() > 0);
  CHECK(std::string(b4g_status_name(B4G_OK)) == "ok");
  CHECK(std::string(b4g_status_name(B4G_ERR_DIVERGENCE)) == "divergence");
  CHECK(b4g_config_create(nullptr) == B4G_ERR_NULL_ARGUMENT);
  CHECK(std::string(b4g_last_error()).size() > 0);
  b4g_string_free(nullptr);
  b4g_config_destroy(nullptr);
  b4g_dataset_destroy(nullptr);
  b4g_session_destroy(nullptr);
}

TEST_CASE("config through the C interface") {
  Config c;
  char* v = nullptr;
  REQUIRE(b4g_config_get(c.ptr, "alpha", &v) == B4G_OK);
  CHECK(take(v) == "0.25");
  CHECK(b4g_config_set(c.ptr, "alpha", "high") == B4G_ERR_CONFIG);
  CHECK(std::string(b4g_last_error()).find("alpha") != std::string::npos);
  CHECK(b4g_config_set(c.ptr, "nope", "1") == B4G_ERR_CONFIG);
  CHECK(b4g_config_load_file(c.ptr, "/nonexistent.cfg") == B4G_ERR_IO);
  char* h1 = nullptr;
  REQUIRE(b4g_config_hash(c.ptr, &h1) == B4G_OK);
  c.set("epochs", "5");
  char* h2 = nullptr;
  REQUIRE(b4g_config_hash(c.ptr, &h2) == B4G_OK);
  CHECK(take(h1) != take(h2));
  char* ser = nullptr;
  REQUIRE(b4g_config_serialize(c.ptr, &ser) == B4G_OK);
  CHECK(take(ser).find("epochs=5\n") != std::string::npos);
}

TEST_CASE("dataset loading") {
  b4g_dataset* d = nullptr;
  REQUIRE(b4g_dataset_load(fixture("semeval_small.xml").c_str(), "auto", "restaurant", 0, &d) == B4G_OK);
  CHECK(b4g_dataset_size(d) == 9);
  size_t counts[3];
  REQUIRE(b4g_dataset_label_counts(d, counts) == B4G_OK);
  CHECK(counts[B4G_LABEL_POSITIVE] == 4);
  CHECK(counts[B4G_LABEL_NEUTRAL] == 2);
  CHECK(counts[B4G_LABEL_NEGATIVE] == 3);
  b4g_instance_info info{};
  REQUIRE(b4g_dataset_instance(d, 0, &info) == B4G_OK);
  CHECK(info.aspect_start == 1);
  CHECK(std::string(info.sentence_id) == "s1");
  const char* tok = nullptr;
  REQUIRE(b4g_dataset_token(d, 0, 1, &tok) == B4G_OK);
  CHECK(std::string(tok) == "price");
  CHECK(b4g_dataset_instance(d, 99, &info) == B4G_ERR_INDEX);
  CHECK(b4g_dataset_token(d, 0, 99, &tok) == B4G_ERR_INDEX);
  b4g_dataset_destroy(d);

  b4g_dataset* bad = nullptr;
  CHECK(b4g_dataset_load(fixture("semeval_malformed.xml").c_str(), "auto", "custom", 0, &bad) == B4G_ERR_PARSE);
  CHECK(bad == nullptr);
  CHECK(b4g_dataset_load(fixture("semeval_midtoken.xml").c_str(), "auto", "laptop", 1, &bad) == B4G_ERR_ALIGNMENT);
  CHECK(b4g_dataset_load(fixture("twitter_bad_count.txt").c_str(), "twitter_lines", "twitter", 0, &bad) ==
        B4G_ERR_FORMAT);
  CHECK(b4g_dataset_load(fixture("twitter_small.txt").c_str(), "auto", "movies", 0, &bad) == B4G_ERR_CONFIG);
}

TEST_CASE("standalone graph and metric calls") {
  const int heads[] = {1, -1, 1};
  uint8_t adj[9];
  REQUIRE(b4g_to_adjacency(heads, 3, adj) == B4G_OK);
  const std::vector<uint8_t> expected{1, 1, 0, 1, 1, 1, 0, 1, 1};
  CHECK(std::vector<uint8_t>(adj, adj + 9) == expected);

  const double att[] = {0.1, 0.005, 0.3, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1};
  uint8_t out[9];
  REQUIRE(b4g_supplement(adj, att, 3, 0.25, 0.01, out) == B4G_OK);
  CHECK(out[1] == 0);
  CHECK(out[2] == 1);
  CHECK(b4g_supplement(adj, att, 3, 0.01, 0.25, out) == B4G_ERR_CONFIG);

  int idx = -1;
  REQUIRE(b4g_position_index(0, 9, 3, &idx) == B4G_OK);
  CHECK(idx == 6);
  CHECK(b4g_position_index(0, 1, -1, &idx) == B4G_ERR_VALUE);

  int folds[10];
  REQUIRE(b4g_make_folds(10, 5, 1, folds) == B4G_OK);
  std::vector<int> sizes(5, 0);
  for (int f : folds) sizes[static_cast<std::size_t>(f)]++;
  CHECK(sizes == std::vector<int>(5, 2));
  CHECK(b4g_make_folds(3, 5, 1, folds) == B4G_ERR_CONFIG);

  const int pred[] = {0, 2, 2}, gold[] = {0, 1, 2};
  double acc = 0, f1 = 0;
  REQUIRE(b4g_evaluate_predictions(pred, gold, 3, &acc, &f1) == B4G_OK);
  CHECK(acc == doctest::Approx(2.0 / 3.0));
  CHECK(f1 == doctest::Approx((1.0 + 0.0 + 2.0 / 3.0) / 3.0));
  CHECK(b4g_evaluate_predictions(pred, gold, 0, &acc, &f1) == B4G_ERR_VALUE);
}

TEST_CASE("session end to end") {
  const auto work = fs::temp_directory_path() / "b4g-test-capi";
  fs::remove_all(work);
  Config c;
  c.set("dataset", "twitter");
  c.set("train_path", fixture("twitter_small.txt"));
  c.set("test_path", fixture("twitter_small.txt"));
  c.set("parser", "cmd:python3 " + fixture("chain_parser.py"));
  c.set("cache_dir", (work / "cache").string());
  c.set("encoder", "stub:hidden=8,layers=2,heads=2");
  c.set("finetune_encoder", "false");
  c.set("layers", "1,2");
  c.set("word_dim", "8");
  c.set("hidden", "4");
  c.set("epochs", "1");
  c.set("folds", "2");

  b4g_session* s = nullptr;
  REQUIRE(b4g_session_create(c.ptr, &s) == B4G_OK);
  char* text = nullptr;
  CHECK(b4g_session_stats_tsv(s, &text) == B4G_ERR_CONFIG);  // not prepared
  REQUIRE(b4g_session_prepare(s) == B4G_OK);
  REQUIRE(b4g_session_stats_tsv(s, &text) == B4G_OK);
  CHECK(take(text).find("twitter\ttrain\t2\t3\t2\t7") != std::string::npos);
  REQUIRE(b4g_session_metadata_json(s, &text) == B4G_OK);
  CHECK(take(text).find("config_hash") != std::string::npos);
  REQUIRE(b4g_session_graph_diff(s, "test", 0, &text) == B4G_OK);
  CHECK(take(text).rfind("layer\t", 0) == 0);

  b4g_fold_metrics fm{};
  REQUIRE(b4g_session_train_fold(s, 1, (work / "fold").string().c_str(), &fm) == B4G_OK);
  CHECK(fm.fold == 1);
  CHECK(fs::exists(work / "fold" / "fold1.ckpt"));
  double acc = -1, f1 = -1;
  REQUIRE(b4g_session_evaluate(s, (work / "fold" / "fold1.ckpt").string().c_str(), "test", &acc, &f1) == B4G_OK);
  CHECK(acc == fm.test_accuracy);
  CHECK(b4g_session_evaluate(s, (work / "missing.ckpt").string().c_str(), "test", &acc, &f1) == B4G_ERR_IO);

  b4g_run_summary sum{};
  REQUIRE(b4g_session_cross_validate(s, (work / "cv").string().c_str(), 0, &sum) == B4G_OK);
  CHECK(sum.folds == 2);

  const int windows[] = {1};
  char* csv = nullptr;
  REQUIRE(b4g_session_window_sweep(s, windows, 1, (work / "sweep").string().c_str(), &csv) == B4G_OK);
  const std::string csv_text = take(csv);
  CHECK(csv_text.rfind("window,accuracy,macro_f1,config_hash\n1,", 0) == 0);

  char* svg = nullptr;
  REQUIRE(b4g_render_sweep_chart(csv_text.c_str(), "t", &svg) == B4G_OK);
  CHECK(take(svg).rfind("<svg", 0) == 0);
  CHECK(b4g_render_sweep_chart("garbage", "t", &svg) == B4G_ERR_FORMAT);
  b4g_session_destroy(s);
}
