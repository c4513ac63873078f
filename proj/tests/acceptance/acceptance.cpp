// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <array>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "common/error.hpp"
#include "corpus/corpus.hpp"
#include "graphsup/graphsup.hpp"
#include "harness/harness.hpp"
#include "model/model.hpp"
#include "oracles/oracles.hpp"
#include "unit/helpers.hpp"
#include "unit/scenario.hpp"

using namespace b4g;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(const char* name, const std::function<Outcome()>& check) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!o.pass) ++failures;
  std::printf("%s  %-28s %7.2fs  %s\n", o.pass ? "PASS" : "FAIL", name, secs, o.detail.c_str());
  std::fflush(stdout);
}

double elapsed(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Outcome graph_supplementation() {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(1001);
  std::size_t mismatches = 0, monotone_violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(10);
    const auto N = static_cast<Eigen::Index>(n);
    const auto a = depgraph::to_adjacency(testing::random_tree(rng, n), n).adjacency;
    // Draw attention on a grid so that ties with the thresholds occur.
    ag::Matrix att(N, N);
    for (Eigen::Index i = 0; i < N; ++i)
      for (Eigen::Index j = 0; j < N; ++j) att(i, j) = static_cast<double>(rng.below(41)) / 100.0;
    const double beta = static_cast<double>(rng.below(10)) / 100.0;
    const double alpha = beta + static_cast<double>(1 + rng.below(30)) / 100.0;
    const auto got = graphsup::supplement(a, att, alpha, beta);
    if (testing::to_bits(got) != oracle::supplement(testing::to_bits(a), testing::to_mat(att), alpha, beta))
      ++mismatches;
    const auto higher_alpha = graphsup::supplement(a, att, std::min(1.0, alpha + 0.05), beta);
    const auto higher_beta = graphsup::supplement(a, att, alpha, std::min(alpha - 0.005, beta + 0.02));
    if (!(higher_alpha.cast<int>().array() <= got.cast<int>().array()).all()) ++monotone_violations;
    if (!(higher_beta.cast<int>().array() <= got.cast<int>().array()).all()) ++monotone_violations;
  }
  const double secs = elapsed(start);
  return {mismatches == 0 && monotone_violations == 0 && secs < 10.0,
          "1000 instances, " + std::to_string(mismatches) + " oracle mismatches, " +
              std::to_string(monotone_violations) + " monotonicity violations"};
}

Outcome gradient_check() {
  const auto start = std::chrono::steady_clock::now();
  const auto encoder = plmfeat::make_encoder("stub:hidden=8,layers=2,heads=2,seed=17");
  encoder->transformer().set_trainable(false);
  corpus::Instance inst;
  inst.tokens = {"the", "battery", "life", "was", "really", "short"};
  inst.aspect_start = 1;
  inst.aspect_len = 2;
  inst.label = corpus::Label::negative;
  const auto features = plmfeat::encode(*encoder, inst, {1, 2});
  const auto graph = depgraph::to_adjacency({1, 3, 1, depgraph::kRoot, 5, 3}, 6);
  Rng rng(23);
  const ag::Var emb = ag::constant(testing::random_matrix(rng, 6, 5));

  double worst = 0;
  std::size_t checked = 0;
  for (int flags = 0; flags < 4; ++flags) {
    auto config = testing::small_config(flags & 1, flags & 2);
    config.encoder_dim = encoder->d_model();
    // Low thresholds so that supplementing edits the graph.
    config.alpha = 0.2;
    config.beta = 0.1;
    auto params = model::ModelParams::initialize(config, 100 + static_cast<std::uint64_t>(flags));
    const auto theta = params.trainable();
    const int label = static_cast<int>(inst.label);
    auto objective = [&] {
      const auto t = model::forward(params, emb, features, graph, inst.aspect_start, inst.aspect_len);
      const ag::Var logits[] = {t.logits};
      return model::loss(logits, std::span<const int>(&label, 1), theta, 1e-2);
    };
    params.zero_grad();
    ag::backward(objective());
    for (const auto& [name, var] : params.named_parameters()) {
      ag::Var v = var;
      const bool used = std::any_of(theta.begin(), theta.end(), [&](const ag::Var& t) { return t.node() == v.node(); });
      if (!used) continue;
      const ag::Matrix analytic = v.grad().size() ? v.grad() : ag::Matrix::Zero(v.rows(), v.cols());
      auto& m = v.mutable_value();
      for (Eigen::Index i = 0; i < m.size(); ++i) {
        const double keep = m.data()[i];
        m.data()[i] = keep + 1e-5;
        const double up = objective().scalar();
        m.data()[i] = keep - 1e-5;
        const double down = objective().scalar();
        m.data()[i] = keep;
        const double numeric = (up - down) / 2e-5;
        const double a = analytic.data()[i];
        worst = std::max(worst, std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6}));
        ++checked;
      }
    }
  }
  const double secs = elapsed(start);
  return {worst < 1e-4 && secs < 60.0,
          std::to_string(checked) + " entries over 4 flag settings, worst relative error " + fmt("%.2e", worst)};
}

Outcome equation_oracles() {
  Rng rng(3003);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(12);
    const auto N = static_cast<Eigen::Index>(n);
    const int w = static_cast<int>(rng.below(6));
    const Eigen::Index de = 2 + static_cast<Eigen::Index>(rng.below(6)), dp = 2 + static_cast<Eigen::Index>(rng.below(6));

    const ag::Matrix g = testing::random_matrix(rng, N, de), W = testing::random_matrix(rng, de, dp),
                     prev = testing::random_matrix(rng, N, dp);
    const ag::Matrix r = model::fuse(ag::constant(g), ag::constant(W), ag::constant(prev)).value();
    worst = std::max(worst, testing::max_abs_diff(oracle::fuse(testing::to_mat(g), testing::to_mat(W), testing::to_mat(prev)), r));

    const auto adj = graphsup::supplement(depgraph::to_adjacency(testing::random_tree(rng, n), n).adjacency,
                                          testing::random_matrix(rng, N, N, 0.0, 0.4), 0.25, 0.01);
    const ag::Matrix gw = testing::random_matrix(rng, dp, dp), gb = testing::random_matrix(rng, 1, dp),
                     pos = testing::random_matrix(rng, 2 * w + 1, dp);
    const std::vector<double> bvec(gb.data(), gb.data() + gb.size());
    const auto pm = testing::to_mat(pos);
    const bool use_pos = rng.below(2) == 1;
    const ag::Matrix o = model::gcn_layer(ag::constant(r), adj, ag::constant(gw), ag::constant(gb),
                                          use_pos ? ag::constant(pos) : ag::Var(), w)
                             .value();
    worst = std::max(worst, testing::max_abs_diff(oracle::gcn_layer(testing::to_mat(r), testing::to_bits(adj),
                                                                    testing::to_mat(gw), bvec, use_pos ? &pm : nullptr, w),
                                                  o));

    const std::size_t start = rng.below(n), len = 1 + rng.below(n - start);
    const ag::Matrix pooled = model::aspect_pool(ag::constant(o), start, len).value();
    const auto opool = oracle::aspect_pool(testing::to_mat(o), start, len);
    for (Eigen::Index k = 0; k < dp; ++k) worst = std::max(worst, std::abs(pooled(0, k) - opool[static_cast<std::size_t>(k)]));

    model::ModelConfig cfg = testing::small_config();
    cfg.hidden = static_cast<int>(dp);
    model::ModelParams p(cfg);
    const ag::Matrix pooled2 = testing::random_matrix(rng, 1, 2 * dp);
    p.cls_w = ag::constant(testing::random_matrix(rng, 2 * dp, 3));
    p.cls_b = ag::constant(testing::random_matrix(rng, 1, 3));
    const auto prob = model::classify(ag::constant(pooled2), p);
    const auto oprob = oracle::classify(std::vector<double>(pooled2.data(), pooled2.data() + pooled2.size()),
                                        testing::to_mat(p.cls_w.value()),
                                        std::vector<double>(p.cls_b.value().data(), p.cls_b.value().data() + 3));
    for (Eigen::Index c = 0; c < 3; ++c) worst = std::max(worst, std::abs(prob(c) - oprob[static_cast<std::size_t>(c)]));

    const std::size_t batch = 1 + rng.below(5);
    std::vector<ag::Var> logits;
    std::vector<int> labels;
    std::vector<std::vector<double>> ologits;
    for (std::size_t b = 0; b < batch; ++b) {
      const ag::Matrix z = testing::random_matrix(rng, 1, 3, -8, 8);
      logits.push_back(ag::constant(z));
      labels.push_back(static_cast<int>(rng.below(3)));
      ologits.emplace_back(z.data(), z.data() + 3);
    }
    const ag::Matrix t1 = testing::random_matrix(rng, 3, 4), t2 = testing::random_matrix(rng, 1, 5);
    const ag::Var theta[] = {ag::parameter(t1), ag::parameter(t2)};
    const auto o1 = testing::to_mat(t1), o2 = testing::to_mat(t2);
    const double lambda = rng.uniform(0.0, 0.1);
    worst = std::max(worst, std::abs(model::loss(logits, labels, theta, lambda).scalar() -
                                     oracle::loss(ologits, labels, {&o1, &o2}, lambda)));
  }
  return {worst < 1e-6, "fuse, gcn_layer, aspect_pool, classify, loss on 100 instances, max abs diff " + fmt("%.2e", worst)};
}

Outcome ablation_wiring() {
  Rng rng(4004);
  std::size_t graph_mismatch = 0, position_leaks = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(10);
    auto s = testing::random_scenario(rng, testing::small_config(true, false), n);
    auto p = model::ModelParams::initialize(s.config, static_cast<std::uint64_t>(trial));
    const auto t = model::forward(p, s.embeddings, s.features, s.graph, s.aspect_start, s.aspect_len);
    for (const auto& a : t.graphs.per_layer)
      if (a != s.graph.adjacency) ++graph_mismatch;

    auto s2 = testing::random_scenario(rng, testing::small_config(false, trial % 2 == 0), n);
    auto q = model::ModelParams::initialize(s2.config, static_cast<std::uint64_t>(trial));
    const ag::Matrix before =
        model::forward(q, s2.embeddings, s2.features, s2.graph, s2.aspect_start, s2.aspect_len).logits.value();
    q.position.mutable_value() = testing::random_matrix(rng, q.position.rows(), q.position.cols(), -10, 10);
    const ag::Matrix after =
        model::forward(q, s2.embeddings, s2.features, s2.graph, s2.aspect_start, s2.aspect_len).logits.value();
    if (before != after) ++position_leaks;
  }
  return {graph_mismatch == 0 && position_leaks == 0,
          "100 instances each, " + std::to_string(graph_mismatch) + " graph mismatches, " +
              std::to_string(position_leaks) + " position-table leaks"};
}

Outcome position_table() {
  std::size_t bad = 0;
  auto expect = [&](int i, int j, int w, int want) {
    if (graphsup::position_index(i, j, w) != want) ++bad;
  };
  for (int w = 0; w <= 8; ++w) {
    for (int i = 0; i < 20; ++i) {
      expect(i, i, w, w);                      // zero offset
      expect(i, i + w, w, 2 * w);              // +w exactly
      expect(i + w, i, w, 0);                  // -w exactly
      expect(i, i + w + 1, w, 2 * w);          // saturate above
      expect(i + w + 1, i, w, 0);              // saturate below
      expect(i, i + 100, w, 2 * w);
      expect(i + 100, i, w, 0);
      for (int j = 0; j < 20; ++j) {
        const int idx = graphsup::position_index(i, j, w);
        if (idx < 0 || idx > 2 * w) ++bad;
        for (int shift : {1, 5, 37})
          if (graphsup::position_index(i + shift, j + shift, w) != idx) ++bad;
        if (idx != oracle::position_index(i, j, w)) ++bad;
      }
    }
    if (graphsup::clip(-w - 1, w) != -w || graphsup::clip(w + 1, w) != w || graphsup::clip(0, w) != 0) ++bad;
  }
  return {bad == 0, "windows 0..8: zero offset, +-w saturation and translation invariance, " +
                        std::to_string(bad) + " failures"};
}

struct OfficialFile {
  const char* name;
  corpus::DatasetId dataset;
  corpus::FileFormat format;
  std::array<std::size_t, 3> counts;  // positive, neutral, negative
};

Outcome dataset_loaders() {
  std::vector<std::string> problems;
  auto check = [&](const std::string& what, const corpus::LabelCounts& got, std::array<std::size_t, 3> want) {
    if (got.by_label != want)
      problems.push_back(what + " gave " + std::to_string(got.by_label[0]) + "/" + std::to_string(got.by_label[1]) +
                         "/" + std::to_string(got.by_label[2]));
  };
  check("semeval_small.xml", corpus::count_labels(corpus::load_semeval(testing::fixture("semeval_small.xml"))), {4, 2, 3});
  check("semeval_conflict.xml", corpus::count_labels(corpus::load_semeval(testing::fixture("semeval_conflict.xml"))),
        {1, 0, 0});
  check("twitter_small.txt", corpus::count_labels(corpus::load_twitter(testing::fixture("twitter_small.txt"))), {2, 3, 2});

  std::string official = "official data not present (set B4G_OFFICIAL_DATA)";
  if (const char* dir = std::getenv("B4G_OFFICIAL_DATA"); dir && *dir) {
    const OfficialFile files[] = {
        {"twitter_train.raw", corpus::DatasetId::twitter, corpus::FileFormat::twitter_lines, {1561, 3127, 1560}},
        {"twitter_test.raw", corpus::DatasetId::twitter, corpus::FileFormat::twitter_lines, {173, 346, 173}},
        {"laptop_train.xml", corpus::DatasetId::laptop, corpus::FileFormat::semeval_xml, {994, 464, 870}},
        {"laptop_test.xml", corpus::DatasetId::laptop, corpus::FileFormat::semeval_xml, {341, 169, 128}},
        {"restaurant_train.xml", corpus::DatasetId::restaurant, corpus::FileFormat::semeval_xml, {2164, 637, 807}},
        {"restaurant_test.xml", corpus::DatasetId::restaurant, corpus::FileFormat::semeval_xml, {728, 196, 196}},
    };
    int found = 0;
    for (const auto& f : files) {
      const fs::path path = fs::path(dir) / f.name;
      if (!fs::exists(path)) continue;
      ++found;
      check(f.name, corpus::count_labels(corpus::load_dataset(path, f.format, f.dataset)), f.counts);
    }
    official = std::to_string(found) + " of 6 official files checked";
  }
  std::string detail = "fixtures match hand counts; " + official;
  for (const auto& p : problems) detail += "; " + p;
  return {problems.empty(), detail};
}

Outcome overfit_sanity() {
  const auto start = std::chrono::steady_clock::now();
  const auto scratch = fs::temp_directory_path() / "b4g-acceptance-overfit";
  fs::remove_all(scratch);
  harness::RunConfig config;
  config.encoder = "stub:hidden=16,layers=2,heads=2";
  config.finetune_encoder = false;
  config.layers = {1, 2};
  config.hidden = 16;
  config.word_dim = 16;
  config.dropout = 0.0;
  config.epochs = 200;
  config.patience = 0;
  config.batch_size = 8;
  config.lr_head = 1e-2;
  config.lambda = 1e-5;
  config.cache_dir = (scratch / "cache").string();
  Rng rng(5005);
  auto data = testing::synthetic_data(rng, 32);
  harness::Session session(config);
  session.prepare_instances(data.instances, {}, data.heads, {}, plmfeat::make_encoder(config.encoder),
                            corpus::WordVectorTable(config.word_dim, corpus::OovPolicy::uniform_init, 7));
  std::vector<const harness::Prepared*> items;
  for (const auto& p : session.train()) items.push_back(&p);
  const auto result = session.fit(0, items, items, {}, std::nullopt, true);
  double train_acc = 0;
  int first_epoch = 0;
  for (const auto& e : result.history) {
    train_acc = std::max(train_acc, e.train_accuracy);
    if (first_epoch == 0 && e.train_accuracy >= 0.95) first_epoch = e.epoch;
  }
  const double secs = elapsed(start);
  return {train_acc >= 0.95 && secs < 120.0,
          "32 instances, d_h=16, best train accuracy " + fmt("%.3f", train_acc) + " (first >= 0.95 at epoch " +
              std::to_string(first_epoch) + ")"};
}

Outcome metric_oracle() {
  Rng rng(6006);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(200);
    std::vector<int> pred(n), gold(n);
    // Skew some vectors so that classes go missing.
    const std::size_t classes = 1 + rng.below(3);
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = static_cast<int>(rng.below(3));
      gold[i] = static_cast<int>(rng.below(classes));
    }
    const auto m = harness::compute_metrics(pred, gold);
    const auto o = oracle::metrics(pred, gold);
    if (m.accuracy != o.accuracy || m.macro_f1 != o.macro_f1) ++mismatches;
  }
  return {mismatches == 0, "1000 random vectors, " + std::to_string(mismatches) + " inexact results"};
}

Outcome stretch_documented() {
  const fs::path script = fs::path(B4G_SOURCE_DIR) / "tools" / "reproduce_full_scale.sh";
  const bool ok = fs::exists(script) &&
                  (fs::status(script).permissions() & fs::perms::owner_exec) != fs::perms::none;
  return {ok, "offline GPU reproduction, not a desk-scale gate: tools/reproduce_full_scale.sh"};
}

}  // namespace

int main() {
  set_log_level(LogLevel::quiet);
  report("graph-supplementation", graph_supplementation);
  report("gradient-check", gradient_check);
  report("equation-oracles", equation_oracles);
  report("ablation-wiring", ablation_wiring);
  report("position-index-table", position_table);
  report("dataset-loaders", dataset_loaders);
  report("overfit-sanity", overfit_sanity);
  report("metric-oracle", metric_oracle);
  report("stretch-reproduction", stretch_documented);
  std::printf("%s: %d failing criteria\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
