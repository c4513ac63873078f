#include <doctest.h>

#include <fstream>

#include "common/error.hpp"
#include "harness/harness.hpp"
#include "unit/helpers.hpp"
#include "unit/scenario.hpp"

using namespace b4g;
using namespace b4g::harness;
namespace fs = std::filesystem;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::internal;
}

RunConfig tiny_config(const fs::path& scratch) {
  RunConfig c;
  c.encoder = "stub:hidden=8,layers=2,heads=2";
  c.finetune_encoder = false;
  c.layers = {1, 2};
  c.hidden = 4;
  c.word_dim = 8;
  c.dropout = 0.1;
  c.epochs = 3;
  c.patience = 0;
  c.batch_size = 8;
  c.folds = 2;
  c.lr_head = 1e-2;
  c.cache_dir = (scratch / "cache").string();
  c.output_dir = (scratch / "runs").string();
  return c;
}

std::unique_ptr<Session> tiny_session(const RunConfig& config, std::size_t n_train, std::size_t n_test,
                                      std::uint64_t data_seed = 3) {
  Rng rng(data_seed);
  auto tr = testing::synthetic_data(rng, n_train);
  auto te = testing::synthetic_data(rng, n_test);
  auto s = std::make_unique<Session>(config);
  s->prepare_instances(tr.instances, te.instances, tr.heads, te.heads, plmfeat::make_encoder(config.encoder),
                       corpus::WordVectorTable(config.word_dim, corpus::OovPolicy::uniform_init, 11));
  return s;
}

std::vector<const Prepared*> ptrs(const std::vector<Prepared>& items) {
  std::vector<const Prepared*> out;
  for (const auto& p : items) out.push_back(&p);
  return out;
}

std::size_t count_lines(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

}  // namespace

TEST_CASE("config keys set, get and serialize") {
  RunConfig c;
  CHECK(c.get("alpha") == "0.25");
  CHECK(c.get("layers") == "1,5,9,12");
  c.set("layers", "2,4");
  CHECK(c.layers == std::vector<int>{2, 4});
  c.set("finetune_encoder", "false");
  CHECK_FALSE(c.finetune_encoder);
  c.set("seed", "7");
  CHECK(c.seed == 7u);
  CHECK(kind_of([&] { c.set("no_such_key", "1"); }) == ErrorKind::config);
  try {
    c.set("epochs", "many");
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::config);
    CHECK(std::string(e.what()).find("epochs") != std::string::npos);
  }
  CHECK(kind_of([&] { c.apply("alpha"); }) == ErrorKind::config);
  c.apply("alpha=0.3");
  CHECK(c.alpha == 0.3);

  const auto keys = RunConfig::keys();
  CHECK(std::is_sorted(keys.begin(), keys.end()));
  const auto lines = split(c.serialize(), '\n');
  CHECK(lines.front().rfind(keys.front() + "=", 0) == 0);

  RunConfig copy;
  for (const auto& line : lines)
    if (!line.empty()) copy.apply(line);
  CHECK(copy.serialize() == c.serialize());
}

TEST_CASE("config files layer in order") {
  const auto dir = testing::scratch_dir("config-file");
  std::ofstream(dir / "a.cfg") << "# base\nepochs = 5\nalpha = 0.4  # inline\n\n";
  std::ofstream(dir / "b.cfg") << "epochs=6\n";
  std::ofstream(dir / "bad.cfg") << "epochs 6\n";
  RunConfig c;
  c.load_file(dir / "a.cfg");
  c.load_file(dir / "b.cfg");
  CHECK(c.epochs == 6);
  CHECK(c.alpha == 0.4);
  CHECK(kind_of([&] { c.load_file(dir / "bad.cfg"); }) == ErrorKind::config);
  CHECK(kind_of([&] { c.load_file(dir / "missing.cfg"); }) == ErrorKind::io);
}

TEST_CASE("config hash ignores output locations only") {
  RunConfig a, b;
  b.output_dir = "elsewhere";
  b.cache_dir = "other-cache";
  CHECK(a.hash() == b.hash());
  CHECK(a.hash().size() == 16);
  b.epochs = 31;
  CHECK(a.hash() != b.hash());
}

TEST_CASE("window defaults per dataset") {
  RunConfig c;
  c.dataset = "twitter";
  CHECK(c.resolved_window() == 2);
  c.dataset = "laptop";
  CHECK(c.resolved_window() == 3);
  c.dataset = "restaurant";
  CHECK(c.resolved_window() == 5);
  c.window = 1;
  CHECK(c.resolved_window() == 1);
  c.dataset = "books";
  CHECK(kind_of([&] { c.validate(); }) == ErrorKind::config);
}

TEST_CASE("config validation") {
  RunConfig c;
  c.folds = 1;
  CHECK(kind_of([&] { c.validate(); }) == ErrorKind::config);
  c = RunConfig{};
  c.alpha = 0.005;
  CHECK(kind_of([&] { c.validate(); }) == ErrorKind::config);
  c = RunConfig{};
  c.dropout = 1.0;
  CHECK(kind_of([&] { c.validate(); }) == ErrorKind::config);
}

TEST_CASE("linear schedule") {
  LinearSchedule s(1.0, 10, 0.1);
  CHECK(s.warmup_steps() == 1);
  CHECK(s.at(0) == 0.0);
  CHECK(s.at(1) == 1.0);
  CHECK(s.at(5) == doctest::Approx(5.0 / 9.0));
  CHECK(s.at(9) == doctest::Approx(1.0 / 9.0));
  CHECK(s.at(10) == 0.0);
  CHECK(s.at(50) == 0.0);
  LinearSchedule flat(2.0, 4, 0.0);
  CHECK(flat.at(0) == 2.0);
  CHECK(flat.at(2) == 1.0);
  LinearSchedule ramp(1.0, 4, 1.0);
  CHECK(ramp.at(2) == 0.5);
  CHECK(LinearSchedule(1.0, 0, 0.1).at(0) == 0.0);
}

TEST_CASE("adam updates with bias correction") {
  ag::Var x = ag::parameter(ag::Matrix::Constant(1, 2, 1.0));
  Adam adam({{{x}, LinearSchedule(0.1, 100, 0.0)}});
  ag::backward(ag::sum_squares(x));  // grad 2
  adam.step();
  CHECK(adam.steps_taken() == 1);
  CHECK(x.value()(0, 0) == doctest::Approx(1.0 - 0.1 * 2.0 / (2.0 + 1e-8)).epsilon(1e-14));

  ag::Var y = ag::parameter(ag::Matrix::Constant(1, 1, 1.0));
  Adam warm({{{y}, LinearSchedule(0.1, 10, 0.5)}});
  ag::backward(ag::sum_squares(y));
  warm.step();
  CHECK(y.value()(0, 0) == 1.0);  // first step at learning rate 0
  CHECK(warm.current_lr(0) == doctest::Approx(0.02));

  ag::Var untouched = ag::parameter(ag::Matrix::Constant(1, 1, 3.0));
  Adam skip({{{untouched}, LinearSchedule(0.1, 10, 0.0)}});
  skip.step();
  CHECK(untouched.value()(0, 0) == 3.0);
}

TEST_CASE("metrics examples") {
  const auto perfect = compute_metrics({0, 1, 2, 2}, {0, 1, 2, 2});
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.macro_f1 == 1.0);

  std::vector<int> pred, gold;
  for (int c = 0; c < 3; ++c)
    for (int k = 0; k < 5; ++k) {
      gold.push_back(c);
      pred.push_back(c == 0 ? 0 : 2);
    }
  const auto m = compute_metrics(pred, gold);
  CHECK(m.accuracy == doctest::Approx(2.0 / 3.0));
  CHECK(m.macro_f1 == doctest::Approx((1.0 + 0.0 + 2.0 / 3.0) / 3.0));
  CHECK(m.confusion[1][2] == 5);
  CHECK(m.total == 15);

  const auto all_wrong = compute_metrics({1, 1}, {0, 0});
  CHECK(all_wrong.accuracy == 0.0);
  CHECK(all_wrong.macro_f1 == 0.0);

  CHECK(kind_of([] { compute_metrics({}, {}); }) == ErrorKind::value);
  CHECK(kind_of([] { compute_metrics({0}, {0, 1}); }) == ErrorKind::value);
  CHECK(kind_of([] { compute_metrics({3}, {0}); }) == ErrorKind::value);
}

TEST_CASE("metrics match the oracle") {
  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(60);
    std::vector<int> p(n), g(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = static_cast<int>(rng.below(3));
      g[i] = static_cast<int>(rng.below(3));
    }
    const auto m = compute_metrics(p, g);
    const auto o = oracle::metrics(p, g);
    CHECK(m.accuracy == o.accuracy);
    CHECK(m.macro_f1 == o.macro_f1);
  }
}

TEST_CASE("two-fold cross validation writes its artifacts") {
  const auto dir = testing::scratch_dir("cv");
  const auto config = tiny_config(dir);
  auto session = tiny_session(config, 40, 12);
  const auto out = dir / "run";
  const auto m = session->run_cv(out);
  REQUIRE(m.folds.size() == 2);
  CHECK(m.config_hash == config.hash());
  for (const auto& f : m.folds) {
    CHECK(f.history.size() == 3);
    CHECK(f.best_epoch >= 0);
    CHECK(f.best_epoch <= 3);
    CHECK(fs::exists(f.checkpoint));
    CHECK(f.test_accuracy >= 0.0);
  }
  CHECK(m.mean_test_accuracy == doctest::Approx((m.folds[0].test_accuracy + m.folds[1].test_accuracy) / 2));
  CHECK(count_lines(out / "epochs.jsonl") == 6);
  CHECK(count_lines(out / "folds.jsonl") == 3);
  CHECK(fs::exists(out / "summary.json"));
  CHECK(fs::exists(out / "metadata.json"));
  const std::string tsv = read_file(out / "metrics.tsv");
  CHECK(tsv.find("config_hash") != std::string::npos);
  CHECK(tsv.find(m.config_hash) != std::string::npos);
  CHECK(tsv.find("mean") != std::string::npos);

  const auto eval = session->evaluate_checkpoint(m.folds[0].checkpoint, "test");
  CHECK(eval.accuracy == m.folds[0].test_accuracy);
  CHECK(kind_of([&] { session->evaluate_checkpoint(m.folds[0].checkpoint, "dev"); }) == ErrorKind::config);
}

TEST_CASE("validation folds come from the training split only") {
  const auto dir = testing::scratch_dir("folds");
  auto session = tiny_session(tiny_config(dir), 20, 7);
  const auto plan = corpus::make_folds(20, 2, tiny_config(dir).seed);
  CHECK(plan.members(0).size() + plan.members(1).size() == 20);
  CHECK(kind_of([&] { session->train_fold(2, std::nullopt); }) == ErrorKind::config);
}

TEST_CASE("zero epochs keeps the initialization") {
  const auto dir = testing::scratch_dir("zero-epochs");
  auto config = tiny_config(dir);
  config.epochs = 0;
  auto session = tiny_session(config, 12, 6);
  const auto r = session->fit(0, ptrs(session->train()), ptrs(session->train()), ptrs(session->test()), std::nullopt);
  CHECK(r.best_epoch == 0);
  CHECK(r.history.empty());
}

TEST_CASE("training is deterministic for a seed") {
  const auto dir = testing::scratch_dir("determinism");
  auto config = tiny_config(dir);
  auto a = tiny_session(config, 24, 9);
  auto b = tiny_session(config, 24, 9);
  const auto ra = a->train_fold(1, std::nullopt);
  const auto rb = b->train_fold(1, std::nullopt);
  REQUIRE(ra.history.size() == rb.history.size());
  for (std::size_t e = 0; e < ra.history.size(); ++e) CHECK(ra.history[e].train_loss == rb.history[e].train_loss);
  CHECK(ra.test_accuracy == rb.test_accuracy);
  config.seed = 43;
  auto c = tiny_session(config, 24, 9);
  CHECK(c->train_fold(1, std::nullopt).history[0].train_loss != ra.history[0].train_loss);
}

TEST_CASE("fine-tuning restarts from the initial encoder weights in every fit") {
  const auto dir = testing::scratch_dir("finetune");
  auto config = tiny_config(dir);
  config.finetune_encoder = true;
  config.lr_encoder = 1e-2;
  config.epochs = 2;
  auto session = tiny_session(config, 12, 6);
  const auto r1 = session->train_fold(0, std::nullopt);
  const auto r2 = session->train_fold(0, std::nullopt);
  CHECK(r1.history[0].train_loss == r2.history[0].train_loss);
  CHECK(r1.history[1].train_loss == r2.history[1].train_loss);
  CHECK(r1.history[1].lr_encoder > 0.0);

  config.lr_encoder = 0.0;
  auto frozen = tiny_session(config, 12, 6);
  CHECK(frozen->train_fold(0, std::nullopt).history[1].train_loss != r1.history[1].train_loss);
}

TEST_CASE("early stopping honours patience") {
  const auto dir = testing::scratch_dir("patience");
  auto config = tiny_config(dir);
  config.epochs = 30;
  config.patience = 1;
  config.lr_head = 0.0;
  auto session = tiny_session(config, 12, 6);
  const auto r = session->train_fold(0, std::nullopt);
  CHECK(r.history.size() == 1);
  CHECK(r.best_epoch == 0);
}

TEST_CASE("divergence stops the run and records the batch") {
  const auto dir = testing::scratch_dir("divergence");
  auto config = tiny_config(dir);
  config.lr_head = 1e308;
  config.warmup = 0.0;
  config.batch_size = 1;
  config.dropout = 0.0;
  config.lambda = 1.0;
  auto session = tiny_session(config, 12, 6);
  CHECK(kind_of([&] { session->train_fold(0, dir / "out"); }) == ErrorKind::divergence);
  CHECK(fs::exists(dir / "out" / "divergence-fold0.json"));
}

TEST_CASE("sweep csv round trip and chart") {
  const std::vector<SweepRow> rows{{1, 0.7123456789012345, 0.6, "abc"}, {3, 1.0 / 3.0, 0.1, "def"}};
  const auto csv = sweep_csv(rows);
  CHECK(csv.rfind("window,accuracy,macro_f1,config_hash\n", 0) == 0);
  const auto back = parse_sweep_csv(csv);
  REQUIRE(back.size() == 2);
  CHECK(back[0].accuracy == rows[0].accuracy);
  CHECK(back[1].accuracy == rows[1].accuracy);
  CHECK(back[1].config_hash == "def");
  CHECK(kind_of([] { parse_sweep_csv("window,accuracy\n1,2\n"); }) == ErrorKind::format);

  const auto svg = sweep_chart_svg(rows, "Sweep <test>");
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("Sweep &lt;test&gt;") != std::string::npos);
  CHECK(svg.find("polyline") != std::string::npos);
  CHECK(sweep_chart_svg({rows[0]}, "one").find("<circle") != std::string::npos);
}

TEST_CASE("window sweep over a single window") {
  const auto dir = testing::scratch_dir("sweep");
  auto config = tiny_config(dir);
  config.epochs = 1;
  auto session = tiny_session(config, 16, 6);
  const auto res = session->window_sweep({2}, dir / "sweep");
  REQUIRE(res.size() == 1);
  const auto rows = parse_sweep_csv(read_file(dir / "sweep" / "sweep.csv"));
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].window == 2);
  CHECK(rows[0].accuracy == res[0].second.mean_test_accuracy);
  CHECK(fs::exists(dir / "sweep" / "sweep.svg"));
  CHECK(fs::exists(dir / "sweep" / "w2" / "summary.json"));
  CHECK(session->config().window == config.window);
  CHECK(kind_of([&] { session->window_sweep({}, dir / "none"); }) == ErrorKind::config);
}

TEST_CASE("ablation runs four variants") {
  const auto dir = testing::scratch_dir("ablation");
  auto config = tiny_config(dir);
  config.epochs = 1;
  auto session = tiny_session(config, 12, 6);
  const auto res = session->run_ablation(dir / "abl");
  REQUIRE(res.size() == 4);
  CHECK(res[0].first == "full");
  CHECK(res[3].first == "wo_pos_wo_att");
  CHECK(res[0].second.config_hash != res[1].second.config_hash);
  CHECK(count_lines(dir / "abl" / "ablation.tsv") == 5);
  CHECK(session->config().use_position);
}

TEST_CASE("session on fixture files") {
  const auto dir = testing::scratch_dir("fixture-session");
  auto config = tiny_config(dir);
  config.dataset = "twitter";
  config.train_path = testing::fixture("twitter_small.txt").string();
  config.test_path = testing::fixture("twitter_small.txt").string();
  config.vectors_path = testing::fixture("vectors_small.txt").string();
  config.parser = "cmd:python3 " + testing::fixture("chain_parser.py").string();
  Session s(config);
  s.prepare();
  CHECK(s.train().size() == 7);
  CHECK(s.stats_tsv() ==
        "dataset\tsplit\tpositive\tneutral\tnegative\ttotal\ntwitter\ttrain\t2\t3\t2\t7\ntwitter\ttest\t2\t3\t2\t7\n");
  CHECK(s.graph_diff("train", 0).rfind("layer\t", 0) == 0);
  CHECK(kind_of([&] { s.graph_diff("train", 99); }) == ErrorKind::index);
  CHECK(s.metadata()["config_hash"] == config.hash());
  CHECK(fs::exists(fs::path(config.cache_dir) / "parses.tsv"));

  config.parser = "cache";
  Session cached(config);
  CHECK_NOTHROW(cached.prepare());
}
