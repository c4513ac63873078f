#include <cmath>
#include <fstream>

#include "common/error.hpp"
#include "graphsup/graphsup.hpp"
#include "harness/harness.hpp"

namespace b4g::harness {
namespace fs = std::filesystem;

namespace {

std::map<std::string, ag::Matrix> snapshot_encoder(const plmfeat::Transformer& t) {
  std::map<std::string, ag::Matrix> out;
  for (auto& [name, v] : t.named_parameters()) out.emplace(name, v.value());
  return out;
}

void restore_encoder_values(plmfeat::Transformer& t, const std::map<std::string, ag::Matrix>& values) {
  for (auto& [name, var] : t.named_parameters()) {
    auto v = var;
    v.mutable_value() = values.at(name);
  }
}

std::vector<ag::Var> encoder_params(const plmfeat::Transformer& t) {
  std::vector<ag::Var> out;
  for (auto& [name, v] : t.named_parameters()) out.push_back(v);
  return out;
}

void append_line(const fs::path& path, const std::string& line) {
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  out << line << '\n';
}

std::uint64_t fold_seed(std::uint64_t seed, int fold, std::uint64_t salt) {
  return seed ^ (0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(fold) + 1)) ^ salt;
}

}  // namespace

Session::Session(RunConfig config) : config_(std::move(config)) {}
Session::~Session() = default;

Prepared Session::make_prepared(corpus::Instance instance, const depgraph::Heads& heads) const {
  corpus::validate(instance);
  Prepared p;
  p.graph = depgraph::to_adjacency(heads, instance.size());
  p.embeddings = ag::constant(vectors_->embed(instance.tokens));
  p.rendered = plmfeat::render_pair(encoder_->tokenizer(), instance.tokens, instance.aspect_tokens());
  p.alignment = plmfeat::align_rendered(*encoder_, instance.tokens, p.rendered);
  p.instance = std::move(instance);
  return p;
}

void Session::prepare() {
  config_.validate();
  const auto id = config_.dataset_id();
  if (config_.train_path.empty()) fail(ErrorKind::config, "train_path is not set");
  auto load = [&](const std::string& path) {
    const auto format = config_.format == "auto" ? corpus::default_format(id, path)
                                                 : *corpus::parse_file_format(config_.format);
    return corpus::load_dataset(path, format, id, config_.strict_alignment);
  };
  std::vector<corpus::Instance> train = load(config_.train_path);
  std::vector<corpus::Instance> test;
  if (!config_.test_path.empty()) test = load(config_.test_path);

  const fs::path cache_dir = config_.cache_dir;
  const fs::path parse_path = cache_dir / "parses.tsv";
  auto backend = depgraph::make_parser(config_.parser);
  parser_id_ = backend ? backend->id() : "cache";
  depgraph::CachedParser parser(depgraph::ParseCache::load(parse_path), std::move(backend));
  std::vector<std::vector<std::string>> sentences;
  for (const auto* split : {&train, &test})
    for (const auto& inst : *split) sentences.push_back(inst.tokens);
  const auto before = parser.cache().size();
  const auto heads = parser.parse_all(sentences);
  if (parser.cache().size() != before) {
    fs::create_directories(cache_dir);
    parser.cache().save(parse_path);
  }
  std::vector<depgraph::Heads> train_heads(heads.begin(), heads.begin() + static_cast<long>(train.size()));
  std::vector<depgraph::Heads> test_heads(heads.begin() + static_cast<long>(train.size()), heads.end());

  const auto policy = *corpus::parse_oov_policy(config_.oov_policy);
  std::optional<corpus::WordVectorTable> vectors;
  if (config_.vectors_path.empty()) {
    if (config_.word_dim <= 0) fail(ErrorKind::config, "word_dim must be positive when no vectors_path is given");
    vectors.emplace(config_.word_dim, policy, config_.seed);
  } else {
    std::unordered_set<std::string> vocab = corpus::vocabulary(train);
    for (const auto& w : corpus::vocabulary(test)) vocab.insert(w);
    vectors.emplace(corpus::WordVectorTable::load_text(config_.vectors_path, config_.word_dim, policy, config_.seed,
                                                        &vocab));
  }
  prepare_instances(std::move(train), std::move(test), train_heads, test_heads,
                    plmfeat::make_encoder(config_.encoder), std::move(*vectors));
}

void Session::prepare_instances(std::vector<corpus::Instance> train, std::vector<corpus::Instance> test,
                                const std::vector<depgraph::Heads>& train_heads,
                                const std::vector<depgraph::Heads>& test_heads,
                                std::unique_ptr<plmfeat::EncoderBackend> encoder, corpus::WordVectorTable vectors) {
  config_.validate();
  if (train.size() != train_heads.size() || test.size() != test_heads.size())
    fail(ErrorKind::shape, "need one parse per instance");
  if (!encoder) fail(ErrorKind::value, "no encoder backend");
  encoder_ = std::move(encoder);
  plmfeat::validate_layers(config_.layers, encoder_->num_layers());
  encoder_->transformer().set_trainable(config_.finetune_encoder);
  encoder_initial_.clear();
  if (config_.finetune_encoder) encoder_initial_ = snapshot_encoder(encoder_->transformer());
  vectors_.emplace(std::move(vectors));
  if (parser_id_.empty()) parser_id_ = "supplied";
  train_.clear();
  test_.clear();
  for (std::size_t i = 0; i < train.size(); ++i) train_.push_back(make_prepared(std::move(train[i]), train_heads[i]));
  for (std::size_t i = 0; i < test.size(); ++i) test_.push_back(make_prepared(std::move(test[i]), test_heads[i]));
  live_features_ = config_.finetune_encoder;
  std::optional<fs::path> feature_dir;
  if (!config_.cache_dir.empty() && config_.encoder.rfind("bert", 0) == 0) {
    feature_dir = fs::path(config_.cache_dir) / "features";
    fs::create_directories(*feature_dir);
  }
  feature_cache_ = std::make_unique<plmfeat::FeatureCache>(feature_dir);
  prepared_ = true;
  if (!live_features_) precompute_features();
}

void Session::precompute_features() {
  for (const auto* split : {&train_, &test_})
    for (const auto& item : *split) features(item);
}

plmfeat::PlmFeatures Session::features(const Prepared& item) {
  if (!prepared_) fail(ErrorKind::config, "session is not prepared");
  if (live_features_) return plmfeat::encode(*encoder_, item.instance, item.alignment, item.rendered, config_.layers);
  const auto key = plmfeat::FeatureCache::key(item.instance, encoder_->id(), config_.layers);
  if (auto hit = feature_cache_->find(key)) return std::move(*hit);
  auto f = plmfeat::encode(*encoder_, item.instance, item.alignment, item.rendered, config_.layers);
  feature_cache_->store(key, f);
  return f;
}

model::ForwardTrace Session::forward(const model::ModelParams& params, const Prepared& item,
                                     const model::ForwardOptions& options) {
  const auto f = features(item);
  return model::forward(params, item.embeddings, f, item.graph, item.instance.aspect_start, item.instance.aspect_len,
                        options);
}

std::vector<int> Session::predict(const model::ModelParams& params, const std::vector<const Prepared*>& items) {
  std::vector<int> out;
  out.reserve(items.size());
  for (const auto* item : items) {
    const auto trace = forward(params, *item);
    Eigen::Index arg = 0;
    trace.probabilities.maxCoeff(&arg);
    out.push_back(static_cast<int>(arg));
  }
  return out;
}

Metrics Session::evaluate(const model::ModelParams& params, const std::vector<const Prepared*>& items) {
  std::vector<int> labels;
  for (const auto* item : items) labels.push_back(static_cast<int>(item->instance.label));
  return compute_metrics(predict(params, items), labels);
}

model::ModelParams Session::init_params(std::uint64_t seed) const {
  return model::ModelParams::initialize(config_.model_config(vectors_->dim(), encoder_->d_model()), seed);
}

std::vector<const Prepared*> Session::all(const std::vector<Prepared>& items) const {
  std::vector<const Prepared*> out;
  for (const auto& item : items) out.push_back(&item);
  return out;
}

FoldResult Session::fit(int fold, const std::vector<const Prepared*>& train_items,
                        const std::vector<const Prepared*>& val_items,
                        const std::vector<const Prepared*>& test_items, const std::optional<fs::path>& out_dir,
                        bool track_train_accuracy) {
  if (!prepared_) fail(ErrorKind::config, "session is not prepared");
  if (train_items.empty()) fail(ErrorKind::value, "no training instances");
  if (val_items.empty()) fail(ErrorKind::value, "no validation instances");
  if (config_.finetune_encoder) restore_encoder_values(encoder_->transformer(), encoder_initial_);

  model::ModelParams params = init_params(fold_seed(config_.seed, fold, 0x1));
  Rng rng(fold_seed(config_.seed, fold, 0x2));
  const std::vector<ag::Var> head = params.trainable();
  const std::vector<ag::Var> enc = config_.finetune_encoder ? encoder_params(encoder_->transformer())
                                                            : std::vector<ag::Var>{};
  std::vector<ag::Var> theta = head;
  theta.insert(theta.end(), enc.begin(), enc.end());

  const std::size_t batch = static_cast<std::size_t>(config_.batch_size);
  const std::size_t per_epoch = (train_items.size() + batch - 1) / batch;
  const std::size_t total = per_epoch * static_cast<std::size_t>(config_.epochs);
  std::vector<Adam::Group> groups{{head, LinearSchedule(config_.lr_head, total, config_.warmup)}};
  if (!enc.empty()) groups.push_back({enc, LinearSchedule(config_.lr_encoder, total, config_.warmup)});
  Adam adam(std::move(groups));

  const std::string hash = config_.hash();
  std::optional<fs::path> epoch_log;
  if (out_dir) {
    fs::create_directories(*out_dir);
    epoch_log = *out_dir / "epochs.jsonl";
  }

  FoldResult result;
  result.fold = fold;
  auto val = evaluate(params, val_items);
  result.val_accuracy = val.accuracy;
  result.val_macro_f1 = val.macro_f1;
  auto best_head = params.snapshot();
  std::map<std::string, ag::Matrix> best_encoder;
  if (!enc.empty()) best_encoder = snapshot_encoder(encoder_->transformer());

  std::vector<std::size_t> order(train_items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  int since_best = 0;
  for (int epoch = 1; epoch <= config_.epochs; ++epoch) {
    rng.shuffle(order);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr_head = adam.current_lr(0);
    rec.lr_encoder = enc.empty() ? 0.0 : adam.current_lr(1);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      params.zero_grad();
      for (auto v : enc) v.zero_grad();
      std::vector<ag::Var> logits;
      std::vector<int> labels;
      for (std::size_t k = start; k < end; ++k) {
        const Prepared& item = *train_items[order[k]];
        logits.push_back(forward(params, item, {true, &rng}).logits);
        labels.push_back(static_cast<int>(item.instance.label));
      }
      ag::Var l = model::loss(logits, labels, theta, config_.lambda);
      if (!std::isfinite(l.scalar())) {
        nlohmann::json dump = {{"config_hash", hash}, {"fold", fold}, {"epoch", epoch},
                               {"step", adam.steps_taken()}, {"loss", std::to_string(l.scalar())}};
        nlohmann::json batch_json = nlohmann::json::array();
        for (std::size_t k = start; k < end; ++k) {
          const auto& inst = train_items[order[k]]->instance;
          batch_json.push_back({{"sentence_id", inst.sentence_id}, {"tokens", inst.tokens},
                                {"aspect_start", inst.aspect_start}, {"aspect_len", inst.aspect_len},
                                {"label", corpus::to_string(inst.label)}});
        }
        dump["batch"] = batch_json;
        const fs::path dir = out_dir ? *out_dir : fs::path(config_.cache_dir);
        fs::create_directories(dir);
        const fs::path path = dir / ("divergence-fold" + std::to_string(fold) + ".json");
        write_file_atomic(path, dump.dump(2));
        fail(ErrorKind::divergence, "loss became non-finite at fold " + std::to_string(fold) + " epoch " +
                                        std::to_string(epoch) + "; offending batch written to " + path.string());
      }
      rec.train_loss += l.scalar();
      ag::backward(l);
      adam.step();
    }
    if (track_train_accuracy) rec.train_accuracy = evaluate(params, train_items).accuracy;
    val = evaluate(params, val_items);
    rec.val_accuracy = val.accuracy;
    rec.val_macro_f1 = val.macro_f1;
    result.history.push_back(rec);
    if (epoch_log) {
      append_line(*epoch_log, nlohmann::json{{"config_hash", hash},
                                             {"fold", fold},
                                             {"epoch", epoch},
                                             {"train_loss", rec.train_loss},
                                             {"train_accuracy", rec.train_accuracy},
                                             {"val_accuracy", rec.val_accuracy},
                                             {"val_macro_f1", rec.val_macro_f1},
                                             {"lr_head", rec.lr_head},
                                             {"lr_encoder", rec.lr_encoder}}
                                  .dump());
    }
    log_info("fold " + std::to_string(fold) + " epoch " + std::to_string(epoch) + " loss " +
             std::to_string(rec.train_loss) + " val_acc " + std::to_string(rec.val_accuracy));
    if (val.accuracy > result.val_accuracy) {
      result.val_accuracy = val.accuracy;
      result.val_macro_f1 = val.macro_f1;
      result.best_epoch = epoch;
      best_head = params.snapshot();
      if (!enc.empty()) best_encoder = snapshot_encoder(encoder_->transformer());
      since_best = 0;
    } else if (config_.patience > 0 && ++since_best >= config_.patience) {
      break;
    }
  }

  params.restore(best_head);
  if (!enc.empty()) restore_encoder_values(encoder_->transformer(), best_encoder);
  if (!test_items.empty()) {
    const auto test = evaluate(params, test_items);
    result.test_accuracy = test.accuracy;
    result.test_macro_f1 = test.macro_f1;
  }
  if (out_dir) {
    nlohmann::json meta = metadata();
    meta["fold"] = fold;
    meta["best_epoch"] = result.best_epoch;
    meta["val_accuracy"] = result.val_accuracy;
    const fs::path path = *out_dir / ("fold" + std::to_string(fold) + ".ckpt");
    model::save_checkpoint(path,
                           model::make_checkpoint(params, enc.empty() ? nullptr : &encoder_->transformer(), meta));
    result.checkpoint = path.string();
  }
  return result;
}

FoldResult Session::train_fold(int fold, const std::optional<fs::path>& out_dir) {
  if (!prepared_) fail(ErrorKind::config, "session is not prepared");
  const auto plan = corpus::make_folds(train_.size(), config_.folds, config_.seed);
  if (fold < 0 || fold >= plan.k)
    fail(ErrorKind::config, "fold " + std::to_string(fold) + " outside 0.." + std::to_string(plan.k - 1));
  std::vector<const Prepared*> tr, va;
  for (auto i : plan.complement(fold)) tr.push_back(&train_[i]);
  for (auto i : plan.members(fold)) va.push_back(&train_[i]);
  return fit(fold, tr, va, all(test_), out_dir);
}

RunMetrics Session::run_cv(const fs::path& out_dir) {
  if (!prepared_) fail(ErrorKind::config, "session is not prepared");
  if (test_.empty()) fail(ErrorKind::config, "cross validation needs a test set (test_path)");
  fs::create_directories(out_dir);
  for (const char* name : {"epochs.jsonl", "folds.jsonl"}) fs::remove(out_dir / name);
  write_file_atomic(out_dir / "metadata.json", metadata().dump(2));
  RunMetrics metrics;
  metrics.config_hash = config_.hash();
  for (int fold = 0; fold < config_.folds; ++fold) {
    FoldResult r = train_fold(fold, out_dir);
    nlohmann::json j = to_json(r);
    j["config_hash"] = metrics.config_hash;
    append_line(out_dir / "folds.jsonl", j.dump());
    metrics.folds.push_back(std::move(r));
    aggregate(metrics);
    write_file_atomic(out_dir / "metrics.tsv", metrics_tsv(metrics));
  }
  nlohmann::json summary = {{"config_hash", metrics.config_hash},
                            {"folds", metrics.folds.size()},
                            {"mean_val_accuracy", metrics.mean_val_accuracy},
                            {"mean_test_accuracy", metrics.mean_test_accuracy},
                            {"mean_test_macro_f1", metrics.mean_test_macro_f1},
                            {"config", config_.to_json()}};
  append_line(out_dir / "folds.jsonl", nlohmann::json{{"config_hash", metrics.config_hash},
                                                      {"fold", "mean"},
                                                      {"val_accuracy", metrics.mean_val_accuracy},
                                                      {"test_accuracy", metrics.mean_test_accuracy},
                                                      {"test_macro_f1", metrics.mean_test_macro_f1}}
                                           .dump());
  write_file_atomic(out_dir / "summary.json", summary.dump(2));
  return metrics;
}

std::vector<std::pair<std::string, RunMetrics>> Session::run_ablation(const fs::path& out_dir) {
  struct Variant {
    const char* name;
    bool position;
    bool attention;
  };
  const Variant variants[] = {{"full", true, true},
                              {"wo_pos", false, true},
                              {"wo_att", true, false},
                              {"wo_pos_wo_att", false, false}};
  const bool keep_pos = config_.use_position, keep_att = config_.use_attention_graph;
  std::vector<std::pair<std::string, RunMetrics>> out;
  std::string tsv = "variant\tuse_position\tuse_attention_graph\tconfig_hash\tmean_val_accuracy\tmean_test_accuracy"
                    "\tmean_test_macro_f1\n";
  try {
    for (const auto& v : variants) {
      config_.use_position = v.position;
      config_.use_attention_graph = v.attention;
      RunMetrics m = run_cv(out_dir / v.name);
      tsv += std::string(v.name) + "\t" + (v.position ? "true" : "false") + "\t" + (v.attention ? "true" : "false") +
             "\t" + m.config_hash + "\t" + std::to_string(m.mean_val_accuracy) + "\t" +
             std::to_string(m.mean_test_accuracy) + "\t" + std::to_string(m.mean_test_macro_f1) + "\n";
      write_file_atomic(out_dir / "ablation.tsv", tsv);
      out.emplace_back(v.name, std::move(m));
    }
  } catch (...) {
    config_.use_position = keep_pos;
    config_.use_attention_graph = keep_att;
    throw;
  }
  config_.use_position = keep_pos;
  config_.use_attention_graph = keep_att;
  return out;
}

std::vector<std::pair<int, RunMetrics>> Session::window_sweep(const std::vector<int>& windows,
                                                              const fs::path& out_dir) {
  if (windows.empty()) fail(ErrorKind::config, "window sweep needs at least one window value");
  for (int w : windows)
    if (w < 0) fail(ErrorKind::config, "window values must be non-negative");
  const int keep = config_.window;
  std::vector<std::pair<int, RunMetrics>> out;
  std::vector<SweepRow> rows;
  try {
    for (int w : windows) {
      config_.window = w;
      RunMetrics m = run_cv(out_dir / ("w" + std::to_string(w)));
      rows.push_back({w, m.mean_test_accuracy, m.mean_test_macro_f1, m.config_hash});
      write_file_atomic(out_dir / "sweep.csv", sweep_csv(rows));
      out.emplace_back(w, std::move(m));
    }
  } catch (...) {
    config_.window = keep;
    throw;
  }
  config_.window = keep;
  write_file_atomic(out_dir / "sweep.svg",
                    sweep_chart_svg(rows, "Relative position window (" + config_.dataset + ")"));
  return out;
}

Metrics Session::evaluate_checkpoint(const fs::path& checkpoint, const std::string& split) {
  if (!prepared_) fail(ErrorKind::config, "session is not prepared");
  const auto ck = model::load_checkpoint(checkpoint);
  const auto params = model::params_from_checkpoint(ck);
  if (params.config().word_dim != vectors_->dim() || params.config().encoder_dim != encoder_->d_model())
    fail(ErrorKind::shape, "checkpoint dimensions do not match the configured word vectors and encoder");
  if (params.config().layers != config_.layers)
    fail(ErrorKind::config, "checkpoint layer set differs from the configured layers");
  if (model::restore_encoder(ck, encoder_->transformer())) live_features_ = true;
  if (split == "train") return evaluate(params, all(train_));
  if (split == "test") return evaluate(params, all(test_));
  fail(ErrorKind::config, "split must be train or test, got '" + split + "'");
}

std::string Session::stats_tsv() const {
  if (!prepared_) fail(ErrorKind::config, "session is not prepared");
  std::vector<corpus::StatsRow> rows;
  for (const auto& [name, items] : {std::pair{"train", &train_}, std::pair{"test", &test_}}) {
    if (name == std::string("test") && items->empty() && config_.test_path.empty()) continue;
    std::vector<corpus::Instance> insts;
    for (const auto& p : *items) insts.push_back(p.instance);
    rows.push_back({config_.dataset, name, corpus::count_labels(insts)});
  }
  return corpus::format_stats_tsv(rows);
}

std::string Session::graph_diff(const std::string& split, std::size_t index) {
  const auto* items = split == "train" ? &train_ : split == "test" ? &test_ : nullptr;
  if (!items) fail(ErrorKind::config, "split must be train or test, got '" + split + "'");
  if (index >= items->size())
    fail(ErrorKind::index, "instance " + std::to_string(index) + " outside the " + split + " split of " +
                               std::to_string(items->size()));
  const Prepared& item = (*items)[index];
  const auto f = features(item);
  const auto sup = graphsup::build(item.graph, f.attention, config_.alpha, config_.beta, true);
  return graphsup::graph_diff_tsv(item.graph, sup, f.attention, config_.layers, item.instance.tokens);
}

nlohmann::json Session::metadata() const {
  nlohmann::json j = {{"config", config_.to_json()},
                      {"config_hash", config_.hash()},
                      {"word_tokenizer", corpus::kTokenizerName},
                      {"fold_protocol", "folds drawn from the training split only; the held-out fold is the "
                                        "validation set; the official test split is used for reporting"},
                      {"parser", parser_id_}};
  if (encoder_) j["encoder"] = encoder_->id();
  if (vectors_) j["word_vectors"] = {{"dim", vectors_->dim()}, {"entries", vectors_->size()},
                                     {"oov_policy", corpus::to_string(vectors_->oov_policy())}};
  j["train_instances"] = train_.size();
  j["test_instances"] = test_.size();
  return j;
}

}  // namespace b4g::harness
