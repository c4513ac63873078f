#include "model/model.hpp"

#include <cmath>

#include "common/error.hpp"

namespace b4g::model {
namespace {

ag::Var zeros(Eigen::Index rows, Eigen::Index cols) { return ag::parameter(ag::Matrix::Zero(rows, cols)); }

void fill_uniform(ag::Var& v, Rng& rng, double bound) {
  auto& m = v.mutable_value();
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
}

void fill_xavier(ag::Var& v, Rng& rng) {
  fill_uniform(v, rng, std::sqrt(6.0 / static_cast<double>(v.rows() + v.cols())));
}

LstmParams zero_lstm(int in, int h) { return {zeros(in, 4 * h), zeros(h, 4 * h), zeros(1, 4 * h)}; }

ag::Var dropout(const ag::Var& x, double p, const ForwardOptions& options) {
  if (!options.training || p <= 0.0) return x;
  if (!options.rng) fail(ErrorKind::internal, "training forward pass with dropout needs an rng");
  if (p >= 1.0) return ag::constant(ag::Matrix::Zero(x.rows(), x.cols()));
  const double keep = 1.0 - p;
  ag::Matrix mask(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = options.rng->bernoulli_keep(keep) / keep;
  return ag::mul(x, ag::constant(std::move(mask)));
}

}  // namespace

void ModelConfig::validate() const {
  if (word_dim <= 0 || hidden <= 0 || encoder_dim <= 0)
    fail(ErrorKind::config, "model dimensions must be positive");
  if (layers.empty()) fail(ErrorKind::config, "model needs at least one GCN layer");
  if (window < 0) fail(ErrorKind::config, "position window must be non-negative");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail(ErrorKind::config, "dropout must lie in [0, 1)");
  graphsup::validate_thresholds(alpha, beta);
}

nlohmann::json ModelConfig::to_json() const {
  return {{"word_dim", word_dim}, {"hidden", hidden},     {"encoder_dim", encoder_dim},
          {"layers", layers},     {"window", window},     {"alpha", alpha},
          {"beta", beta},         {"dropout", dropout},   {"use_position", use_position},
          {"use_attention_graph", use_attention_graph}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  try {
    ModelConfig c;
    c.word_dim = j.at("word_dim").get<int>();
    c.hidden = j.at("hidden").get<int>();
    c.encoder_dim = j.at("encoder_dim").get<int>();
    c.layers = j.at("layers").get<std::vector<int>>();
    c.window = j.at("window").get<int>();
    c.alpha = j.at("alpha").get<double>();
    c.beta = j.at("beta").get<double>();
    c.dropout = j.at("dropout").get<double>();
    c.use_position = j.at("use_position").get<bool>();
    c.use_attention_graph = j.at("use_attention_graph").get<bool>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format, std::string("model config: ") + e.what());
  }
}

ModelParams::ModelParams(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  const int h = config_.hidden, dp = config_.node_dim();
  forward_lstm = zero_lstm(config_.word_dim, h);
  backward_lstm = zero_lstm(config_.word_dim, h);
  for (int l = 0; l < config_.gcn_layers(); ++l) {
    fusion.push_back(zeros(config_.encoder_dim, dp));
    gcn_w.push_back(zeros(dp, dp));
    gcn_b.push_back(zeros(1, dp));
  }
  position = zeros(2 * config_.window + 1, dp);
  cls_w = zeros(dp, kNumClasses);
  cls_b = zeros(1, kNumClasses);
}

ModelParams ModelParams::initialize(ModelConfig config, std::uint64_t seed) {
  ModelParams p(std::move(config));
  Rng rng(seed);
  const double lstm_bound = 1.0 / std::sqrt(static_cast<double>(p.config_.hidden));
  for (LstmParams* lstm : {&p.forward_lstm, &p.backward_lstm}) {
    fill_uniform(lstm->w_ih, rng, lstm_bound);
    fill_uniform(lstm->w_hh, rng, lstm_bound);
    fill_uniform(lstm->bias, rng, lstm_bound);
  }
  for (auto& w : p.fusion) fill_xavier(w, rng);
  for (auto& w : p.gcn_w) fill_xavier(w, rng);
  fill_uniform(p.position, rng, 0.25 / std::sqrt(static_cast<double>(p.config_.node_dim())));
  fill_xavier(p.cls_w, rng);
  return p;
}

std::vector<std::pair<std::string, ag::Var>> ModelParams::named_parameters() const {
  std::vector<std::pair<std::string, ag::Var>> out;
  for (const auto& [dir, lstm] : {std::pair{"forward", &forward_lstm}, std::pair{"backward", &backward_lstm}}) {
    const std::string p = std::string("lstm.") + dir + ".";
    out.emplace_back(p + "w_ih", lstm->w_ih);
    out.emplace_back(p + "w_hh", lstm->w_hh);
    out.emplace_back(p + "bias", lstm->bias);
  }
  for (std::size_t l = 0; l < fusion.size(); ++l) {
    const std::string s = std::to_string(l);
    out.emplace_back("fusion." + s + ".weight", fusion[l]);
    out.emplace_back("gcn." + s + ".weight", gcn_w[l]);
    out.emplace_back("gcn." + s + ".bias", gcn_b[l]);
  }
  out.emplace_back("position", position);
  out.emplace_back("classifier.weight", cls_w);
  out.emplace_back("classifier.bias", cls_b);
  return out;
}

std::vector<ag::Var> ModelParams::trainable() const {
  std::vector<ag::Var> out;
  for (auto& [name, v] : named_parameters()) {
    if (name == "position" && !config_.use_position) continue;
    out.push_back(v);
  }
  return out;
}

std::map<std::string, ag::Matrix> ModelParams::snapshot() const {
  std::map<std::string, ag::Matrix> out;
  for (auto& [name, v] : named_parameters()) out.emplace(name, v.value());
  return out;
}

void ModelParams::restore(const std::map<std::string, ag::Matrix>& values) {
  for (auto& [name, var] : named_parameters()) {
    auto it = values.find(name);
    if (it == values.end()) fail(ErrorKind::format, "missing parameter '" + name + "'");
    if (it->second.rows() != var.rows() || it->second.cols() != var.cols())
      fail(ErrorKind::shape, "parameter '" + name + "' has shape " + std::to_string(it->second.rows()) + "x" +
                                 std::to_string(it->second.cols()) + ", expected " + std::to_string(var.rows()) +
                                 "x" + std::to_string(var.cols()));
    auto v = var;
    v.mutable_value() = it->second;
  }
}

void ModelParams::zero_grad() {
  for (auto& [name, var] : named_parameters()) {
    auto v = var;
    v.zero_grad();
  }
}

ag::Var lstm_direction(const ag::Var& x, const LstmParams& params, bool reverse) {
  const Eigen::Index n = x.rows(), h = params.w_hh.rows();
  if (x.cols() != params.w_ih.rows())
    fail(ErrorKind::shape, "LSTM input width " + std::to_string(x.cols()) + " does not match " +
                               std::to_string(params.w_ih.rows()));
  ag::Var xw = ag::add_row(ag::matmul(x, params.w_ih), params.bias);
  ag::Var hs = ag::constant(ag::Matrix::Zero(1, h));
  ag::Var cs = ag::constant(ag::Matrix::Zero(1, h));
  std::vector<ag::Var> outputs(static_cast<std::size_t>(n));
  for (Eigen::Index step = 0; step < n; ++step) {
    const Eigen::Index t = reverse ? n - 1 - step : step;
    ag::Var z = ag::add(ag::slice_rows(xw, t, 1), ag::matmul(hs, params.w_hh));
    ag::Var i = ag::sigmoid(ag::slice_cols(z, 0, h));
    ag::Var f = ag::sigmoid(ag::slice_cols(z, h, h));
    ag::Var g = ag::tanh(ag::slice_cols(z, 2 * h, h));
    ag::Var o = ag::sigmoid(ag::slice_cols(z, 3 * h, h));
    cs = ag::add(ag::mul(f, cs), ag::mul(i, g));
    hs = ag::mul(o, ag::tanh(cs));
    outputs[static_cast<std::size_t>(t)] = hs;
  }
  return ag::concat_rows(outputs);
}

ag::Var bilstm_encode(const ag::Var& x, const LstmParams& forward, const LstmParams& backward) {
  if (x.rows() == 0) fail(ErrorKind::value, "BiLSTM input has no rows");
  const ag::Var parts[] = {lstm_direction(x, forward, false), lstm_direction(x, backward, true)};
  return ag::concat_cols(parts);
}

ag::Var fuse(const ag::Var& features, const ag::Var& projection, const ag::Var& prev) {
  if (features.cols() != projection.rows() || features.rows() != prev.rows() || projection.cols() != prev.cols())
    fail(ErrorKind::shape, "fusion shapes disagree");
  return ag::add(ag::relu(ag::matmul(features, projection)), prev);
}

ag::Var gcn_layer(const ag::Var& input, const depgraph::Adjacency& adjacency, const ag::Var& weight,
                  const ag::Var& bias, const ag::Var& position, int window) {
  const Eigen::Index n = input.rows();
  if (adjacency.rows() != n || adjacency.cols() != n)
    fail(ErrorKind::shape, "adjacency is " + std::to_string(adjacency.rows()) + "x" +
                               std::to_string(adjacency.cols()) + " for " + std::to_string(n) + " nodes");
  if (input.cols() != weight.rows()) fail(ErrorKind::shape, "GCN input width does not match its weight");
  ag::Matrix norm = adjacency.cast<double>();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = norm.row(i).sum();
    if (d > 0) norm.row(i) /= d;
  }
  ag::Var agg = ag::matmul(ag::constant(norm), input);
  if (position.defined()) {
    if (position.rows() != 2 * window + 1 || position.cols() != input.cols())
      fail(ErrorKind::shape, "position table shape does not match the window and node width");
    ag::Matrix counts = ag::Matrix::Zero(n, 2 * window + 1);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        if (norm(i, j) != 0.0)
          counts(i, graphsup::position_index(static_cast<int>(i), static_cast<int>(j), window)) += norm(i, j);
    agg = ag::add(agg, ag::matmul(ag::constant(std::move(counts)), position));
  }
  return ag::relu(ag::add_row(ag::matmul(agg, weight), bias));
}

ag::Var aspect_pool(const ag::Var& nodes, std::size_t start, std::size_t len) {
  if (len == 0 || start + len > static_cast<std::size_t>(nodes.rows()))
    fail(ErrorKind::index, "aspect span [" + std::to_string(start) + ", " + std::to_string(start + len) +
                               ") outside " + std::to_string(nodes.rows()) + " nodes");
  return ag::mean_rows(ag::slice_rows(nodes, static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(len)));
}

ag::Var class_logits(const ag::Var& pooled, const ag::Var& weight, const ag::Var& bias) {
  return ag::add_row(ag::matmul(pooled, weight), bias);
}

Eigen::RowVectorXd softmax(const Eigen::RowVectorXd& logits) {
  Eigen::RowVectorXd e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

Eigen::RowVectorXd classify(const ag::Var& pooled, const ModelParams& params) {
  return softmax(class_logits(pooled, params.cls_w, params.cls_b).value().row(0));
}

ag::Var loss(std::span<const ag::Var> logits, std::span<const int> labels, std::span<const ag::Var> theta,
             double lambda) {
  if (logits.size() != labels.size()) fail(ErrorKind::shape, "loss needs one label per prediction");
  if (logits.empty()) fail(ErrorKind::value, "loss over an empty batch");
  std::vector<ag::Var> terms;
  terms.reserve(logits.size() + 1);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= logits[i].cols())
      fail(ErrorKind::value, "label " + std::to_string(labels[i]) + " outside the class range");
    terms.push_back(ag::cross_entropy(logits[i], labels[i]));
  }
  if (lambda != 0.0 && !theta.empty()) terms.push_back(ag::scale(ag::global_l2_norm(theta), lambda));
  return ag::add_scalars(terms);
}

ForwardTrace forward(const ModelParams& params, const ag::Var& embeddings, const plmfeat::PlmFeatures& features,
                     const depgraph::DepGraph& graph, std::size_t aspect_start, std::size_t aspect_len,
                     const ForwardOptions& options) {
  const auto& c = params.config();
  const auto n = static_cast<std::size_t>(embeddings.rows());
  if (graph.n != n || static_cast<std::size_t>(graph.adjacency.rows()) != n)
    fail(ErrorKind::shape, "dependency graph has " + std::to_string(graph.n) + " nodes for " + std::to_string(n) +
                               " words");
  if (features.hidden.size() != params.fusion.size() || features.attention.size() != params.fusion.size())
    fail(ErrorKind::shape, "encoder features cover " + std::to_string(features.hidden.size()) +
                               " layers, model expects " + std::to_string(params.fusion.size()));
  for (std::size_t l = 0; l < features.hidden.size(); ++l) {
    if (static_cast<std::size_t>(features.hidden[l].rows()) != n)
      fail(ErrorKind::shape, "encoder features are not aligned to the sentence words");
  }

  ForwardTrace trace;
  trace.graphs = graphsup::build(graph, features.attention, c.alpha, c.beta, c.use_attention_graph);
  trace.H = bilstm_encode(embeddings, params.forward_lstm, params.backward_lstm);
  const ag::Var position = c.use_position ? params.position : ag::Var();
  ag::Var prev = trace.H;
  for (std::size_t l = 0; l < params.fusion.size(); ++l) {
    ag::Var g = dropout(features.hidden[l], c.dropout, options);
    ag::Var r = fuse(g, params.fusion[l], prev);
    ag::Var o = gcn_layer(r, trace.graphs.per_layer[l], params.gcn_w[l], params.gcn_b[l], position, c.window);
    o = dropout(o, c.dropout, options);
    trace.R.push_back(r);
    trace.O.push_back(o);
    prev = o;
  }
  trace.pooled = aspect_pool(prev, aspect_start, aspect_len);
  trace.logits = class_logits(trace.pooled, params.cls_w, params.cls_b);
  trace.probabilities = softmax(trace.logits.value().row(0));
  return trace;
}

}  // namespace b4g::model
