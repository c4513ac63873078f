#pragma once

// Small random model inputs shared by the model tests and the acceptance run.

#include "corpus/corpus.hpp"
#include "model/model.hpp"
#include "unit/helpers.hpp"

namespace testing {

struct Scenario {
  b4g::model::ModelConfig config;
  b4g::ag::Var embeddings;
  b4g::plmfeat::PlmFeatures features;
  b4g::depgraph::DepGraph graph;
  std::size_t aspect_start = 0;
  std::size_t aspect_len = 1;
};

inline b4g::model::ModelConfig small_config(bool use_position = true, bool use_attention_graph = true) {
  b4g::model::ModelConfig c;
  c.word_dim = 5;
  c.hidden = 3;
  c.encoder_dim = 4;
  c.layers = {1, 2};
  c.window = 2;
  c.dropout = 0.0;
  c.use_position = use_position;
  c.use_attention_graph = use_attention_graph;
  return c;
}

// Random embeddings, encoder features and dependency tree for n words.
// Attention rows are random non-negative rows that sum to one.
inline Scenario random_scenario(b4g::Rng& rng, const b4g::model::ModelConfig& config, std::size_t n) {
  Scenario s;
  s.config = config;
  const auto N = static_cast<Eigen::Index>(n);
  s.embeddings = b4g::ag::constant(random_matrix(rng, N, config.word_dim));
  s.features.d_model = config.encoder_dim;
  s.features.heads = 1;
  s.features.layers = config.layers;
  for (std::size_t l = 0; l < config.layers.size(); ++l) {
    s.features.hidden.push_back(b4g::ag::constant(random_matrix(rng, N, config.encoder_dim)));
    Eigen::MatrixXd att = random_matrix(rng, N, N, 0.0, 1.0).array().square();
    for (Eigen::Index i = 0; i < N; ++i) att.row(i) /= att.row(i).sum();
    s.features.attention.push_back(att);
  }
  s.graph = b4g::depgraph::to_adjacency(random_tree(rng, n), n);
  s.aspect_start = rng.below(n);
  s.aspect_len = 1 + rng.below(n - s.aspect_start);
  return s;
}

// Sentences "<filler> <aspect> was <opinion> <filler>" whose label follows
// the opinion word, parsed as chains.
struct SyntheticData {
  std::vector<b4g::corpus::Instance> instances;
  std::vector<b4g::depgraph::Heads> heads;
};

inline SyntheticData synthetic_data(b4g::Rng& rng, std::size_t count) {
  static const std::vector<std::string> aspects{"food", "service", "price", "screen", "battery", "staff"};
  static const std::vector<std::string> fillers{"the", "honestly", "today", "our", "really", "overall"};
  static const std::vector<std::vector<std::string>> opinions{
      {"great", "excellent", "superb"}, {"average", "ordinary", "typical"}, {"awful", "terrible", "poor"}};
  SyntheticData out;
  for (std::size_t i = 0; i < count; ++i) {
    const auto label = static_cast<int>(i % 3);
    const auto& op = opinions[static_cast<std::size_t>(label)];
    b4g::corpus::Instance inst;
    inst.tokens = {fillers[rng.below(fillers.size())], aspects[rng.below(aspects.size())], "was",
                   op[rng.below(op.size())], fillers[rng.below(fillers.size())]};
    inst.aspect_start = 1;
    inst.aspect_len = 1;
    inst.label = static_cast<b4g::corpus::Label>(label);
    inst.sentence_id = "syn" + std::to_string(i);
    out.heads.push_back(chain_heads(inst.tokens.size()));
    out.instances.push_back(std::move(inst));
  }
  return out;
}

}  // namespace testing
