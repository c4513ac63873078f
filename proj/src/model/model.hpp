#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "autograd/tape.hpp"
#include "common/util.hpp"
#include "depgraph/depgraph.hpp"
#include "graphsup/graphsup.hpp"
#include "plmfeat/encoder.hpp"

namespace b4g::model {

inline constexpr int kNumClasses = 3;

struct ModelConfig {
  int word_dim = 300;     // d_e
  int hidden = 300;       // d_h, per LSTM direction; node width is 2 * d_h
  int encoder_dim = 768;  // d_BERT
  std::vector<int> layers{1, 5, 9, 12};
  int window = 3;
  double alpha = 0.25;
  double beta = 0.01;
  double dropout = 0.8;  // drop probability on encoder features and GCN outputs
  bool use_position = true;
  bool use_attention_graph = true;

  int gcn_layers() const noexcept { return static_cast<int>(layers.size()); }
  int node_dim() const noexcept { return 2 * hidden; }

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

struct LstmParams {
  ag::Var w_ih;  // d_in x 4h, gate blocks i, f, g, o
  ag::Var w_hh;  // h x 4h
  ag::Var bias;  // 1 x 4h
};

class ModelParams {
 public:
  explicit ModelParams(ModelConfig config);  // all-zero tensors

  // Fusion, GCN and classifier weights uniform in +-sqrt(6 / (fan_in + fan_out)),
  // biases zero, position table uniform in +-0.25 / sqrt(d_p), LSTM tensors
  // uniform in +-1 / sqrt(d_h).
  static ModelParams initialize(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return config_; }

  LstmParams forward_lstm;
  LstmParams backward_lstm;
  std::vector<ag::Var> fusion;  // per layer, d_BERT x 2d_h
  std::vector<ag::Var> gcn_w;   // per layer, 2d_h x 2d_h
  std::vector<ag::Var> gcn_b;   // per layer, 1 x 2d_h
  ag::Var position;             // (2w + 1) x 2d_h
  ag::Var cls_w;                // 2d_h x 3
  ag::Var cls_b;                // 1 x 3

  std::vector<std::pair<std::string, ag::Var>> named_parameters() const;
  // Parameters that take part in the forward pass under the current flags;
  // the position table drops out when use_position is off.
  std::vector<ag::Var> trainable() const;

  std::map<std::string, ag::Matrix> snapshot() const;
  void restore(const std::map<std::string, ag::Matrix>& values);
  void zero_grad();

 private:
  ModelConfig config_;
};

ag::Var lstm_direction(const ag::Var& x, const LstmParams& params, bool reverse);
// Row t is [forward state at t, backward state at t].
ag::Var bilstm_encode(const ag::Var& x, const LstmParams& forward, const LstmParams& backward);

// relu(G W) + prev
ag::Var fuse(const ag::Var& features, const ag::Var& projection, const ag::Var& prev);

// Row i: relu((1 / d_i) sum_j A(i, j) (R_j + P[position_index(i, j, w)]) W + b),
// d_i = nonzeros in row i. Pass an undefined position Var to disable the
// relative position term.
ag::Var gcn_layer(const ag::Var& input, const depgraph::Adjacency& adjacency, const ag::Var& weight,
                  const ag::Var& bias, const ag::Var& position, int window);

// Mean of rows [start, start + len).
ag::Var aspect_pool(const ag::Var& nodes, std::size_t start, std::size_t len);

ag::Var class_logits(const ag::Var& pooled, const ag::Var& weight, const ag::Var& bias);
Eigen::RowVectorXd softmax(const Eigen::RowVectorXd& logits);
// softmax(h_a W_c + b_c)
Eigen::RowVectorXd classify(const ag::Var& pooled, const ModelParams& params);

// -sum ln p_y over the batch (log-sum-exp on logits) + lambda * ||theta||_2.
ag::Var loss(std::span<const ag::Var> logits, std::span<const int> labels, std::span<const ag::Var> theta,
             double lambda);

struct ForwardTrace {
  ag::Var H;
  std::vector<ag::Var> R;
  std::vector<ag::Var> O;
  ag::Var pooled;
  ag::Var logits;
  Eigen::RowVectorXd probabilities;
  graphsup::SupplementedGraph graphs;
};

struct ForwardOptions {
  bool training = false;
  Rng* rng = nullptr;  // dropout masks; required when training with dropout > 0
};

// Composes the head over one instance. `embeddings` is n x d_e; features
// and graph must be aligned to the same n words.
ForwardTrace forward(const ModelParams& params, const ag::Var& embeddings, const plmfeat::PlmFeatures& features,
                     const depgraph::DepGraph& graph, std::size_t aspect_start, std::size_t aspect_len,
                     const ForwardOptions& options = {});

// Self-describing binary container: magic, JSON header (model config,
// metadata, tensor table), raw doubles. Round-trips bit-exactly.
struct Checkpoint {
  ModelConfig config;
  nlohmann::json metadata = nlohmann::json::object();
  std::map<std::string, ag::Matrix> tensors;
};

Checkpoint make_checkpoint(const ModelParams& params, const plmfeat::Transformer* finetuned_encoder,
                           nlohmann::json metadata);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);
ModelParams params_from_checkpoint(const Checkpoint& checkpoint);
// Copies "encoder."-prefixed tensors into the transformer; false if none.
bool restore_encoder(const Checkpoint& checkpoint, plmfeat::Transformer& encoder);

}  // namespace b4g::model
