#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "autograd/tape.hpp"
#include "plmfeat/safetensors.hpp"

namespace b4g::plmfeat {

struct TransformerConfig {
  int vocab_size = 30522;
  int hidden = 768;
  int layers = 12;
  int heads = 12;
  int intermediate = 3072;
  int max_positions = 512;
  int type_vocab = 2;
  double layer_norm_eps = 1e-12;
};

// Post-LayerNorm transformer encoder with the BERT parameterization.
// Linear weights are stored input-major (in x out) so that y = x W + b.
class Transformer {
 public:
  struct Output {
    std::vector<ag::Var> hidden;                   // [0] embeddings, [l] output of layer l
    std::vector<std::vector<ag::Matrix>> attention;  // [l-1][head], T x T, rows sum to 1
  };

  explicit Transformer(TransformerConfig config);

  static Transformer random(TransformerConfig config, std::uint64_t seed, double init_std);
  // Accepts Hugging Face BERT tensor names, with or without the "bert." prefix
  // and with either weight/bias or gamma/beta LayerNorm names.
  static Transformer from_tensors(TransformerConfig config, const TensorMap& tensors);

  Output forward(const std::vector<int>& ids, const std::vector<int>& type_ids) const;

  const TransformerConfig& config() const noexcept { return config_; }
  std::vector<std::pair<std::string, ag::Var>> named_parameters() const;
  void set_trainable(bool trainable);
  bool trainable() const noexcept { return trainable_; }

 private:
  struct Layer {
    ag::Var q_w, q_b, k_w, k_b, v_w, v_b, o_w, o_b;
    ag::Var ln1_g, ln1_b;
    ag::Var ff1_w, ff1_b, ff2_w, ff2_b;
    ag::Var ln2_g, ln2_b;
  };

  TransformerConfig config_;
  ag::Var word_emb_, pos_emb_, type_emb_, emb_ln_g_, emb_ln_b_;
  std::vector<Layer> layers_;
  bool trainable_ = false;
};

}  // namespace b4g::plmfeat
