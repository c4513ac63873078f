#include "plmfeat/transformer.hpp"

#include <cmath>

#include "common/error.hpp"
#include "common/util.hpp"

namespace b4g::plmfeat {
namespace {

ag::Var zeros(int rows, int cols) { return ag::constant(ag::Matrix::Zero(rows, cols)); }
ag::Var ones_row(int cols) { return ag::constant(ag::Matrix::Ones(1, cols)); }

ag::Var linear(const ag::Var& x, const ag::Var& w, const ag::Var& b) {
  return ag::add_row(ag::matmul(x, w), b);
}

}  // namespace

Transformer::Transformer(TransformerConfig config) : config_(config) {
  const auto& c = config_;
  if (c.hidden <= 0 || c.heads <= 0 || c.hidden % c.heads != 0)
    fail(ErrorKind::config, "transformer hidden size must be a positive multiple of the head count");
  if (c.layers <= 0 || c.vocab_size <= 0 || c.max_positions <= 0 || c.type_vocab <= 0 || c.intermediate <= 0)
    fail(ErrorKind::config, "transformer dimensions must be positive");
  word_emb_ = zeros(c.vocab_size, c.hidden);
  pos_emb_ = zeros(c.max_positions, c.hidden);
  type_emb_ = zeros(c.type_vocab, c.hidden);
  emb_ln_g_ = ones_row(c.hidden);
  emb_ln_b_ = zeros(1, c.hidden);
  layers_.resize(static_cast<std::size_t>(c.layers));
  for (auto& l : layers_) {
    l.q_w = zeros(c.hidden, c.hidden);
    l.k_w = zeros(c.hidden, c.hidden);
    l.v_w = zeros(c.hidden, c.hidden);
    l.o_w = zeros(c.hidden, c.hidden);
    l.q_b = zeros(1, c.hidden);
    l.k_b = zeros(1, c.hidden);
    l.v_b = zeros(1, c.hidden);
    l.o_b = zeros(1, c.hidden);
    l.ln1_g = ones_row(c.hidden);
    l.ln1_b = zeros(1, c.hidden);
    l.ff1_w = zeros(c.hidden, c.intermediate);
    l.ff1_b = zeros(1, c.intermediate);
    l.ff2_w = zeros(c.intermediate, c.hidden);
    l.ff2_b = zeros(1, c.hidden);
    l.ln2_g = ones_row(c.hidden);
    l.ln2_b = zeros(1, c.hidden);
  }
}

std::vector<std::pair<std::string, ag::Var>> Transformer::named_parameters() const {
  std::vector<std::pair<std::string, ag::Var>> out = {
      {"embeddings.word_embeddings.weight", word_emb_},
      {"embeddings.position_embeddings.weight", pos_emb_},
      {"embeddings.token_type_embeddings.weight", type_emb_},
      {"embeddings.LayerNorm.weight", emb_ln_g_},
      {"embeddings.LayerNorm.bias", emb_ln_b_},
  };
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    const std::string p = "encoder.layer." + std::to_string(i) + ".";
    out.insert(out.end(), {
                              {p + "attention.self.query.weight", l.q_w},
                              {p + "attention.self.query.bias", l.q_b},
                              {p + "attention.self.key.weight", l.k_w},
                              {p + "attention.self.key.bias", l.k_b},
                              {p + "attention.self.value.weight", l.v_w},
                              {p + "attention.self.value.bias", l.v_b},
                              {p + "attention.output.dense.weight", l.o_w},
                              {p + "attention.output.dense.bias", l.o_b},
                              {p + "attention.output.LayerNorm.weight", l.ln1_g},
                              {p + "attention.output.LayerNorm.bias", l.ln1_b},
                              {p + "intermediate.dense.weight", l.ff1_w},
                              {p + "intermediate.dense.bias", l.ff1_b},
                              {p + "output.dense.weight", l.ff2_w},
                              {p + "output.dense.bias", l.ff2_b},
                              {p + "output.LayerNorm.weight", l.ln2_g},
                              {p + "output.LayerNorm.bias", l.ln2_b},
                          });
  }
  return out;
}

void Transformer::set_trainable(bool trainable) {
  trainable_ = trainable;
  for (auto& [name, var] : named_parameters()) {
    auto v = var;
    v.set_requires_grad(trainable);
  }
}

Transformer Transformer::random(TransformerConfig config, std::uint64_t seed, double init_std) {
  Transformer t(config);
  Rng rng(seed);
  for (auto& [name, var] : t.named_parameters()) {
    auto v = var;
    if (name.find("LayerNorm") != std::string::npos) continue;
    if (name.size() > 5 && name.compare(name.size() - 5, 5, ".bias") == 0) continue;
    auto& m = v.mutable_value();
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = init_std * rng.normal();
  }
  return t;
}

Transformer Transformer::from_tensors(TransformerConfig config, const TensorMap& tensors) {
  Transformer t(config);
  auto find = [&](const std::string& name) -> const Tensor* {
    for (const std::string& prefix : {std::string(), std::string("bert.")}) {
      if (auto it = tensors.find(prefix + name); it != tensors.end()) return &it->second;
    }
    return nullptr;
  };
  for (auto& [name, var] : t.named_parameters()) {
    const Tensor* src = find(name);
    if (!src && name.find("LayerNorm") != std::string::npos) {
      std::string alt = name;
      if (alt.ends_with(".weight")) alt.replace(alt.size() - 6, 6, "gamma");
      else if (alt.ends_with(".bias")) alt.replace(alt.size() - 4, 4, "beta");
      src = find(alt);
    }
    if (!src) fail(ErrorKind::format, "encoder weights lack tensor '" + name + "'");
    auto v = var;
    auto& m = v.mutable_value();
    const bool is_linear_weight = name.ends_with(".weight") && name.find("LayerNorm") == std::string::npos &&
                                  name.find("embeddings") == std::string::npos;
    const auto expected = static_cast<std::size_t>(m.size());
    if (src->data.size() != expected)
      fail(ErrorKind::shape, "tensor '" + name + "' has " + std::to_string(src->data.size()) +
                                 " values, expected " + std::to_string(expected));
    if (is_linear_weight) {
      // Stored out x in, row-major; we keep in x out.
      const Eigen::Index out_dim = m.cols(), in_dim = m.rows();
      if (src->shape.size() != 2 || src->shape[0] != out_dim || src->shape[1] != in_dim)
        fail(ErrorKind::shape, "tensor '" + name + "' has an unexpected shape");
      for (Eigen::Index o = 0; o < out_dim; ++o)
        for (Eigen::Index i = 0; i < in_dim; ++i)
          m(i, o) = src->data[static_cast<std::size_t>(o * in_dim + i)];
    } else {
      for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c)
          m(r, c) = src->data[static_cast<std::size_t>(r * m.cols() + c)];
    }
  }
  return t;
}

Transformer::Output Transformer::forward(const std::vector<int>& ids, const std::vector<int>& type_ids) const {
  const auto& c = config_;
  const auto T = static_cast<Eigen::Index>(ids.size());
  if (T == 0) fail(ErrorKind::value, "transformer input is empty");
  if (T > c.max_positions)
    fail(ErrorKind::truncation, "sequence of " + std::to_string(T) + " pieces exceeds the encoder maximum of " +
                                    std::to_string(c.max_positions));
  if (type_ids.size() != ids.size()) fail(ErrorKind::shape, "type_ids and ids differ in length");

  std::vector<Eigen::Index> tok(ids.begin(), ids.end()), typ(type_ids.begin(), type_ids.end()), pos(ids.size());
  for (Eigen::Index i = 0; i < T; ++i) {
    pos[static_cast<std::size_t>(i)] = i;
    if (tok[static_cast<std::size_t>(i)] < 0 || tok[static_cast<std::size_t>(i)] >= c.vocab_size)
      fail(ErrorKind::index, "token id " + std::to_string(tok[static_cast<std::size_t>(i)]) + " outside the vocabulary");
    if (typ[static_cast<std::size_t>(i)] < 0 || typ[static_cast<std::size_t>(i)] >= c.type_vocab)
      fail(ErrorKind::index, "token type id outside the type vocabulary");
  }

  Output out;
  ag::Var x = ag::add(ag::add(ag::gather_rows(word_emb_, tok), ag::gather_rows(pos_emb_, pos)),
                      ag::gather_rows(type_emb_, typ));
  x = ag::layer_norm_rows(x, emb_ln_g_, emb_ln_b_, c.layer_norm_eps);
  out.hidden.push_back(x);

  const int head_dim = c.hidden / c.heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  for (const auto& l : layers_) {
    ag::Var q = linear(x, l.q_w, l.q_b);
    ag::Var k = linear(x, l.k_w, l.k_b);
    ag::Var v = linear(x, l.v_w, l.v_b);
    std::vector<ag::Var> contexts;
    std::vector<ag::Matrix> probs_per_head;
    for (int h = 0; h < c.heads; ++h) {
      ag::Var qh = ag::slice_cols(q, h * head_dim, head_dim);
      ag::Var kh = ag::slice_cols(k, h * head_dim, head_dim);
      ag::Var vh = ag::slice_cols(v, h * head_dim, head_dim);
      ag::Var probs = ag::softmax_rows(ag::scale(ag::matmul(qh, ag::transpose(kh)), inv_sqrt));
      probs_per_head.push_back(probs.value());
      contexts.push_back(ag::matmul(probs, vh));
    }
    out.attention.push_back(std::move(probs_per_head));
    ag::Var attn = linear(ag::concat_cols(contexts), l.o_w, l.o_b);
    x = ag::layer_norm_rows(ag::add(attn, x), l.ln1_g, l.ln1_b, c.layer_norm_eps);
    ag::Var ff = linear(ag::gelu(linear(x, l.ff1_w, l.ff1_b)), l.ff2_w, l.ff2_b);
    x = ag::layer_norm_rows(ag::add(ff, x), l.ln2_g, l.ln2_b, c.layer_norm_eps);
    out.hidden.push_back(x);
  }
  return out;
}

}  // namespace b4g::plmfeat
