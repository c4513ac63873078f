#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "autograd/tape.hpp"
#include "corpus/corpus.hpp"
#include "depgraph/depgraph.hpp"
#include "plmfeat/tokenizer.hpp"
#include "plmfeat/transformer.hpp"

namespace b4g::plmfeat {

// Name of the environment variable that overrides the weight directory of a
// "bert" encoder spec.
inline constexpr const char* kEncoderDirEnv = "B4G_ENCODER_DIR";

class EncoderBackend {
 public:
  EncoderBackend(std::string id, std::unique_ptr<SubwordTokenizer> tokenizer, Transformer transformer);

  const std::string& id() const noexcept { return id_; }
  const SubwordTokenizer& tokenizer() const noexcept { return *tokenizer_; }
  const Transformer& transformer() const noexcept { return transformer_; }
  Transformer& transformer() noexcept { return transformer_; }

  int d_model() const noexcept { return transformer_.config().hidden; }
  int num_heads() const noexcept { return transformer_.config().heads; }
  int num_layers() const noexcept { return transformer_.config().layers; }

 private:
  std::string id_;
  std::unique_ptr<SubwordTokenizer> tokenizer_;
  Transformer transformer_;
};

// Encoder specs:
//   stub[:key=value,...]   random frozen transformer with a hashing tokenizer;
//                          keys hidden, layers, heads, intermediate, vocab,
//                          max_positions, piece_len, seed, init_std
//   bert:<dir>             BERT checkpoint directory with config.json,
//                          vocab.txt and model.safetensors
std::unique_ptr<EncoderBackend> make_encoder(std::string_view spec);

// Bundles a BERT-architecture weight directory.
std::unique_ptr<EncoderBackend> load_bert_directory(const std::filesystem::path& dir);

struct PlmFeatures {
  std::vector<int> layers;              // 1-based encoder layer numbers
  std::vector<ag::Var> hidden;          // per selected layer, n x d_model
  std::vector<ag::Matrix> attention;    // per selected layer, n x n
  int d_model = 0;
  int heads = 0;

  std::size_t n() const { return hidden.empty() ? 0 : static_cast<std::size_t>(hidden.front().rows()); }
};

// Elementwise mean over heads.
ag::Matrix average_heads(std::span<const ag::Matrix> heads);

// out(i, j) = sum over pieces p of word j of avg(first_subword(i), p).
// Delimiter and aspect-segment positions never contribute.
ag::Matrix word_attention(const ag::Matrix& avg, const depgraph::SubwordAlignment& alignment);

void validate_layers(const std::vector<int>& layers, int available);

depgraph::SubwordAlignment align_rendered(const EncoderBackend& encoder,
                                          const std::vector<std::string>& words,
                                          const RenderedInput& rendered);

// Runs the encoder on "[CLS] s [SEP] a [SEP]". Hidden rows are the states of
// each word's first sub-word and stay attached to the tape when the encoder
// is trainable.
PlmFeatures encode(const EncoderBackend& encoder, const corpus::Instance& instance,
                   const depgraph::SubwordAlignment& alignment, const RenderedInput& rendered,
                   const std::vector<int>& layers);
PlmFeatures encode(const EncoderBackend& encoder, const corpus::Instance& instance,
                   const std::vector<int>& layers);

// Features of a frozen encoder, kept in memory and optionally on disk under
// a key of (instance content, backend id, layer set).
class FeatureCache {
 public:
  explicit FeatureCache(std::optional<std::filesystem::path> dir = std::nullopt) : dir_(std::move(dir)) {}

  static std::string key(const corpus::Instance& instance, const std::string& backend_id,
                         const std::vector<int>& layers);

  std::optional<PlmFeatures> find(const std::string& key);
  void store(const std::string& key, const PlmFeatures& features);

  std::size_t hits() const noexcept { return hits_; }
  std::size_t misses() const noexcept { return misses_; }

 private:
  std::optional<std::filesystem::path> dir_;
  std::map<std::string, PlmFeatures> memory_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

}  // namespace b4g::plmfeat
