#include "plmfeat/encoder.hpp"

#include <json.hpp>

#include <charconv>
#include <cstdlib>
#include <cstring>
#include <fstream>

#include "common/error.hpp"
#include "common/util.hpp"

namespace b4g::plmfeat {

EncoderBackend::EncoderBackend(std::string id, std::unique_ptr<SubwordTokenizer> tokenizer,
                               Transformer transformer)
    : id_(std::move(id)), tokenizer_(std::move(tokenizer)), transformer_(std::move(transformer)) {}

namespace {

std::unique_ptr<EncoderBackend> make_stub(std::string_view options) {
  TransformerConfig cfg;
  cfg.hidden = 32;
  cfg.layers = 12;
  cfg.heads = 4;
  cfg.intermediate = 64;
  cfg.vocab_size = 1024;
  cfg.max_positions = 512;
  cfg.layer_norm_eps = 1e-12;
  int piece_len = 4;
  std::uint64_t seed = 1234;
  double init_std = 0.2;

  for (const auto& item : split(options, ',')) {
    if (trim(item).empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) fail(ErrorKind::config, "stub encoder option '" + item + "' lacks '='");
    const std::string key = trim(item.substr(0, eq));
    const std::string value = trim(item.substr(eq + 1));
    auto as_int = [&]() {
      long long v = 0;
      auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
      if (ec != std::errc() || p != value.data() + value.size())
        fail(ErrorKind::config, "stub encoder option " + key + " needs an integer");
      return v;
    };
    if (key == "hidden") cfg.hidden = static_cast<int>(as_int());
    else if (key == "layers") cfg.layers = static_cast<int>(as_int());
    else if (key == "heads") cfg.heads = static_cast<int>(as_int());
    else if (key == "intermediate") cfg.intermediate = static_cast<int>(as_int());
    else if (key == "vocab") cfg.vocab_size = static_cast<int>(as_int());
    else if (key == "max_positions") cfg.max_positions = static_cast<int>(as_int());
    else if (key == "piece_len") piece_len = static_cast<int>(as_int());
    else if (key == "seed") seed = static_cast<std::uint64_t>(as_int());
    else if (key == "init_std") init_std = std::stod(value);
    else fail(ErrorKind::config, "unknown stub encoder option '" + key + "'");
  }
  auto tokenizer = std::make_unique<HashPieceTokenizer>(cfg.vocab_size, piece_len);
  auto transformer = Transformer::random(cfg, seed, init_std);
  const std::string id = "stub:hidden=" + std::to_string(cfg.hidden) + ",layers=" + std::to_string(cfg.layers) +
                         ",heads=" + std::to_string(cfg.heads) + ",intermediate=" +
                         std::to_string(cfg.intermediate) + ",vocab=" + std::to_string(cfg.vocab_size) +
                         ",max_positions=" + std::to_string(cfg.max_positions) + ",piece_len=" +
                         std::to_string(piece_len) + ",seed=" + std::to_string(seed) +
                         ",init_std=" + std::to_string(init_std);
  return std::make_unique<EncoderBackend>(id, std::move(tokenizer), std::move(transformer));
}

}  // namespace

std::unique_ptr<EncoderBackend> load_bert_directory(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) fail(ErrorKind::environment, "encoder directory " + dir.string() + " does not exist");
  nlohmann::json config;
  try {
    config = nlohmann::json::parse(read_file(dir / "config.json"));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format, (dir / "config.json").string() + ": " + e.what());
  }
  const std::string model_type = config.value("model_type", "bert");
  if (model_type != "bert")
    fail(ErrorKind::config, "encoder model_type '" + model_type +
                                "' is not supported; only BERT-architecture checkpoints load natively");
  const std::string act = config.value("hidden_act", "gelu");
  if (act != "gelu") fail(ErrorKind::config, "encoder activation '" + act + "' is not supported");

  TransformerConfig cfg;
  cfg.vocab_size = config.value("vocab_size", cfg.vocab_size);
  cfg.hidden = config.value("hidden_size", cfg.hidden);
  cfg.layers = config.value("num_hidden_layers", cfg.layers);
  cfg.heads = config.value("num_attention_heads", cfg.heads);
  cfg.intermediate = config.value("intermediate_size", cfg.intermediate);
  cfg.max_positions = config.value("max_position_embeddings", cfg.max_positions);
  cfg.type_vocab = config.value("type_vocab_size", cfg.type_vocab);
  cfg.layer_norm_eps = config.value("layer_norm_eps", cfg.layer_norm_eps);

  bool lower_case = true;
  if (fs::exists(dir / "tokenizer_config.json")) {
    auto tc = nlohmann::json::parse(read_file(dir / "tokenizer_config.json"), nullptr, false);
    if (!tc.is_discarded()) lower_case = tc.value("do_lower_case", true);
  }
  if (!fs::exists(dir / "model.safetensors"))
    fail(ErrorKind::environment, dir.string() + " has no model.safetensors (convert PyTorch weights with "
                                                "tools/convert_to_safetensors.py)");
  auto tensors = read_safetensors(dir / "model.safetensors");
  auto tokenizer = std::make_unique<WordPieceTokenizer>(WordPieceTokenizer::load(dir / "vocab.txt", lower_case));
  auto transformer = Transformer::from_tensors(cfg, tensors);
  return std::make_unique<EncoderBackend>("bert:" + fs::absolute(dir).lexically_normal().string(),
                                          std::move(tokenizer), std::move(transformer));
}

std::unique_ptr<EncoderBackend> make_encoder(std::string_view spec) {
  if (spec == "stub") return make_stub("");
  if (spec.rfind("stub:", 0) == 0) return make_stub(spec.substr(5));
  if (spec == "bert" || spec.rfind("bert:", 0) == 0) {
    std::string dir = spec.size() > 5 ? std::string(spec.substr(5)) : std::string();
    if (const char* env = std::getenv(kEncoderDirEnv); env && *env) dir = env;
    if (dir.empty())
      fail(ErrorKind::environment, std::string("bert encoder needs a weight directory (bert:<dir> or ") +
                                       kEncoderDirEnv + ")");
    return load_bert_directory(dir);
  }
  fail(ErrorKind::config, "unknown encoder spec '" + std::string(spec) + "' (expected stub[:opts] or bert:<dir>)");
}

ag::Matrix average_heads(std::span<const ag::Matrix> heads) {
  if (heads.empty()) fail(ErrorKind::value, "average_heads: no heads");
  ag::Matrix sum = heads.front();
  for (std::size_t h = 1; h < heads.size(); ++h) {
    if (heads[h].rows() != sum.rows() || heads[h].cols() != sum.cols())
      fail(ErrorKind::shape, "average_heads: heads differ in shape");
    sum += heads[h];
  }
  return sum / static_cast<double>(heads.size());
}

ag::Matrix word_attention(const ag::Matrix& avg, const depgraph::SubwordAlignment& alignment) {
  const auto n = static_cast<Eigen::Index>(alignment.groups.size());
  ag::Matrix out = ag::Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto row = static_cast<Eigen::Index>(alignment.first_subword[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < n; ++j) {
      double mass = 0.0;
      for (auto p : alignment.groups[static_cast<std::size_t>(j)]) mass += avg(row, static_cast<Eigen::Index>(p));
      out(i, j) = mass;
    }
  }
  return out;
}

void validate_layers(const std::vector<int>& layers, int available) {
  if (layers.empty()) fail(ErrorKind::config, "layer set is empty");
  for (int l : layers) {
    if (l < 1 || l > available)
      fail(ErrorKind::config, "encoder layer " + std::to_string(l) + " outside 1.." + std::to_string(available));
  }
}

depgraph::SubwordAlignment align_rendered(const EncoderBackend& encoder, const std::vector<std::string>& words,
                                          const RenderedInput& rendered) {
  const auto& tok = encoder.tokenizer();
  depgraph::AlignmentOptions opts;
  opts.cls_token = tok.cls_token();
  opts.sep_token = tok.sep_token();
  opts.unk_token = tok.unk_token();
  opts.continuation_prefix = tok.continuation_prefix();
  opts.normalize = [&tok](std::string_view w) { return tok.normalize(w); };
  opts.word_pieces = [&tok](std::string_view w) { return tok.word_pieces(w); };
  return depgraph::align_subwords(words, rendered.pieces, opts);
}

PlmFeatures encode(const EncoderBackend& encoder, const corpus::Instance& instance,
                   const depgraph::SubwordAlignment& alignment, const RenderedInput& rendered,
                   const std::vector<int>& layers) {
  validate_layers(layers, encoder.num_layers());
  Transformer::Output out;
  try {
    out = encoder.transformer().forward(rendered.ids, rendered.type_ids);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::truncation) throw;
    fail(ErrorKind::truncation, "instance " + instance.sentence_id + " (\"" + join(instance.tokens, " ") +
                                    "\"): " + e.what());
  }
  std::vector<Eigen::Index> first(alignment.first_subword.begin(), alignment.first_subword.end());
  PlmFeatures f;
  f.layers = layers;
  f.d_model = encoder.d_model();
  f.heads = encoder.num_heads();
  for (int l : layers) {
    f.hidden.push_back(ag::gather_rows(out.hidden[static_cast<std::size_t>(l)], first));
    const auto& heads = out.attention[static_cast<std::size_t>(l - 1)];
    f.attention.push_back(word_attention(average_heads(heads), alignment));
  }
  return f;
}

PlmFeatures encode(const EncoderBackend& encoder, const corpus::Instance& instance, const std::vector<int>& layers) {
  const auto rendered = render_pair(encoder.tokenizer(), instance.tokens, instance.aspect_tokens());
  const auto alignment = align_rendered(encoder, instance.tokens, rendered);
  return encode(encoder, instance, alignment, rendered, layers);
}

std::string FeatureCache::key(const corpus::Instance& instance, const std::string& backend_id,
                              const std::vector<int>& layers) {
  std::string k = hex64(hash_tokens(instance.tokens)) + "-" + std::to_string(instance.aspect_start) + "-" +
                  std::to_string(instance.aspect_len) + "-" + hex64(fnv1a64(backend_id)) + "-L";
  for (int l : layers) k += "_" + std::to_string(l);
  return k;
}

namespace {

constexpr char kMagic[8] = {'B', '4', 'G', 'F', 'E', 'A', 'T', '1'};

template <typename T>
void put(std::string& blob, const T& v) {
  blob.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(const std::string& blob, std::size_t& at) {
  if (at + sizeof(T) > blob.size()) fail(ErrorKind::format, "truncated feature cache entry");
  T v;
  std::memcpy(&v, blob.data() + at, sizeof(T));
  at += sizeof(T);
  return v;
}

void put_matrix(std::string& blob, const ag::Matrix& m) {
  put<std::int64_t>(blob, m.rows());
  put<std::int64_t>(blob, m.cols());
  blob.append(reinterpret_cast<const char*>(m.data()), static_cast<std::size_t>(m.size()) * sizeof(double));
}

ag::Matrix take_matrix(const std::string& blob, std::size_t& at) {
  const auto rows = take<std::int64_t>(blob, at);
  const auto cols = take<std::int64_t>(blob, at);
  const std::size_t bytes = static_cast<std::size_t>(rows * cols) * sizeof(double);
  if (rows < 0 || cols < 0 || at + bytes > blob.size()) fail(ErrorKind::format, "truncated feature cache entry");
  ag::Matrix m(rows, cols);
  std::memcpy(m.data(), blob.data() + at, bytes);
  at += bytes;
  return m;
}

}  // namespace

std::optional<PlmFeatures> FeatureCache::find(const std::string& key) {
  if (auto it = memory_.find(key); it != memory_.end()) {
    ++hits_;
    return it->second;
  }
  if (dir_) {
    const auto path = *dir_ / (key + ".feat");
    if (std::filesystem::exists(path)) {
      const std::string blob = read_file(path);
      std::size_t at = 0;
      if (blob.size() < sizeof(kMagic) || std::memcmp(blob.data(), kMagic, sizeof(kMagic)) != 0)
        fail(ErrorKind::format, path.string() + " is not a feature cache entry");
      at += sizeof(kMagic);
      PlmFeatures f;
      f.d_model = take<std::int32_t>(blob, at);
      f.heads = take<std::int32_t>(blob, at);
      const auto count = take<std::int32_t>(blob, at);
      for (std::int32_t i = 0; i < count; ++i) {
        f.layers.push_back(take<std::int32_t>(blob, at));
        f.hidden.push_back(ag::constant(take_matrix(blob, at)));
        f.attention.push_back(take_matrix(blob, at));
      }
      memory_.emplace(key, f);
      ++hits_;
      return f;
    }
  }
  ++misses_;
  return std::nullopt;
}

void FeatureCache::store(const std::string& key, const PlmFeatures& features) {
  PlmFeatures frozen;
  frozen.layers = features.layers;
  frozen.d_model = features.d_model;
  frozen.heads = features.heads;
  frozen.attention = features.attention;
  for (const auto& h : features.hidden) frozen.hidden.push_back(ag::constant(h.value()));
  if (dir_) {
    std::string blob(kMagic, sizeof(kMagic));
    put<std::int32_t>(blob, frozen.d_model);
    put<std::int32_t>(blob, frozen.heads);
    put<std::int32_t>(blob, static_cast<std::int32_t>(frozen.layers.size()));
    for (std::size_t i = 0; i < frozen.layers.size(); ++i) {
      put<std::int32_t>(blob, frozen.layers[i]);
      put_matrix(blob, frozen.hidden[i].value());
      put_matrix(blob, frozen.attention[i]);
    }
    write_file_atomic(*dir_ / (key + ".feat"), blob);
  }
  memory_.insert_or_assign(key, std::move(frozen));
}

}  // namespace b4g::plmfeat
