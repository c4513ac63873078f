#include <charconv>
#include <functional>
#include <sstream>

#include "common/error.hpp"
#include "harness/harness.hpp"

namespace b4g::harness {
namespace {

struct Field {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

[[noreturn]] void bad_value(const char* expected) { fail(ErrorKind::config, std::string("expected ") + expected); }

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& v) {
  double out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) bad_value("a number");
  return out;
}

long long parse_int(const std::string& v) {
  long long out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) bad_value("an integer");
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  bad_value("a boolean");
}

std::vector<int> parse_int_list(const std::string& v) {
  std::vector<int> out;
  for (const auto& part : split(v, ',')) {
    const std::string t = trim(part);
    if (t.empty()) continue;
    out.push_back(static_cast<int>(parse_int(t)));
  }
  return out;
}

std::string format_int_list(const std::vector<int>& v) {
  std::vector<std::string> parts;
  for (int x : v) parts.push_back(std::to_string(x));
  return join(parts, ",");
}

template <typename T>
Field string_field(T RunConfig::*member) {
  return {[member](const RunConfig& c) { return c.*member; },
          [member](RunConfig& c, const std::string& v) { c.*member = v; }};
}

template <typename T>
Field int_field(T RunConfig::*member) {
  return {[member](const RunConfig& c) { return std::to_string(c.*member); },
          [member](RunConfig& c, const std::string& v) {
            c.*member = static_cast<T>(parse_int(v));
          }};
}

Field double_field(double RunConfig::*member) {
  return {[member](const RunConfig& c) { return format_double(c.*member); },
          [member](RunConfig& c, const std::string& v) { c.*member = parse_double(v); }};
}

Field bool_field(bool RunConfig::*member) {
  return {[member](const RunConfig& c) { return std::string(c.*member ? "true" : "false"); },
          [member](RunConfig& c, const std::string& v) { c.*member = parse_bool(v); }};
}

Field list_field(std::vector<int> RunConfig::*member) {
  return {[member](const RunConfig& c) { return format_int_list(c.*member); },
          [member](RunConfig& c, const std::string& v) { c.*member = parse_int_list(v); }};
}

const std::map<std::string, Field>& registry() {
  static const std::map<std::string, Field> fields = {
      {"dataset", string_field(&RunConfig::dataset)},
      {"train_path", string_field(&RunConfig::train_path)},
      {"test_path", string_field(&RunConfig::test_path)},
      {"format", string_field(&RunConfig::format)},
      {"strict_alignment", bool_field(&RunConfig::strict_alignment)},
      {"vectors_path", string_field(&RunConfig::vectors_path)},
      {"word_dim", int_field(&RunConfig::word_dim)},
      {"oov_policy", string_field(&RunConfig::oov_policy)},
      {"parser", string_field(&RunConfig::parser)},
      {"cache_dir", string_field(&RunConfig::cache_dir)},
      {"encoder", string_field(&RunConfig::encoder)},
      {"finetune_encoder", bool_field(&RunConfig::finetune_encoder)},
      {"layers", list_field(&RunConfig::layers)},
      {"alpha", double_field(&RunConfig::alpha)},
      {"beta", double_field(&RunConfig::beta)},
      {"window", int_field(&RunConfig::window)},
      {"lambda", double_field(&RunConfig::lambda)},
      {"hidden", int_field(&RunConfig::hidden)},
      {"batch_size", int_field(&RunConfig::batch_size)},
      {"epochs", int_field(&RunConfig::epochs)},
      {"patience", int_field(&RunConfig::patience)},
      {"warmup", double_field(&RunConfig::warmup)},
      {"lr_encoder", double_field(&RunConfig::lr_encoder)},
      {"lr_head", double_field(&RunConfig::lr_head)},
      {"dropout", double_field(&RunConfig::dropout)},
      {"seed", int_field(&RunConfig::seed)},
      {"folds", int_field(&RunConfig::folds)},
      {"use_position", bool_field(&RunConfig::use_position)},
      {"use_attention_graph", bool_field(&RunConfig::use_attention_graph)},
      {"sweep_windows", list_field(&RunConfig::sweep_windows)},
      {"output_dir", string_field(&RunConfig::output_dir)},
  };
  return fields;
}

const Field& lookup(const std::string& key) {
  auto it = registry().find(key);
  if (it == registry().end()) fail(ErrorKind::config, "unknown config key '" + key + "'");
  return it->second;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  const Field& f = lookup(key);
  try {
    f.set(*this, trim(value));
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::config) throw;
    fail(ErrorKind::config, "config key '" + key + "': '" + trim(value) + "' is invalid, " + e.what());
  }
}

std::string RunConfig::get(const std::string& key) const { return lookup(key).get(*this); }

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& [k, f] : registry()) out.push_back(k);
  return out;
}

void RunConfig::apply(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) fail(ErrorKind::config, "expected key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    try {
      apply(line);
    } catch (const Error& e) {
      fail(e.kind(), path.string() + ":" + std::to_string(number) + ": " + e.what());
    }
  }
}

std::string RunConfig::serialize() const {
  std::string out;
  for (const auto& [k, f] : registry()) out += k + "=" + f.get(*this) + "\n";
  return out;
}

std::string RunConfig::hash() const {
  std::string canonical;
  for (const auto& [k, f] : registry()) {
    if (k == "output_dir" || k == "cache_dir") continue;
    canonical += k + "=" + f.get(*this) + "\n";
  }
  return hex64(fnv1a64(canonical));
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, f] : registry()) j[k] = f.get(*this);
  return j;
}

corpus::DatasetId RunConfig::dataset_id() const {
  auto id = corpus::parse_dataset_id(dataset);
  if (!id) fail(ErrorKind::config, "unknown dataset '" + dataset + "' (twitter, laptop, restaurant, custom)");
  return *id;
}

int default_window(corpus::DatasetId id) noexcept {
  switch (id) {
    case corpus::DatasetId::twitter: return 2;
    case corpus::DatasetId::laptop: return 3;
    case corpus::DatasetId::restaurant: return 5;
    case corpus::DatasetId::custom: return 3;
  }
  return 3;
}

int RunConfig::resolved_window() const { return window < 0 ? default_window(dataset_id()) : window; }

model::ModelConfig RunConfig::model_config(int word_dim_, int encoder_dim) const {
  model::ModelConfig m;
  m.word_dim = word_dim_;
  m.hidden = hidden;
  m.encoder_dim = encoder_dim;
  m.layers = layers;
  m.window = resolved_window();
  m.alpha = alpha;
  m.beta = beta;
  m.dropout = dropout;
  m.use_position = use_position;
  m.use_attention_graph = use_attention_graph;
  m.validate();
  return m;
}

void RunConfig::validate() const {
  dataset_id();
  if (format != "auto" && !corpus::parse_file_format(format))
    fail(ErrorKind::config, "unknown format '" + format + "' (auto, semeval_xml, twitter_lines)");
  if (!corpus::parse_oov_policy(oov_policy))
    fail(ErrorKind::config, "unknown oov_policy '" + oov_policy + "' (zeros, uniform_init)");
  if (word_dim < 0) fail(ErrorKind::config, "word_dim must be non-negative");
  if (layers.empty()) fail(ErrorKind::config, "layers must list at least one encoder layer");
  if (hidden <= 0) fail(ErrorKind::config, "hidden must be positive");
  if (batch_size <= 0) fail(ErrorKind::config, "batch_size must be positive");
  if (epochs < 0 || patience < 0) fail(ErrorKind::config, "epochs and patience must be non-negative");
  if (!(warmup >= 0.0 && warmup <= 1.0)) fail(ErrorKind::config, "warmup must lie in [0, 1]");
  if (lr_encoder < 0 || lr_head < 0) fail(ErrorKind::config, "learning rates must be non-negative");
  if (lambda < 0) fail(ErrorKind::config, "lambda must be non-negative");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail(ErrorKind::config, "dropout must lie in [0, 1)");
  if (folds < 2) fail(ErrorKind::config, "folds must be at least 2");
  graphsup::validate_thresholds(alpha, beta);
}

}  // namespace b4g::harness
