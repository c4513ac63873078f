#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace b4g::corpus {

// Class order is fixed: index 0/1/2 is used by the classifier and metrics.
enum class Label : int { positive = 0, neutral = 1, negative = 2 };
inline constexpr int kNumLabels = 3;

const char* to_string(Label label) noexcept;
std::optional<Label> parse_label(std::string_view text) noexcept;

enum class DatasetId { twitter, laptop, restaurant, custom };

const char* to_string(DatasetId id) noexcept;
std::optional<DatasetId> parse_dataset_id(std::string_view text) noexcept;

struct Instance {
  std::vector<std::string> tokens;
  std::size_t aspect_start = 0;
  std::size_t aspect_len = 1;
  Label label = Label::neutral;
  DatasetId dataset = DatasetId::custom;
  std::string sentence_id;

  std::size_t size() const noexcept { return tokens.size(); }
  std::vector<std::string> aspect_tokens() const;
};

// Throws value error if the span is empty or out of range.
void validate(const Instance& instance);

// Word-level tokenization of raw sentence text with byte spans.
struct SpanToken {
  std::string text;
  std::size_t begin = 0;  // byte offsets into the source string
  std::size_t end = 0;
};
std::vector<SpanToken> tokenize_with_spans(std::string_view text);
inline constexpr const char* kTokenizerName = "punct-split-v1";

struct SemevalOptions {
  DatasetId dataset = DatasetId::custom;
  // When false, aspect offsets that fall inside a token snap to the covering
  // token with a warning; when true they are an alignment error.
  bool strict_alignment = false;
};

std::vector<Instance> load_semeval(const std::filesystem::path& path, SemevalOptions options = {});
std::vector<Instance> parse_semeval(std::string_view xml, SemevalOptions options = {});

std::vector<Instance> load_twitter(const std::filesystem::path& path,
                                   DatasetId dataset = DatasetId::twitter);
std::vector<Instance> parse_twitter(std::string_view text, DatasetId dataset = DatasetId::twitter);

enum class FileFormat { semeval_xml, twitter_lines };
std::optional<FileFormat> parse_file_format(std::string_view text) noexcept;
FileFormat default_format(DatasetId id, const std::filesystem::path& path);
std::vector<Instance> load_dataset(const std::filesystem::path& path, FileFormat format,
                                   DatasetId dataset, bool strict_alignment = false);

struct LabelCounts {
  std::array<std::size_t, kNumLabels> by_label{};
  std::size_t total() const noexcept { return by_label[0] + by_label[1] + by_label[2]; }
  std::size_t operator[](Label label) const noexcept {
    return by_label[static_cast<std::size_t>(label)];
  }
};
LabelCounts count_labels(const std::vector<Instance>& data);

struct StatsRow {
  std::string dataset;
  std::string split;
  LabelCounts counts;
};
std::string format_stats_tsv(const std::vector<StatsRow>& rows);

enum class OovPolicy { zeros, uniform_init };
std::optional<OovPolicy> parse_oov_policy(std::string_view text) noexcept;
const char* to_string(OovPolicy policy) noexcept;

class WordVectorTable {
 public:
  WordVectorTable(int dim, OovPolicy policy = OovPolicy::uniform_init, std::uint64_t seed = 0);

  // Reads whitespace-separated "token v1 ... vd" lines. dim = 0 infers the
  // width from the first line. When `keep` is given, other tokens are skipped.
  static WordVectorTable load_text(const std::filesystem::path& path, int dim, OovPolicy policy,
                                   std::uint64_t seed,
                                   const std::unordered_set<std::string>* keep = nullptr);

  int dim() const noexcept { return dim_; }
  OovPolicy oov_policy() const noexcept { return policy_; }
  std::size_t size() const noexcept { return entries_.size(); }

  void insert(std::string token, Eigen::RowVectorXd vector);
  bool contains(const std::string& token) const;
  // Stored vector (exact match first, then lower-cased) or the OOV vector.
  Eigen::RowVectorXd lookup(const std::string& token) const;
  // n x dim; row t is lookup(tokens[t]).
  Eigen::MatrixXd embed(const std::vector<std::string>& tokens) const;

 private:
  // Uniform in [-0.25, 0.25], a pure function of (seed, token) so that
  // evaluation sees the same OOV vectors as training.
  Eigen::RowVectorXd oov_vector(const std::string& token) const;

  int dim_;
  OovPolicy policy_;
  std::uint64_t seed_;
  std::unordered_map<std::string, Eigen::RowVectorXd> entries_;
};

std::unordered_set<std::string> vocabulary(const std::vector<Instance>& data);

struct FoldPlan {
  int k = 10;
  std::uint64_t seed = 0;
  std::vector<int> assignments;  // per instance, in dataset order

  std::vector<std::size_t> members(int fold) const;
  std::vector<std::size_t> complement(int fold) const;
  std::vector<std::size_t> sizes() const;
};

// Deterministic shuffled partition: same (n, k, seed) gives identical plans.
FoldPlan make_folds(std::size_t count, int k, std::uint64_t seed);
inline FoldPlan make_folds(const std::vector<Instance>& data, int k, std::uint64_t seed) {
  return make_folds(data.size(), k, seed);
}

}  // namespace b4g::corpus
