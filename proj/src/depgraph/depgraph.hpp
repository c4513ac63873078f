#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace b4g::depgraph {

inline constexpr int kRoot = -1;
// heads[t] is the 0-based head of token t, or kRoot.
using Heads = std::vector<int>;

using Adjacency = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

struct DepGraph {
  Adjacency adjacency;
  std::size_t n = 0;
};

// Bidirectional edges for every non-root head link plus a self-loop on every
// node. The root gets no extra edge beyond its self-loop.
DepGraph to_adjacency(const Heads& heads, std::size_t n);

// Throws value error unless heads form one tree: exactly one root, in-range
// indices, no cycles.
void validate_tree(const Heads& heads);

// TSV columns: sentence_hash, token_index, token, head_index.
class ParseCache {
 public:
  ParseCache() = default;
  static ParseCache load(const std::filesystem::path& path);  // missing file -> empty cache
  void save(const std::filesystem::path& path) const;          // atomic

  std::optional<Heads> find(const std::vector<std::string>& tokens) const;
  void insert(const std::vector<std::string>& tokens, Heads heads);
  std::size_t size() const noexcept { return entries_.size(); }

 private:
  struct Entry {
    std::vector<std::string> tokens;
    Heads heads;
  };
  std::unordered_map<std::uint64_t, Entry> entries_;
};

// Adapter to an external dependency parser.
class DependencyParser {
 public:
  virtual ~DependencyParser() = default;
  virtual std::vector<Heads> parse_batch(const std::vector<std::vector<std::string>>& sentences) = 0;
  virtual std::string id() const = 0;
};

// Runs a shell command once per batch. The command reads one sentence per
// line (tokens joined by single spaces) on stdin and writes one line per
// sentence of space-separated 0-based head indices, -1 for the root.
class CommandParser final : public DependencyParser {
 public:
  explicit CommandParser(std::string command) : command_(std::move(command)) {}
  std::vector<Heads> parse_batch(const std::vector<std::vector<std::string>>& sentences) override;
  std::string id() const override { return "cmd:" + command_; }

 private:
  std::string command_;
};

// "cache" -> no parser (cache only); "cmd:<command>" -> CommandParser.
std::unique_ptr<DependencyParser> make_parser(std::string_view spec);

// Cache-first parsing. Misses go to the backend in one batch; with no backend
// a miss is an environment error.
class CachedParser {
 public:
  CachedParser(ParseCache cache, std::unique_ptr<DependencyParser> backend)
      : cache_(std::move(cache)), backend_(std::move(backend)) {}

  Heads parse(const std::vector<std::string>& tokens);
  std::vector<Heads> parse_all(const std::vector<std::vector<std::string>>& sentences);

  const ParseCache& cache() const noexcept { return cache_; }
  std::size_t backend_calls() const noexcept { return backend_calls_; }

 private:
  ParseCache cache_;
  std::unique_ptr<DependencyParser> backend_;
  std::size_t backend_calls_ = 0;
};

struct SubwordAlignment {
  std::vector<std::size_t> first_subword;          // per word
  std::vector<std::vector<std::size_t>> groups;    // per word, ascending
  std::vector<std::size_t> special_positions;      // ascending
  std::size_t sequence_length = 0;
};

struct AlignmentOptions {
  std::string cls_token = "[CLS]";
  std::string sep_token = "[SEP]";
  std::string unk_token = "[UNK]";
  std::string continuation_prefix = "##";
  // Applied to each word before matching; must match the tokenizer's own
  // normalization (lower-casing, accent stripping).
  std::function<std::string(std::string_view)> normalize;
  // When set, each word must be followed by exactly these pieces. This is
  // the tokenizer's own per-word split and stays exact around [UNK] pieces,
  // which text matching cannot place.
  std::function<std::vector<std::string>(std::string_view)> word_pieces;
};

// Groups the pieces of "[CLS] s [SEP] a [SEP]" back into the words of s.
SubwordAlignment align_subwords(const std::vector<std::string>& words,
                                const std::vector<std::string>& pieces,
                                const AlignmentOptions& options = {});

}  // namespace b4g::depgraph
