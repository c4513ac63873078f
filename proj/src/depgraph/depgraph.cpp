#include "depgraph/depgraph.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "common/error.hpp"
#include "common/util.hpp"

namespace b4g::depgraph {

DepGraph to_adjacency(const Heads& heads, std::size_t n) {
  if (heads.size() != n)
    fail(ErrorKind::value, "to_adjacency: " + std::to_string(heads.size()) + " heads for " +
                               std::to_string(n) + " tokens");
  DepGraph g;
  g.n = n;
  const auto size = static_cast<Eigen::Index>(n);
  g.adjacency = Adjacency::Zero(size, size);
  for (Eigen::Index i = 0; i < size; ++i) {
    g.adjacency(i, i) = 1;
    const int h = heads[static_cast<std::size_t>(i)];
    if (h == kRoot) continue;
    if (h < 0 || h >= static_cast<int>(n))
      fail(ErrorKind::value, "to_adjacency: head " + std::to_string(h) + " of token " +
                                 std::to_string(i) + " is out of range");
    g.adjacency(i, h) = 1;
    g.adjacency(h, i) = 1;
  }
  return g;
}

void validate_tree(const Heads& heads) {
  const int n = static_cast<int>(heads.size());
  int roots = 0;
  for (int i = 0; i < n; ++i) {
    const int h = heads[static_cast<std::size_t>(i)];
    if (h == kRoot) {
      ++roots;
    } else if (h < 0 || h >= n || h == i) {
      fail(ErrorKind::value, "token " + std::to_string(i) + " has invalid head " + std::to_string(h));
    }
  }
  if (roots != 1) fail(ErrorKind::value, "expected exactly one root, found " + std::to_string(roots));
  for (int i = 0; i < n; ++i) {
    int at = i;
    for (int steps = 0; at != kRoot; ++steps) {
      if (steps > n) fail(ErrorKind::value, "cycle through token " + std::to_string(i));
      at = heads[static_cast<std::size_t>(at)];
    }
  }
}

ParseCache ParseCache::load(const std::filesystem::path& path) {
  ParseCache cache;
  if (!std::filesystem::exists(path)) return cache;
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open parse cache " + path.string());
  std::string line;
  std::size_t line_no = 0;
  std::unordered_map<std::uint64_t, Entry> partial;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    auto cols = split(line, '\t');
    if (cols.size() != 4)
      fail(ErrorKind::format, path.string() + ":" + std::to_string(line_no) + ": expected 4 columns");
    if (cols[0] == "sentence_hash") continue;
    std::uint64_t key = 0;
    std::size_t index = 0;
    int head = 0;
    auto bad = [&](const char* what) {
      fail(ErrorKind::format, path.string() + ":" + std::to_string(line_no) + ": bad " + what);
    };
    if (std::from_chars(cols[0].data(), cols[0].data() + cols[0].size(), key, 16).ec != std::errc())
      bad("sentence_hash");
    if (std::from_chars(cols[1].data(), cols[1].data() + cols[1].size(), index).ec != std::errc())
      bad("token_index");
    if (std::from_chars(cols[3].data(), cols[3].data() + cols[3].size(), head).ec != std::errc())
      bad("head_index");
    auto& e = partial[key];
    if (index != e.tokens.size()) bad("token_index order");
    e.tokens.push_back(cols[2]);
    e.heads.push_back(head);
  }
  for (auto& [key, e] : partial) {
    if (hash_tokens(e.tokens) != key)
      fail(ErrorKind::format, path.string() + ": tokens of sentence " + hex64(key) +
                                  " do not match its hash");
    cache.entries_.emplace(key, std::move(e));
  }
  return cache;
}

void ParseCache::save(const std::filesystem::path& path) const {
  std::vector<std::uint64_t> keys;
  keys.reserve(entries_.size());
  for (const auto& kv : entries_) keys.push_back(kv.first);
  std::sort(keys.begin(), keys.end());
  std::ostringstream out;
  out << "sentence_hash\ttoken_index\ttoken\thead_index\n";
  for (auto key : keys) {
    const auto& e = entries_.at(key);
    for (std::size_t t = 0; t < e.tokens.size(); ++t)
      out << hex64(key) << '\t' << t << '\t' << e.tokens[t] << '\t' << e.heads[t] << '\n';
  }
  write_file_atomic(path, out.str());
}

std::optional<Heads> ParseCache::find(const std::vector<std::string>& tokens) const {
  auto it = entries_.find(hash_tokens(tokens));
  if (it == entries_.end() || it->second.tokens != tokens) return std::nullopt;
  return it->second.heads;
}

void ParseCache::insert(const std::vector<std::string>& tokens, Heads heads) {
  if (heads.size() != tokens.size())
    fail(ErrorKind::value, "parse cache: head count does not match token count");
  for (const auto& t : tokens) {
    if (t.find_first_of("\t\n") != std::string::npos)
      fail(ErrorKind::value, "parse cache: token contains a tab or newline");
  }
  entries_.insert_or_assign(hash_tokens(tokens), Entry{tokens, std::move(heads)});
}

namespace {

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out += c;
  }
  return out + "'";
}

}  // namespace

std::vector<Heads> CommandParser::parse_batch(const std::vector<std::vector<std::string>>& sentences) {
  namespace fs = std::filesystem;
  const auto stamp = hex64(fnv1a64(command_) ^ reinterpret_cast<std::uintptr_t>(this) ^
                           static_cast<std::uint64_t>(std::rand()));
  const fs::path dir = fs::temp_directory_path() / ("b4g-parse-" + stamp);
  fs::create_directories(dir);
  const fs::path in_path = dir / "input.txt";
  const fs::path out_path = dir / "heads.txt";
  {
    std::ofstream in(in_path);
    for (const auto& s : sentences) in << join(s, " ") << '\n';
  }
  const std::string cmd = "(" + command_ + ") < " + shell_quote(in_path.string()) + " > " +
                          shell_quote(out_path.string());
  const int rc = std::system(cmd.c_str());
  std::vector<Heads> result;
  std::string failure;
  if (rc != 0) {
    failure = "parser command exited with status " + std::to_string(rc) + ": " + command_;
  } else {
    std::ifstream out(out_path);
    std::string line;
    while (std::getline(out, line)) {
      Heads heads;
      for (const auto& field : split_whitespace(line)) {
        int h = 0;
        if (std::from_chars(field.data(), field.data() + field.size(), h).ec != std::errc()) {
          failure = "parser output is not an integer: '" + field + "'";
          break;
        }
        heads.push_back(h);
      }
      if (!failure.empty()) break;
      result.push_back(std::move(heads));
    }
    if (failure.empty() && result.size() != sentences.size())
      failure = "parser returned " + std::to_string(result.size()) + " lines for " +
                std::to_string(sentences.size()) + " sentences";
    for (std::size_t i = 0; failure.empty() && i < result.size(); ++i) {
      if (result[i].size() != sentences[i].size())
        failure = "parser returned " + std::to_string(result[i].size()) + " heads for sentence " +
                  std::to_string(i) + " with " + std::to_string(sentences[i].size()) + " tokens";
    }
  }
  std::error_code ec;
  fs::remove_all(dir, ec);
  if (!failure.empty()) fail(ErrorKind::environment, failure);
  return result;
}

std::unique_ptr<DependencyParser> make_parser(std::string_view spec) {
  if (spec.empty() || spec == "cache" || spec == "none") return nullptr;
  if (spec.rfind("cmd:", 0) == 0) return std::make_unique<CommandParser>(std::string(spec.substr(4)));
  fail(ErrorKind::config, "unknown parser spec '" + std::string(spec) + "' (expected cache or cmd:<command>)");
}

Heads CachedParser::parse(const std::vector<std::string>& tokens) {
  return parse_all({tokens}).front();
}

std::vector<Heads> CachedParser::parse_all(const std::vector<std::vector<std::string>>& sentences) {
  std::vector<Heads> out(sentences.size());
  std::vector<std::size_t> missing;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    if (sentences[i].size() == 1) {
      out[i] = {kRoot};
    } else if (auto hit = cache_.find(sentences[i])) {
      out[i] = std::move(*hit);
    } else {
      missing.push_back(i);
    }
  }
  if (missing.empty()) return out;
  if (!backend_)
    fail(ErrorKind::environment, "no dependency parser configured and " + std::to_string(missing.size()) +
                                     " sentence(s) are not in the parse cache, e.g. \"" +
                                     join(sentences[missing.front()], " ") + "\"");
  std::vector<std::vector<std::string>> batch;
  batch.reserve(missing.size());
  for (auto i : missing) batch.push_back(sentences[i]);
  ++backend_calls_;
  auto parsed = backend_->parse_batch(batch);
  for (std::size_t k = 0; k < missing.size(); ++k) {
    cache_.insert(batch[k], parsed[k]);
    out[missing[k]] = std::move(parsed[k]);
  }
  return out;
}

SubwordAlignment align_subwords(const std::vector<std::string>& words,
                                const std::vector<std::string>& pieces,
                                const AlignmentOptions& options) {
  SubwordAlignment out;
  out.sequence_length = pieces.size();
  if (pieces.empty() || pieces.front() != options.cls_token)
    fail(ErrorKind::alignment, "piece sequence does not start with " + options.cls_token);
  out.special_positions.push_back(0);

  auto piece_text = [&](const std::string& p) -> std::string_view {
    std::string_view v(p);
    if (!options.continuation_prefix.empty() && v.rfind(options.continuation_prefix, 0) == 0)
      v.remove_prefix(options.continuation_prefix.size());
    return v;
  };

  std::size_t pos = 1;
  for (const auto& word : words) {
    if (options.word_pieces) {
      const auto expected = options.word_pieces(word);
      std::vector<std::size_t> group;
      for (const auto& piece : expected) {
        if (pos >= pieces.size() || pieces[pos] != piece)
          fail(ErrorKind::alignment, "cannot align word '" + word + "': expected piece '" + piece +
                                         "' at position " + std::to_string(pos));
        group.push_back(pos++);
      }
      if (group.empty()) fail(ErrorKind::alignment, "word '" + word + "' produced no pieces");
      out.first_subword.push_back(group.front());
      out.groups.push_back(std::move(group));
      continue;
    }
    std::string target = options.normalize ? options.normalize(word) : word;
    std::erase_if(target, [](char c) { return c == ' ' || c == '\t'; });
    std::vector<std::size_t> group;
    std::string built;
    while (true) {
      if (!group.empty() && built == target) break;
      if (pos >= pieces.size() || pieces[pos] == options.sep_token)
        fail(ErrorKind::alignment, "cannot align word '" + word + "': ran out of sentence pieces");
      const std::string& piece = pieces[pos];
      if (piece == options.unk_token) {
        group.push_back(pos++);
        built = target;
        continue;
      }
      built += piece_text(piece);
      if (target.compare(0, built.size(), built) != 0 || built.size() > target.size())
        fail(ErrorKind::alignment, "cannot align word '" + word + "' with piece '" + piece +
                                       "' at position " + std::to_string(pos));
      group.push_back(pos++);
    }
    out.first_subword.push_back(group.front());
    out.groups.push_back(std::move(group));
  }
  if (pos >= pieces.size() || pieces[pos] != options.sep_token)
    fail(ErrorKind::alignment, "expected " + options.sep_token + " after the sentence segment at position " +
                                   std::to_string(pos));
  if (pieces.back() != options.sep_token)
    fail(ErrorKind::alignment, "piece sequence does not end with " + options.sep_token);
  for (; pos < pieces.size(); ++pos) out.special_positions.push_back(pos);
  return out;
}

}  // namespace b4g::depgraph
