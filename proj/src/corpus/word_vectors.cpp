#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>

#include "common/error.hpp"
#include "common/util.hpp"
#include "corpus/corpus.hpp"

namespace b4g::corpus {

std::optional<OovPolicy> parse_oov_policy(std::string_view text) noexcept {
  if (text == "zeros") return OovPolicy::zeros;
  if (text == "uniform_init" || text == "uniform") return OovPolicy::uniform_init;
  return std::nullopt;
}

const char* to_string(OovPolicy policy) noexcept {
  return policy == OovPolicy::zeros ? "zeros" : "uniform_init";
}

WordVectorTable::WordVectorTable(int dim, OovPolicy policy, std::uint64_t seed)
    : dim_(dim), policy_(policy), seed_(seed) {
  if (dim <= 0) fail(ErrorKind::value, "word vector dimension must be positive");
}

void WordVectorTable::insert(std::string token, Eigen::RowVectorXd vector) {
  if (vector.size() != dim_)
    fail(ErrorKind::shape, "word vector for '" + token + "' has " + std::to_string(vector.size()) +
                               " components, expected " + std::to_string(dim_));
  entries_.insert_or_assign(std::move(token), std::move(vector));
}

bool WordVectorTable::contains(const std::string& token) const {
  return entries_.count(token) > 0;
}

namespace {

std::string ascii_lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

Eigen::RowVectorXd WordVectorTable::lookup(const std::string& token) const {
  if (auto it = entries_.find(token); it != entries_.end()) return it->second;
  if (auto it = entries_.find(ascii_lower(token)); it != entries_.end()) return it->second;
  return oov_vector(token);
}

Eigen::RowVectorXd WordVectorTable::oov_vector(const std::string& token) const {
  Eigen::RowVectorXd v = Eigen::RowVectorXd::Zero(dim_);
  if (policy_ == OovPolicy::uniform_init) {
    Rng rng(fnv1a64(token, seed_ ^ 0x9e3779b97f4a7c15ULL));
    for (int i = 0; i < dim_; ++i) v(i) = rng.uniform(-0.25, 0.25);
  }
  return v;
}

Eigen::MatrixXd WordVectorTable::embed(const std::vector<std::string>& tokens) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(tokens.size()), dim_);
  for (std::size_t t = 0; t < tokens.size(); ++t) out.row(static_cast<Eigen::Index>(t)) = lookup(tokens[t]);
  return out;
}

WordVectorTable WordVectorTable::load_text(const std::filesystem::path& path, int dim,
                                           OovPolicy policy, std::uint64_t seed,
                                           const std::unordered_set<std::string>* keep) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open word vectors " + path.string());
  std::optional<WordVectorTable> table;
  if (dim > 0) table.emplace(dim, policy, seed);

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto fields = split_whitespace(line);
    if (fields.empty()) continue;
    if (!table) {
      if (fields.size() < 2) fail(ErrorKind::format, path.string() + ":1: cannot infer dimension");
      table.emplace(static_cast<int>(fields.size() - 1), policy, seed);
    }
    const auto d = static_cast<std::size_t>(table->dim());
    if (fields.size() < d + 1)
      fail(ErrorKind::format, path.string() + ":" + std::to_string(line_no) + ": expected " +
                                  std::to_string(d) + " components");
    // Some vector files contain tokens with embedded spaces; the last d fields
    // are always the components.
    std::vector<std::string> token_parts(fields.begin(), fields.end() - static_cast<std::ptrdiff_t>(d));
    std::string token = join(token_parts, " ");
    if (keep && !keep->count(token) && !keep->count(ascii_lower(token))) continue;
    Eigen::RowVectorXd v(static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < d; ++i) {
      const std::string& f = fields[fields.size() - d + i];
      double x = 0.0;
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), x);
      if (ec != std::errc() || ptr != f.data() + f.size())
        fail(ErrorKind::format, path.string() + ":" + std::to_string(line_no) + ": bad number '" + f + "'");
      v(static_cast<Eigen::Index>(i)) = x;
    }
    // First occurrence wins, matching the usual reading of vector files.
    if (!table->contains(token)) table->insert(std::move(token), std::move(v));
  }
  if (!table) fail(ErrorKind::format, path.string() + ": empty vector file");
  return std::move(*table);
}

}  // namespace b4g::corpus
