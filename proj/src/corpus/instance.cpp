#include <cctype>
#include <sstream>

#include "common/error.hpp"
#include "corpus/corpus.hpp"

namespace b4g::corpus {

const char* to_string(Label label) noexcept {
  switch (label) {
    case Label::positive: return "positive";
    case Label::neutral: return "neutral";
    case Label::negative: return "negative";
  }
  return "?";
}

std::optional<Label> parse_label(std::string_view text) noexcept {
  if (text == "positive") return Label::positive;
  if (text == "neutral") return Label::neutral;
  if (text == "negative") return Label::negative;
  return std::nullopt;
}

const char* to_string(DatasetId id) noexcept {
  switch (id) {
    case DatasetId::twitter: return "twitter";
    case DatasetId::laptop: return "laptop";
    case DatasetId::restaurant: return "restaurant";
    case DatasetId::custom: return "custom";
  }
  return "?";
}

std::optional<DatasetId> parse_dataset_id(std::string_view text) noexcept {
  if (text == "twitter") return DatasetId::twitter;
  if (text == "laptop") return DatasetId::laptop;
  if (text == "restaurant") return DatasetId::restaurant;
  if (text == "custom") return DatasetId::custom;
  return std::nullopt;
}

std::vector<std::string> Instance::aspect_tokens() const {
  return {tokens.begin() + static_cast<std::ptrdiff_t>(aspect_start),
          tokens.begin() + static_cast<std::ptrdiff_t>(aspect_start + aspect_len)};
}

void validate(const Instance& instance) {
  if (instance.tokens.empty()) fail(ErrorKind::value, "instance " + instance.sentence_id + " has no tokens");
  if (instance.aspect_len == 0)
    fail(ErrorKind::value, "instance " + instance.sentence_id + " has an empty aspect span");
  if (instance.aspect_start + instance.aspect_len > instance.tokens.size())
    fail(ErrorKind::value, "instance " + instance.sentence_id + " aspect span [" +
                               std::to_string(instance.aspect_start) + ", " +
                               std::to_string(instance.aspect_start + instance.aspect_len) +
                               ") exceeds " + std::to_string(instance.tokens.size()) + " tokens");
}

namespace {

bool is_word_byte(unsigned char c) { return c >= 0x80 || std::isalnum(c); }

bool is_joiner(unsigned char c) { return c == '-' || c == '\'' || c == '.' || c == ',' || c == '/'; }

}  // namespace

std::vector<SpanToken> tokenize_with_spans(std::string_view text) {
  std::vector<SpanToken> out;
  std::size_t i = 0;
  const std::size_t n = text.size();
  auto at = [&](std::size_t k) { return static_cast<unsigned char>(text[k]); };
  while (i < n) {
    if (std::isspace(at(i))) {
      ++i;
      continue;
    }
    if (!is_word_byte(at(i))) {
      out.push_back({std::string(1, text[i]), i, i + 1});
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n) {
      if (is_word_byte(at(j))) {
        ++j;
      } else if (is_joiner(at(j)) && j + 1 < n && is_word_byte(at(j + 1)) && j > i) {
        j += 2;
      } else {
        break;
      }
    }
    out.push_back({std::string(text.substr(i, j - i)), i, j});
    i = j;
  }
  return out;
}

LabelCounts count_labels(const std::vector<Instance>& data) {
  LabelCounts counts;
  for (const auto& inst : data) ++counts.by_label[static_cast<std::size_t>(inst.label)];
  return counts;
}

std::string format_stats_tsv(const std::vector<StatsRow>& rows) {
  std::ostringstream out;
  out << "dataset\tsplit\tpositive\tneutral\tnegative\ttotal\n";
  for (const auto& row : rows) {
    out << row.dataset << '\t' << row.split << '\t' << row.counts[Label::positive] << '\t'
        << row.counts[Label::neutral] << '\t' << row.counts[Label::negative] << '\t'
        << row.counts.total() << '\n';
  }
  return out.str();
}

std::optional<FileFormat> parse_file_format(std::string_view text) noexcept {
  if (text == "semeval_xml" || text == "semeval" || text == "xml") return FileFormat::semeval_xml;
  if (text == "twitter_lines" || text == "twitter" || text == "lines") return FileFormat::twitter_lines;
  return std::nullopt;
}

FileFormat default_format(DatasetId id, const std::filesystem::path& path) {
  switch (id) {
    case DatasetId::twitter: return FileFormat::twitter_lines;
    case DatasetId::laptop:
    case DatasetId::restaurant: return FileFormat::semeval_xml;
    case DatasetId::custom: break;
  }
  return path.extension() == ".xml" ? FileFormat::semeval_xml : FileFormat::twitter_lines;
}

std::vector<Instance> load_dataset(const std::filesystem::path& path, FileFormat format,
                                   DatasetId dataset, bool strict_alignment) {
  if (format == FileFormat::semeval_xml) return load_semeval(path, {dataset, strict_alignment});
  return load_twitter(path, dataset);
}

std::unordered_set<std::string> vocabulary(const std::vector<Instance>& data) {
  std::unordered_set<std::string> vocab;
  for (const auto& inst : data)
    for (const auto& tok : inst.tokens) vocab.insert(tok);
  return vocab;
}

}  // namespace b4g::corpus
