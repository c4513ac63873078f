#include "common/error.hpp"
#include "common/util.hpp"
#include "corpus/corpus.hpp"

namespace b4g::corpus {
namespace {

constexpr std::string_view kPlaceholder = "$T$";

std::optional<Label> twitter_label(std::string_view text) {
  if (text == "1") return Label::positive;
  if (text == "0") return Label::neutral;
  if (text == "-1") return Label::negative;
  return std::nullopt;
}

}  // namespace

std::vector<Instance> parse_twitter(std::string_view text, DatasetId dataset) {
  std::vector<std::string> lines;
  for (auto& line : split(text, '\n')) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  if (lines.size() % 3 != 0)
    fail(ErrorKind::format, "3-line record format: " + std::to_string(lines.size()) +
                                " lines is not a multiple of 3");

  std::vector<Instance> out;
  out.reserve(lines.size() / 3);
  for (std::size_t r = 0; r < lines.size(); r += 3) {
    const std::string& sentence = lines[r];
    const std::vector<std::string> aspect = split_whitespace(lines[r + 1]);
    const std::string label_text = trim(lines[r + 2]);
    const std::string record = "record " + std::to_string(r / 3) + " (line " + std::to_string(r + 1) + ")";

    auto label = twitter_label(label_text);
    if (!label) fail(ErrorKind::value, record + ": unknown label '" + label_text + "'");
    if (aspect.empty()) fail(ErrorKind::format, record + ": empty aspect line");

    // Pad the placeholder so it always surfaces as its own whitespace token.
    std::string padded;
    std::size_t placeholders = 0;
    for (std::size_t i = 0; i < sentence.size();) {
      if (sentence.compare(i, kPlaceholder.size(), kPlaceholder) == 0) {
        padded += " $T$ ";
        i += kPlaceholder.size();
        ++placeholders;
      } else {
        padded += sentence[i++];
      }
    }
    if (placeholders != 1)
      fail(ErrorKind::format, record + ": expected exactly one $T$ placeholder, found " +
                                  std::to_string(placeholders));

    Instance inst;
    inst.dataset = dataset;
    inst.label = *label;
    inst.sentence_id = std::to_string(r / 3);
    for (auto& tok : split_whitespace(padded)) {
      if (tok == kPlaceholder) {
        inst.aspect_start = inst.tokens.size();
        inst.aspect_len = aspect.size();
        inst.tokens.insert(inst.tokens.end(), aspect.begin(), aspect.end());
      } else {
        inst.tokens.push_back(std::move(tok));
      }
    }
    out.push_back(std::move(inst));
  }
  return out;
}

std::vector<Instance> load_twitter(const std::filesystem::path& path, DatasetId dataset) {
  return parse_twitter(read_file(path), dataset);
}

}  // namespace b4g::corpus
