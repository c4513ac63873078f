#include <expat.h>

#include <charconv>
#include <memory>

#include "common/error.hpp"
#include "common/util.hpp"
#include "corpus/corpus.hpp"

namespace b4g::corpus {
namespace {

struct PendingAspect {
  std::string term;
  std::string polarity;
  std::string from;
  std::string to;
};

struct ParseState {
  SemevalOptions options;
  std::vector<Instance> out;
  std::string sentence_id;
  std::string text;
  bool in_sentence = false;
  bool in_text = false;
  std::vector<PendingAspect> aspects;
  // Set from callbacks; rethrown after XML_StopParser returns.
  std::exception_ptr error;
};

// Byte offset of every code point boundary, plus the end.
std::vector<std::size_t> codepoint_offsets(std::string_view text) {
  std::vector<std::size_t> offsets;
  offsets.reserve(text.size() + 1);
  for (std::size_t i = 0; i < text.size(); ++i) {
    if ((static_cast<unsigned char>(text[i]) & 0xC0) != 0x80) offsets.push_back(i);
  }
  offsets.push_back(text.size());
  return offsets;
}

std::size_t parse_offset(const std::string& raw, const std::string& sentence_id, const char* what) {
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), value);
  if (ec != std::errc() || ptr != raw.data() + raw.size())
    fail(ErrorKind::alignment, std::string("sentence ") + sentence_id + ": bad '" + what +
                                   "' offset '" + raw + "'");
  return value;
}

void finish_sentence(ParseState& st) {
  const auto tokens = tokenize_with_spans(st.text);
  const auto offsets = codepoint_offsets(st.text);
  std::vector<std::string> words;
  words.reserve(tokens.size());
  for (const auto& t : tokens) words.push_back(t.text);

  for (const auto& asp : st.aspects) {
    if (asp.polarity == "conflict") continue;
    auto label = parse_label(asp.polarity);
    if (!label)
      fail(ErrorKind::value, "sentence " + st.sentence_id + ": unknown polarity '" + asp.polarity + "'");
    const std::size_t from = parse_offset(asp.from, st.sentence_id, "from");
    const std::size_t to = parse_offset(asp.to, st.sentence_id, "to");
    if (from >= to || to >= offsets.size())
      fail(ErrorKind::alignment, "sentence " + st.sentence_id + ": aspect '" + asp.term +
                                     "' offsets [" + asp.from + ", " + asp.to + ") outside text");
    const std::size_t bfrom = offsets[from];
    const std::size_t bto = offsets[to];

    std::size_t first = tokens.size();
    std::size_t last = 0;
    bool splits_token = false;
    for (std::size_t k = 0; k < tokens.size(); ++k) {
      const auto& t = tokens[k];
      if (t.end > bfrom && t.begin < bto) {
        if (first == tokens.size()) first = k;
        last = k;
        if ((t.begin < bfrom && bfrom < t.end) || (t.begin < bto && bto < t.end)) splits_token = true;
      }
    }
    if (first == tokens.size())
      fail(ErrorKind::alignment, "sentence " + st.sentence_id + ": aspect '" + asp.term +
                                     "' covers no token");
    if (splits_token) {
      if (st.options.strict_alignment)
        fail(ErrorKind::alignment, "sentence " + st.sentence_id + ": aspect '" + asp.term +
                                       "' offsets split a token");
      log_warning("sentence " + st.sentence_id + ": aspect '" + asp.term +
                  "' offsets split a token; snapped to covering tokens");
    }

    Instance inst;
    inst.tokens = words;
    inst.aspect_start = first;
    inst.aspect_len = last - first + 1;
    inst.label = *label;
    inst.dataset = st.options.dataset;
    inst.sentence_id = st.sentence_id;
    st.out.push_back(std::move(inst));
  }
}

const char* find_attr(const XML_Char** attrs, const char* name) {
  for (int i = 0; attrs[i]; i += 2) {
    if (std::string_view(attrs[i]) == name) return attrs[i + 1];
  }
  return nullptr;
}

void XMLCALL on_start(void* user, const XML_Char* name, const XML_Char** attrs) {
  auto& st = *static_cast<ParseState*>(user);
  const std::string_view tag(name);
  if (tag == "sentence") {
    st.in_sentence = true;
    st.text.clear();
    st.aspects.clear();
    const char* id = find_attr(attrs, "id");
    st.sentence_id = id ? id : std::to_string(st.out.size());
  } else if (tag == "text" && st.in_sentence) {
    st.in_text = true;
  } else if (tag == "aspectTerm" && st.in_sentence) {
    PendingAspect a;
    auto get = [&](const char* key) {
      const char* v = find_attr(attrs, key);
      return v ? std::string(v) : std::string();
    };
    a.term = get("term");
    a.polarity = get("polarity");
    a.from = get("from");
    a.to = get("to");
    st.aspects.push_back(std::move(a));
  }
}

void XMLCALL on_end(void* user, const XML_Char* name) {
  auto& st = *static_cast<ParseState*>(user);
  const std::string_view tag(name);
  if (tag == "text") {
    st.in_text = false;
  } else if (tag == "sentence" && st.in_sentence) {
    st.in_sentence = false;
    if (st.error) return;
    try {
      finish_sentence(st);
    } catch (...) {
      st.error = std::current_exception();
    }
  }
}

void XMLCALL on_chars(void* user, const XML_Char* s, int len) {
  auto& st = *static_cast<ParseState*>(user);
  if (st.in_text) st.text.append(s, static_cast<std::size_t>(len));
}

}  // namespace

std::vector<Instance> parse_semeval(std::string_view xml, SemevalOptions options) {
  std::unique_ptr<std::remove_pointer_t<XML_Parser>, decltype(&XML_ParserFree)> parser(
      XML_ParserCreate("UTF-8"), &XML_ParserFree);
  if (!parser) fail(ErrorKind::internal, "cannot create XML parser");
  ParseState st;
  st.options = options;
  XML_SetUserData(parser.get(), &st);
  XML_SetElementHandler(parser.get(), on_start, on_end);
  XML_SetCharacterDataHandler(parser.get(), on_chars);

  const auto status = XML_Parse(parser.get(), xml.data(), static_cast<int>(xml.size()), XML_TRUE);
  if (st.error) std::rethrow_exception(st.error);
  if (status == XML_STATUS_ERROR) {
    const auto code = XML_GetErrorCode(parser.get());
    fail(ErrorKind::parse, "malformed XML at byte offset " +
                               std::to_string(XML_GetCurrentByteIndex(parser.get())) + " (line " +
                               std::to_string(XML_GetCurrentLineNumber(parser.get())) +
                               "): " + XML_ErrorString(code));
  }
  return std::move(st.out);
}

std::vector<Instance> load_semeval(const std::filesystem::path& path, SemevalOptions options) {
  return parse_semeval(read_file(path), options);
}

}  // namespace b4g::corpus
