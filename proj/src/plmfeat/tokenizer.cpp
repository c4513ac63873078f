#include "plmfeat/tokenizer.hpp"

#include <cctype>
#include <fstream>

#include "common/error.hpp"
#include "common/util.hpp"

namespace b4g::plmfeat {

std::vector<char32_t> decode_utf8(std::string_view text) {
  std::vector<char32_t> out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    int extra = 0;
    char32_t cp = 0;
    if (c < 0x80) {
      cp = c;
    } else if ((c & 0xE0) == 0xC0) {
      cp = c & 0x1F;
      extra = 1;
    } else if ((c & 0xF0) == 0xE0) {
      cp = c & 0x0F;
      extra = 2;
    } else if ((c & 0xF8) == 0xF0) {
      cp = c & 0x07;
      extra = 3;
    } else {
      out.push_back(0xFFFD);
      ++i;
      continue;
    }
    if (i + static_cast<std::size_t>(extra) >= text.size()) {
      out.push_back(0xFFFD);
      break;
    }
    bool ok = true;
    for (int k = 1; k <= extra; ++k) {
      const auto cc = static_cast<unsigned char>(text[i + static_cast<std::size_t>(k)]);
      if ((cc & 0xC0) != 0x80) {
        ok = false;
        break;
      }
      cp = (cp << 6) | (cc & 0x3F);
    }
    if (!ok) {
      out.push_back(0xFFFD);
      ++i;
      continue;
    }
    out.push_back(cp);
    i += static_cast<std::size_t>(extra) + 1;
  }
  return out;
}

std::string encode_utf8(char32_t cp) {
  std::string out;
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
  return out;
}

namespace {

// Base letter after canonical decomposition for U+00C0..U+017F; '.' marks
// characters without a canonical decomposition.
constexpr std::string_view kLatinBase =
    "AAAAAA.CEEEEIIII.NOOOOO..UUUUY.."
    "aaaaaa.ceeeeiiii.nooooo..uuuuy.y"
    "AaAaAaCcCcCcCcDd..EeEeEeEeEeGgGg"
    "GgGgHh..IiIiIiIiI...JjKk.LlLlLl."
    "...NnNnNn...OoOoOo..RrRrRrSsSsSs"
    "SsTtTt..UuUuUuUuUuUuWwYyYZzZzZz.";

char32_t lower_non_decomposable(char32_t cp) {
  switch (cp) {
    case 0xC6: return 0xE6;
    case 0xD0: return 0xF0;
    case 0xD8: return 0xF8;
    case 0xDE: return 0xFE;
    case 0x110: return 0x111;
    case 0x126: return 0x127;
    case 0x132: return 0x133;
    case 0x13F: return 0x140;
    case 0x141: return 0x142;
    case 0x14A: return 0x14B;
    case 0x152: return 0x153;
    case 0x166: return 0x167;
    default: return cp;
  }
}

bool is_combining_mark(char32_t cp) { return cp >= 0x300 && cp <= 0x36F; }

bool is_control(char32_t cp) {
  if (cp == '\t' || cp == '\n' || cp == '\r') return false;
  if (cp < 0x20 || (cp >= 0x7F && cp <= 0x9F)) return true;
  return cp == 0xAD || (cp >= 0x200B && cp <= 0x200F) || (cp >= 0x202A && cp <= 0x202E) ||
         (cp >= 0x2060 && cp <= 0x2064) || cp == 0xFEFF;
}

bool is_whitespace(char32_t cp) {
  return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == 0xA0 || cp == 0x1680 ||
         (cp >= 0x2000 && cp <= 0x200A) || cp == 0x202F || cp == 0x205F || cp == 0x3000;
}

bool is_punctuation(char32_t cp) {
  if ((cp >= 33 && cp <= 47) || (cp >= 58 && cp <= 64) || (cp >= 91 && cp <= 96) ||
      (cp >= 123 && cp <= 126))
    return true;
  switch (cp) {
    case 0xA1: case 0xA7: case 0xAB: case 0xB6: case 0xB7: case 0xBB: case 0xBF:
      return true;
    default:
      break;
  }
  return (cp >= 0x2010 && cp <= 0x2027) || (cp >= 0x2030 && cp <= 0x205E) ||
         (cp >= 0x3001 && cp <= 0x3003) || (cp >= 0x3008 && cp <= 0x3011) ||
         (cp >= 0x3014 && cp <= 0x301F) || (cp >= 0xFF01 && cp <= 0xFF0F && cp != 0xFF04 && cp != 0xFF0B);
}

bool is_cjk(char32_t cp) {
  return (cp >= 0x4E00 && cp <= 0x9FFF) || (cp >= 0x3400 && cp <= 0x4DBF) ||
         (cp >= 0x20000 && cp <= 0x2A6DF) || (cp >= 0x2A700 && cp <= 0x2B73F) ||
         (cp >= 0x2B740 && cp <= 0x2B81F) || (cp >= 0x2B820 && cp <= 0x2CEAF) ||
         (cp >= 0xF900 && cp <= 0xFAFF) || (cp >= 0x2F800 && cp <= 0x2FA1F);
}

std::u32string clean_and_fold(std::string_view word, bool lower_case) {
  std::u32string out;
  for (char32_t cp : decode_utf8(word)) {
    if (cp == 0 || cp == 0xFFFD || is_control(cp) || is_whitespace(cp)) continue;
    if (lower_case) {
      if (is_combining_mark(cp)) continue;
      if (cp >= 0xC0 && cp <= 0x17F && cp != 0xD7 && cp != 0xF7) {
        const char base = kLatinBase[cp - 0xC0];
        if (base != '.') {
          cp = static_cast<char32_t>(std::tolower(static_cast<unsigned char>(base)));
        } else {
          cp = lower_non_decomposable(cp);
        }
      } else if (cp < 0x80) {
        cp = static_cast<char32_t>(std::tolower(static_cast<int>(cp)));
      }
    }
    out.push_back(cp);
  }
  return out;
}

std::string to_utf8(const std::u32string& s) {
  std::string out;
  for (char32_t cp : s) out += encode_utf8(cp);
  return out;
}

}  // namespace

WordPieceTokenizer::WordPieceTokenizer(std::vector<std::string> vocab, bool lower_case)
    : vocab_(std::move(vocab)), lower_case_(lower_case) {
  for (std::size_t i = 0; i < vocab_.size(); ++i) ids_.emplace(vocab_[i], static_cast<int>(i));
  for (const char* special : {"[CLS]", "[SEP]", "[UNK]"}) {
    if (!ids_.count(special))
      fail(ErrorKind::format, std::string("WordPiece vocabulary lacks ") + special);
  }
}

WordPieceTokenizer WordPieceTokenizer::load(const std::filesystem::path& vocab_file, bool lower_case) {
  std::ifstream in(vocab_file);
  if (!in) fail(ErrorKind::io, "cannot open vocabulary " + vocab_file.string());
  std::vector<std::string> vocab;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    vocab.push_back(line);
  }
  return WordPieceTokenizer(std::move(vocab), lower_case);
}

std::string WordPieceTokenizer::normalize(std::string_view word) const {
  return to_utf8(clean_and_fold(word, lower_case_));
}

std::vector<std::string> WordPieceTokenizer::basic_split(std::string_view normalized) const {
  std::vector<std::string> out;
  std::string current;
  for (char32_t cp : decode_utf8(normalized)) {
    if (is_punctuation(cp) || is_cjk(cp)) {
      if (!current.empty()) out.push_back(std::move(current));
      current.clear();
      out.push_back(encode_utf8(cp));
    } else {
      current += encode_utf8(cp);
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

void WordPieceTokenizer::wordpiece(const std::string& token, std::vector<std::string>& out) const {
  const auto cps = decode_utf8(token);
  if (cps.size() > 100) {
    out.push_back(unk_token());
    return;
  }
  std::vector<std::string> pieces;
  std::size_t start = 0;
  while (start < cps.size()) {
    std::size_t end = cps.size();
    std::string found;
    while (start < end) {
      std::string candidate = start > 0 ? continuation_prefix() : std::string();
      for (std::size_t k = start; k < end; ++k) candidate += encode_utf8(cps[k]);
      if (ids_.count(candidate)) {
        found = std::move(candidate);
        break;
      }
      --end;
    }
    if (found.empty()) {
      out.push_back(unk_token());
      return;
    }
    pieces.push_back(std::move(found));
    start = end;
  }
  out.insert(out.end(), pieces.begin(), pieces.end());
}

std::vector<std::string> WordPieceTokenizer::word_pieces(std::string_view word) const {
  std::vector<std::string> out;
  for (const auto& token : basic_split(normalize(word))) wordpiece(token, out);
  if (out.empty()) out.push_back(unk_token());
  return out;
}

int WordPieceTokenizer::piece_id(const std::string& piece) const {
  auto it = ids_.find(piece);
  return it != ids_.end() ? it->second : ids_.at(unk_token());
}

HashPieceTokenizer::HashPieceTokenizer(int vocab_size, int piece_len)
    : vocab_size_(vocab_size), piece_len_(piece_len) {
  if (vocab_size < 8) fail(ErrorKind::config, "stub vocabulary must have at least 8 entries");
  if (piece_len < 1) fail(ErrorKind::config, "stub piece length must be positive");
}

std::string HashPieceTokenizer::normalize(std::string_view word) const {
  return to_utf8(clean_and_fold(word, true));
}

std::vector<std::string> HashPieceTokenizer::word_pieces(std::string_view word) const {
  const auto cps = clean_and_fold(word, true);
  std::vector<std::string> out;
  for (std::size_t start = 0; start < cps.size(); start += static_cast<std::size_t>(piece_len_)) {
    std::string piece = start > 0 ? continuation_prefix() : std::string();
    const std::size_t end = std::min(cps.size(), start + static_cast<std::size_t>(piece_len_));
    for (std::size_t k = start; k < end; ++k) piece += encode_utf8(cps[k]);
    out.push_back(std::move(piece));
  }
  if (out.empty()) out.push_back(unk_token());
  return out;
}

int HashPieceTokenizer::piece_id(const std::string& piece) const {
  // 0..3 are reserved for [PAD], [UNK], [CLS], [SEP].
  if (piece == "[UNK]") return 1;
  if (piece == "[CLS]") return 2;
  if (piece == "[SEP]") return 3;
  return 4 + static_cast<int>(fnv1a64(piece) % static_cast<std::uint64_t>(vocab_size_ - 4));
}

RenderedInput render_pair(const SubwordTokenizer& tokenizer, const std::vector<std::string>& sentence,
                          const std::vector<std::string>& aspect) {
  RenderedInput r;
  auto push = [&](const std::string& piece, int type) {
    r.pieces.push_back(piece);
    r.ids.push_back(tokenizer.piece_id(piece));
    r.type_ids.push_back(type);
  };
  push(tokenizer.cls_token(), 0);
  for (const auto& w : sentence)
    for (const auto& p : tokenizer.word_pieces(w)) push(p, 0);
  push(tokenizer.sep_token(), 0);
  for (const auto& w : aspect)
    for (const auto& p : tokenizer.word_pieces(w)) push(p, 1);
  push(tokenizer.sep_token(), 1);
  return r;
}

}  // namespace b4g::plmfeat
