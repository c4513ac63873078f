#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace b4g::plmfeat {

// Splits a UTF-8 string into code points; invalid bytes map to U+FFFD.
std::vector<char32_t> decode_utf8(std::string_view text);
std::string encode_utf8(char32_t cp);

// Sub-word tokenizer of a pretrained encoder, driven one word at a time so
// that every word yields at least one piece.
class SubwordTokenizer {
 public:
  virtual ~SubwordTokenizer() = default;

  // Normalization the tokenizer applies before splitting (case folding,
  // accent stripping). align_subwords() uses it to match pieces to words.
  virtual std::string normalize(std::string_view word) const = 0;
  virtual std::vector<std::string> word_pieces(std::string_view word) const = 0;
  virtual int piece_id(const std::string& piece) const = 0;

  virtual std::string cls_token() const { return "[CLS]"; }
  virtual std::string sep_token() const { return "[SEP]"; }
  virtual std::string unk_token() const { return "[UNK]"; }
  virtual std::string continuation_prefix() const { return "##"; }
};

// BERT-style basic + WordPiece tokenizer over a vocab.txt file.
class WordPieceTokenizer final : public SubwordTokenizer {
 public:
  WordPieceTokenizer(std::vector<std::string> vocab, bool lower_case);
  static WordPieceTokenizer load(const std::filesystem::path& vocab_file, bool lower_case);

  std::string normalize(std::string_view word) const override;
  std::vector<std::string> word_pieces(std::string_view word) const override;
  int piece_id(const std::string& piece) const override;

  std::size_t vocab_size() const noexcept { return vocab_.size(); }

 private:
  // Punctuation and CJK characters become their own basic tokens.
  std::vector<std::string> basic_split(std::string_view normalized) const;
  void wordpiece(const std::string& token, std::vector<std::string>& out) const;

  std::vector<std::string> vocab_;
  std::unordered_map<std::string, int> ids_;
  bool lower_case_;
};

// Deterministic tokenizer for the random stub encoder: lower-cases each word
// and cuts it into chunks of `piece_len` code points ("##" on continuations);
// piece ids are hashes into the vocabulary.
class HashPieceTokenizer final : public SubwordTokenizer {
 public:
  HashPieceTokenizer(int vocab_size, int piece_len);

  std::string normalize(std::string_view word) const override;
  std::vector<std::string> word_pieces(std::string_view word) const override;
  int piece_id(const std::string& piece) const override;

 private:
  int vocab_size_;
  int piece_len_;
};

struct RenderedInput {
  std::vector<std::string> pieces;
  std::vector<int> ids;
  std::vector<int> type_ids;  // 0 for "[CLS] s [SEP]", 1 for "a [SEP]"
};

// Renders "[CLS] s [SEP] a [SEP]".
RenderedInput render_pair(const SubwordTokenizer& tokenizer, const std::vector<std::string>& sentence,
                          const std::vector<std::string>& aspect);

}  // namespace b4g::plmfeat
