#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace seqcirc {

using TokenId = int;

/// Splits text into the pieces BPE runs on, reproducing the GPT-2 pattern
///   's|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+
/// with a hand-written scanner. Bytes that are not valid UTF-8 are treated as
/// single "other" characters so every input splits.
std::vector<std::string_view> pretokenize(std::string_view text);

/// GPT-2 byte-level BPE over the published vocab.json / merges.txt pair.
class Tokenizer {
 public:
  static Tokenizer load(const std::filesystem::path& vocab_json,
                        const std::filesystem::path& merges_txt);
  /// Loads `vocab.json` and `merges.txt` from one directory.
  static Tokenizer load_dir(const std::filesystem::path& dir);

  std::vector<TokenId> encode(std::string_view text) const;

  /// Throws std::out_of_range on an id outside the vocabulary.
  std::string decode(std::span<const TokenId> ids) const;
  std::string decode_one(TokenId id) const;

  bool is_single_token(std::string_view word) const;
  /// The id when `word` encodes to exactly one token.
  std::optional<TokenId> single_token_id(std::string_view word) const;

  std::size_t vocab_size() const noexcept { return id_to_token_.size(); }
  /// `<|endoftext|>`, also used as the beginning-of-sequence marker.
  TokenId eos_id() const noexcept { return eos_id_; }

 private:
  void bpe(std::string_view piece, std::vector<TokenId>& out) const;

  std::unordered_map<std::string, TokenId> token_to_id_;
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> merge_ranks_;
  TokenId eos_id_ = -1;
};

}  // namespace seqcirc
