#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "seqcirc/tokenizer.hpp"

namespace seqcirc {

enum class LexiconKind { Numerals, NumberWords, Months, Custom };

/// An ordered sequence whose members the model should continue.
///
/// Members are stored without a leading space; inside templates every member is
/// rendered as " member". successor(members[i]) == members[i + 1].
struct SequenceLexicon {
  LexiconKind kind = LexiconKind::Custom;
  std::string name;
  std::vector<std::string> members;
  /// Ordinal words ("first", "second", ...) aligned with members; may be empty.
  std::vector<std::string> rank_words;
  /// Member-only prompts start without a space ("1 2 3 4", "May June July August").
  bool bare_first_in_pure = true;

  static SequenceLexicon numerals();      // 1 .. 12
  static SequenceLexicon number_words();  // one .. twelve
  static SequenceLexicon months();        // January .. December
  static SequenceLexicon custom(std::string name, std::vector<std::string> members,
                                bool bare_first_in_pure = true);
  /// "numerals", "number_words" (or "number-words"), "months". Throws ArgumentError.
  static SequenceLexicon by_name(std::string_view name);

  std::size_t size() const noexcept { return members.size(); }
  std::string rendered(std::size_t i) const { return " " + members.at(i); }

  /// Number of 4-member windows that still leave a fifth member as the answer.
  std::size_t window_count(std::size_t shown = 4) const {
    return members.size() > shown ? members.size() - shown : 0;
  }

  /// Throws ArgumentError unless every rendered member is one distinct token
  /// and there are at least five members.
  void validate(const Tokenizer& tok) const;
  /// Token id of each rendered member.
  std::vector<TokenId> member_ids(const Tokenizer& tok) const;
};

/// One word per line; blank lines and lines starting with '#' are skipped.
std::vector<std::string> load_word_list(const std::filesystem::path& path);

/// Keeps words that are one token both bare and after a space.
std::vector<std::string> single_token_words(const Tokenizer& tok, const std::vector<std::string>& words);

/// English number words "one" .. "twenty".
std::vector<std::string> number_words_to_twenty();

}  // namespace seqcirc
