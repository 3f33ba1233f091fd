#include "seqcirc/lexicon.hpp"

#include <fstream>
#include <set>

#include <fmt/format.h>

#include "seqcirc/errors.hpp"

namespace seqcirc {

namespace {

const std::vector<std::string> kRankWords = {"first",   "second", "third",    "fourth",
                                             "fifth",   "sixth",  "seventh",  "eighth",
                                             "ninth",   "tenth",  "eleventh", "twelfth"};

}  // namespace

std::vector<std::string> number_words_to_twenty() {
  return {"one",    "two",    "three",    "four",     "five",    "six",     "seven",
          "eight",  "nine",   "ten",      "eleven",   "twelve",  "thirteen", "fourteen",
          "fifteen", "sixteen", "seventeen", "eighteen", "nineteen", "twenty"};
}

SequenceLexicon SequenceLexicon::numerals() {
  SequenceLexicon lex;
  lex.kind = LexiconKind::Numerals;
  lex.name = "numerals";
  for (int i = 1; i <= 12; ++i) lex.members.push_back(std::to_string(i));
  lex.rank_words = kRankWords;
  lex.bare_first_in_pure = true;
  return lex;
}

SequenceLexicon SequenceLexicon::number_words() {
  SequenceLexicon lex;
  lex.kind = LexiconKind::NumberWords;
  lex.name = "number_words";
  const auto words = number_words_to_twenty();
  lex.members.assign(words.begin(), words.begin() + 12);
  lex.rank_words = kRankWords;
  lex.bare_first_in_pure = false;
  return lex;
}

SequenceLexicon SequenceLexicon::months() {
  SequenceLexicon lex;
  lex.kind = LexiconKind::Months;
  lex.name = "months";
  lex.members = {"January", "February", "March",     "April",   "May",      "June",
                 "July",    "August",   "September", "October", "November", "December"};
  lex.rank_words = kRankWords;
  lex.bare_first_in_pure = true;
  return lex;
}

SequenceLexicon SequenceLexicon::custom(std::string name, std::vector<std::string> members,
                                        bool bare_first_in_pure) {
  SequenceLexicon lex;
  lex.kind = LexiconKind::Custom;
  lex.name = std::move(name);
  lex.members = std::move(members);
  lex.bare_first_in_pure = bare_first_in_pure;
  return lex;
}

SequenceLexicon SequenceLexicon::by_name(std::string_view name) {
  if (name == "numerals") return numerals();
  if (name == "number_words" || name == "number-words") return number_words();
  if (name == "months") return months();
  throw ArgumentError(fmt::format("unknown task '{}' (expected numerals, number_words or months)", name));
}

void SequenceLexicon::validate(const Tokenizer& tok) const {
  if (members.size() < 5) {
    throw ArgumentError(fmt::format("lexicon '{}' needs at least five members, has {}", name, members.size()));
  }
  std::set<TokenId> seen;
  for (std::size_t i = 0; i < members.size(); ++i) {
    const auto id = tok.single_token_id(rendered(i));
    if (!id) {
      throw ArgumentError(fmt::format("lexicon '{}': '{}' is not a single token", name, rendered(i)));
    }
    if (!seen.insert(*id).second) {
      throw ArgumentError(fmt::format("lexicon '{}': member '{}' repeats", name, members[i]));
    }
  }
}

std::vector<TokenId> SequenceLexicon::member_ids(const Tokenizer& tok) const {
  validate(tok);
  std::vector<TokenId> ids;
  for (std::size_t i = 0; i < members.size(); ++i) ids.push_back(*tok.single_token_id(rendered(i)));
  return ids;
}

std::vector<std::string> load_word_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError(fmt::format("cannot open word list '{}'", path.string()));
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    words.push_back(line);
  }
  return words;
}

std::vector<std::string> single_token_words(const Tokenizer& tok, const std::vector<std::string>& words) {
  std::vector<std::string> out;
  for (const auto& w : words) {
    if (tok.is_single_token(w) && tok.is_single_token(" " + w)) out.push_back(w);
  }
  return out;
}

}  // namespace seqcirc
