#include "seqcirc/tokenizer.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

#include "json.hpp"
#include "seqcirc/errors.hpp"

namespace seqcirc {

namespace {

struct CodepointRange {
  std::uint32_t lo;
  std::uint32_t hi;
};

#include "unicode_tables.inc"

enum class CharClass { Letter, Number, Space, Other };

template <std::size_t N>
bool in_ranges(const CodepointRange (&ranges)[N], std::uint32_t cp) {
  const auto* it = std::upper_bound(std::begin(ranges), std::end(ranges), cp,
                                    [](std::uint32_t v, const CodepointRange& r) { return v < r.lo; });
  return it != std::begin(ranges) && cp <= (it - 1)->hi;
}

CharClass classify(std::uint32_t cp) {
  if (in_ranges(kLetterRanges, cp)) return CharClass::Letter;
  if (in_ranges(kNumberRanges, cp)) return CharClass::Number;
  if (in_ranges(kSpaceRanges, cp)) return CharClass::Space;
  return CharClass::Other;
}

constexpr std::uint32_t kInvalid = 0xFFFFFFFFu;

// Decodes one UTF-8 scalar at s[i]. Malformed input yields kInvalid with length 1.
std::uint32_t decode_utf8(std::string_view s, std::size_t i, std::size_t& len) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  len = 1;
  if (b0 < 0x80) return b0;
  std::size_t need;
  std::uint32_t cp;
  std::uint32_t min;
  if ((b0 & 0xE0) == 0xC0) {
    need = 1, cp = b0 & 0x1F, min = 0x80;
  } else if ((b0 & 0xF0) == 0xE0) {
    need = 2, cp = b0 & 0x0F, min = 0x800;
  } else if ((b0 & 0xF8) == 0xF0) {
    need = 3, cp = b0 & 0x07, min = 0x10000;
  } else {
    return kInvalid;
  }
  if (i + need >= s.size()) return kInvalid;
  for (std::size_t k = 1; k <= need; ++k) {
    const auto b = static_cast<unsigned char>(s[i + k]);
    if ((b & 0xC0) != 0x80) return kInvalid;
    cp = (cp << 6) | (b & 0x3F);
  }
  if (cp < min || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return kInvalid;
  len = need + 1;
  return cp;
}

struct Char {
  std::size_t offset;
  std::size_t len;
  std::uint32_t cp;
  CharClass cls;
};

std::vector<Char> scan_chars(std::string_view s) {
  std::vector<Char> out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    std::size_t len;
    const std::uint32_t cp = decode_utf8(s, i, len);
    out.push_back({i, len, cp, cp == kInvalid ? CharClass::Other : classify(cp)});
    i += len;
  }
  return out;
}

void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

// The reversible byte -> printable codepoint table used by GPT-2's vocabulary.
struct ByteTable {
  std::array<std::string, 256> encoded;
  std::array<int, 512> decoded;

  ByteTable() {
    decoded.fill(-1);
    std::array<std::uint32_t, 256> cps{};
    std::array<bool, 256> printable{};
    for (int b = '!'; b <= '~'; ++b) printable[b] = true;
    for (int b = 0xA1; b <= 0xAC; ++b) printable[b] = true;
    for (int b = 0xAE; b <= 0xFF; ++b) printable[b] = true;
    std::uint32_t next = 256;
    for (int b = 0; b < 256; ++b) cps[b] = printable[b] ? static_cast<std::uint32_t>(b) : next++;
    for (int b = 0; b < 256; ++b) {
      append_utf8(encoded[b], cps[b]);
      decoded[cps[b]] = b;
    }
  }
};

const ByteTable& byte_table() {
  static const ByteTable table;
  return table;
}

}  // namespace

std::vector<std::string_view> pretokenize(std::string_view text) {
  const std::vector<Char> cs = scan_chars(text);
  std::vector<std::string_view> pieces;
  const std::size_t n = cs.size();
  auto piece = [&](std::size_t a, std::size_t b) {
    const std::size_t begin = cs[a].offset;
    const std::size_t end = b < n ? cs[b].offset : text.size();
    pieces.push_back(text.substr(begin, end - begin));
  };
  auto run_end = [&](std::size_t from, CharClass cls) {
    while (from < n && cs[from].cls == cls) ++from;
    return from;
  };
  auto is_char = [&](std::size_t k, char c) {
    return k < n && cs[k].cp == static_cast<std::uint32_t>(c);
  };

  std::size_t i = 0;
  while (i < n) {
    if (is_char(i, '\'') && i + 1 < n) {
      const std::uint32_t c1 = cs[i + 1].cp;
      if (c1 == 's' || c1 == 't' || c1 == 'm' || c1 == 'd') {
        piece(i, i + 2);
        i += 2;
        continue;
      }
      if ((c1 == 'r' && is_char(i + 2, 'e')) || (c1 == 'v' && is_char(i + 2, 'e')) ||
          (c1 == 'l' && is_char(i + 2, 'l'))) {
        piece(i, i + 3);
        i += 3;
        continue;
      }
    }
    const CharClass cls = cs[i].cls;
    if (cls == CharClass::Letter || cls == CharClass::Number || cls == CharClass::Other) {
      const std::size_t end = run_end(i, cls);
      piece(i, end);
      i = end;
      continue;
    }
    // cls == Space from here on.
    if (is_char(i, ' ') && i + 1 < n && cs[i + 1].cls != CharClass::Space) {
      const std::size_t end = run_end(i + 1, cs[i + 1].cls);
      piece(i, end);
      i = end;
      continue;
    }
    const std::size_t end = run_end(i, CharClass::Space);
    if (end < n && end - i >= 2) {
      // \s+(?!\S): leave the last space for the following word.
      piece(i, end - 1);
      i = end - 1;
    } else {
      piece(i, end);
      i = end;
    }
  }
  return pieces;
}

Tokenizer Tokenizer::load(const std::filesystem::path& vocab_json,
                          const std::filesystem::path& merges_txt) {
  Tokenizer tok;
  {
    std::ifstream in(vocab_json);
    if (!in) throw LoadError(fmt::format("cannot open vocabulary '{}'", vocab_json.string()));
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw LoadError(fmt::format("'{}': {}", vocab_json.string(), e.what()));
    }
    tok.id_to_token_.resize(doc.size());
    for (const auto& [token, id_json] : doc.items()) {
      const auto id = id_json.get<TokenId>();
      if (id < 0 || static_cast<std::size_t>(id) >= doc.size() || !tok.id_to_token_[id].empty()) {
        throw LoadError(fmt::format("'{}': ids are not a permutation of 0..{}", vocab_json.string(),
                                    doc.size() - 1));
      }
      tok.id_to_token_[id] = token;
      tok.token_to_id_.emplace(token, id);
    }
  }
  {
    std::ifstream in(merges_txt);
    if (!in) throw LoadError(fmt::format("cannot open merges '{}'", merges_txt.string()));
    std::string line;
    int rank = 0;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line.rfind("#version", 0) == 0) continue;
      const auto sp = line.find(' ');
      if (sp == std::string::npos || line.find(' ', sp + 1) != std::string::npos) {
        throw LoadError(fmt::format("'{}': malformed merge line '{}'", merges_txt.string(), line));
      }
      tok.merge_ranks_.emplace(line, rank++);
    }
  }
  auto eos = tok.token_to_id_.find("<|endoftext|>");
  tok.eos_id_ = eos == tok.token_to_id_.end() ? -1 : eos->second;
  return tok;
}

Tokenizer Tokenizer::load_dir(const std::filesystem::path& dir) {
  return load(dir / "vocab.json", dir / "merges.txt");
}

void Tokenizer::bpe(std::string_view piece, std::vector<TokenId>& out) const {
  const ByteTable& table = byte_table();
  std::vector<std::string> symbols;
  symbols.reserve(piece.size());
  for (char c : piece) symbols.push_back(table.encoded[static_cast<unsigned char>(c)]);

  std::string key;
  while (symbols.size() > 1) {
    int best = std::numeric_limits<int>::max();
    std::size_t best_at = 0;
    for (std::size_t k = 0; k + 1 < symbols.size(); ++k) {
      key.assign(symbols[k]).append(" ").append(symbols[k + 1]);
      auto it = merge_ranks_.find(key);
      if (it != merge_ranks_.end() && it->second < best) {
        best = it->second;
        best_at = k;
      }
    }
    if (best == std::numeric_limits<int>::max()) break;
    const std::string left = symbols[best_at];
    const std::string right = symbols[best_at + 1];
    std::vector<std::string> merged;
    merged.reserve(symbols.size());
    for (std::size_t k = 0; k < symbols.size(); ++k) {
      if (k + 1 < symbols.size() && symbols[k] == left && symbols[k + 1] == right) {
        merged.push_back(left + right);
        ++k;
      } else {
        merged.push_back(std::move(symbols[k]));
      }
    }
    symbols = std::move(merged);
  }
  for (const auto& s : symbols) {
    auto it = token_to_id_.find(s);
    if (it == token_to_id_.end()) {
      throw std::logic_error(fmt::format("BPE produced out-of-vocabulary symbol '{}'", s));
    }
    out.push_back(it->second);
  }
}

std::vector<TokenId> Tokenizer::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  for (std::string_view piece : pretokenize(text)) bpe(piece, ids);
  return ids;
}

std::string Tokenizer::decode_one(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
    throw std::out_of_range(fmt::format("token id {} outside vocabulary of {}", id,
                                        id_to_token_.size()));
  }
  const ByteTable& table = byte_table();
  const std::string& token = id_to_token_[id];
  std::string out;
  std::size_t i = 0;
  while (i < token.size()) {
    std::size_t len;
    const std::uint32_t cp = decode_utf8(token, i, len);
    if (cp < table.decoded.size() && table.decoded[cp] >= 0) {
      out.push_back(static_cast<char>(table.decoded[cp]));
    } else {
      out.append(token, i, len);
    }
    i += len;
  }
  return out;
}

std::string Tokenizer::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) out += decode_one(id);
  return out;
}

std::optional<TokenId> Tokenizer::single_token_id(std::string_view word) const {
  const auto ids = encode(word);
  if (ids.size() != 1) return std::nullopt;
  return ids.front();
}

bool Tokenizer::is_single_token(std::string_view word) const {
  return single_token_id(word).has_value();
}

}  // namespace seqcirc
