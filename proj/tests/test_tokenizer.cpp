#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "json.hpp"
#include "seqcirc/tokenizer.hpp"

using namespace seqcirc;

namespace {

const Tokenizer& gpt2() {
  static const Tokenizer tok = Tokenizer::load_dir(std::filesystem::path(SEQCIRC_DATA_DIR) / "gpt2");
  return tok;
}

}  // namespace

TEST_CASE("vocabulary shape") {
  CHECK(gpt2().vocab_size() == 50257);
  CHECK(gpt2().eos_id() == 50256);
}

TEST_CASE("frozen oracle corpus matches token for token") {
  std::ifstream in(std::filesystem::path(SEQCIRC_TEST_DATA) / "tokenizer_oracle.jsonl");
  REQUIRE(in);
  std::string line;
  int total = 0;
  int matched = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    const auto text = j.at("text").get<std::string>();
    const auto expect = j.at("ids").get<std::vector<TokenId>>();
    const auto got = gpt2().encode(text);
    ++total;
    if (got == expect) {
      ++matched;
    } else {
      INFO("text: " << text);
      CHECK(got == expect);
    }
  }
  CHECK(total == 1000);
  CHECK(matched == total);
}

TEST_CASE("reference single tokens") {
  const Tokenizer& t = gpt2();
  CHECK(t.encode("").empty());
  CHECK(t.encode(" 12") == std::vector<TokenId>{1105});
  CHECK(t.encode(" January") == std::vector<TokenId>{3269});
  CHECK(t.encode(" twelve") == std::vector<TokenId>{14104});
  CHECK(t.decode(std::vector<TokenId>{642}) == " 5");
  CHECK(t.is_single_token(" January"));
  CHECK_FALSE(t.is_single_token("eleven"));
  CHECK(t.is_single_token(" eleven"));
  CHECK_FALSE(t.is_single_token(""));
}

TEST_CASE("decode inverts encode") {
  const Tokenizer& t = gpt2();
  for (const std::string s : {"Kyle born in February.", "  two  spaces\n\nand tabs\t", "naïve café 数字 🙂",
                              "it's we'll they're I'd", "'''x", "\xff\xfe raw bytes \xc3"}) {
    CHECK(t.decode(t.encode(s)) == s);
  }
  std::mt19937 gen(5);
  std::uniform_int_distribution<int> byte(0, 255);
  std::uniform_int_distribution<int> len(0, 40);
  for (int trial = 0; trial < 200; ++trial) {
    std::string s;
    const int n = len(gen);
    for (int i = 0; i < n; ++i) s.push_back(static_cast<char>(byte(gen)));
    CHECK(t.decode(t.encode(s)) == s);
  }
}

TEST_CASE("unknown ids are range errors") {
  CHECK_THROWS_AS(gpt2().decode(std::vector<TokenId>{50257}), std::out_of_range);
  CHECK_THROWS_AS(gpt2().decode(std::vector<TokenId>{-1}), std::out_of_range);
  CHECK(gpt2().decode(std::vector<TokenId>{}).empty());
}

TEST_CASE("pre-tokenizer splits like the GPT-2 pattern") {
  auto split = [](std::string_view s) {
    std::vector<std::string> out;
    for (auto p : pretokenize(s)) out.emplace_back(p);
    return out;
  };
  CHECK(split("Hello world") == std::vector<std::string>{"Hello", " world"});
  CHECK(split("a  b") == std::vector<std::string>{"a", " ", " b"});
  CHECK(split("a \n b") == std::vector<std::string>{"a", " \n", " b"});
  CHECK(split("x   ") == std::vector<std::string>{"x", "   "});
  CHECK(split("don't") == std::vector<std::string>{"don", "'t"});
  CHECK(split("1 2 10") == std::vector<std::string>{"1", " 2", " 10"});
  CHECK(split("a\nb") == std::vector<std::string>{"a", "\n", "b"});
}
