#include "seqcirc/dataset.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/format.h>

#include "json.hpp"
#include "seqcirc/errors.hpp"
#include "seqcirc/parallel.hpp"

namespace seqcirc {

std::vector<PromptTemplate> default_templates(const std::filesystem::path& data_dir) {
  const auto names = load_word_list(data_dir / "names.txt");
  const auto items = load_word_list(data_dir / "items.txt");
  return {{" born in", "names", names}, {" lost in", "items", items}, {" done in", "items", items}};
}

void TaskDataset::validate() const {
  if (!corrupted.empty() && corrupted.size() != clean.size()) {
    throw ArgumentError(fmt::format("dataset has {} clean but {} corrupted samples", clean.size(),
                                    corrupted.size()));
  }
  const std::size_t len = seq_len();
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const PromptSample& s = clean[i];
    if (s.tokens.size() != len) {
      throw ArgumentError(fmt::format("sample {} has {} tokens, expected {}", i, s.tokens.size(), len));
    }
    for (int p : s.member_positions) {
      if (p < 0 || static_cast<std::size_t>(p) >= len) {
        throw ArgumentError(fmt::format("sample {} member position {} out of range", i, p));
      }
    }
    if (corrupted.empty()) continue;
    const auto& c = corrupted[i];
    if (c.size() != len) throw ArgumentError(fmt::format("corrupted sample {} has the wrong length", i));
    for (std::size_t p = 0; p < len; ++p) {
      const bool member = std::find(s.member_positions.begin(), s.member_positions.end(),
                                    static_cast<int>(p)) != s.member_positions.end();
      if (!member && c[p] != s.tokens[p]) {
        throw ArgumentError(fmt::format("corrupted sample {} differs at non-member position {}", i, p));
      }
    }
  }
}

TaskDataset TaskDataset::subset(const std::vector<std::size_t>& indices) const {
  TaskDataset out;
  out.task = task;
  out.seed = seed;
  out.lexicon = lexicon;
  out.prepend_bos = prepend_bos;
  for (std::size_t i : indices) {
    out.clean.push_back(clean.at(i));
    if (!corrupted.empty()) out.corrupted.push_back(corrupted.at(i));
  }
  return out;
}

TaskDataset TaskDataset::head(std::size_t cap) const {
  const std::size_t n = cap == 0 ? size() : std::min(cap, size());
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return subset(idx);
}

PairScorer model_scorer(const Model& model, std::size_t workers) {
  return [&model, workers](const std::vector<PromptSample>& prompts) {
    std::vector<double> diffs(prompts.size());
    parallel_for(prompts.size(), workers, [&](std::size_t i) {
      ForwardOptions opt;
      opt.logits = LogitsMode::None;
      opt.selected_tokens = {prompts[i].answer_id, prompts[i].incorrect_id};
      const ActivationCache c = model.forward(prompts[i].tokens, opt);
      diffs[i] = static_cast<double>(c.selected_logits[0]) - static_cast<double>(c.selected_logits[1]);
    });
    return diffs;
  };
}

PromptSample render_sample(const Tokenizer& tok, const SequenceLexicon& lexicon, const PromptTemplate& tmpl,
                           int template_id, const std::vector<std::string>& fillers, std::size_t start,
                           bool prepend_bos) {
  constexpr std::size_t kShown = 4;
  if (fillers.size() != kShown + 1) throw ArgumentError("render_sample needs five fillers");
  if (start + kShown >= lexicon.size()) {
    throw ArgumentError(fmt::format("start {} leaves no answer in lexicon '{}'", start + 1, lexicon.name));
  }
  PromptSample s;
  s.template_id = template_id;
  s.start_index = static_cast<int>(start) + 1;
  for (std::size_t i = 0; i < kShown; ++i) {
    s.text += (i == 0 ? fillers[i] : " " + fillers[i]) + tmpl.relation + lexicon.rendered(start + i) + ".";
  }
  s.text += " " + fillers[kShown] + tmpl.relation;

  const std::size_t bos = prepend_bos ? 1 : 0;
  if (prepend_bos) s.tokens.push_back(tok.eos_id());
  const auto body = tok.encode(s.text);
  s.tokens.insert(s.tokens.end(), body.begin(), body.end());

  const std::size_t rel = tok.encode(tmpl.relation).size();
  const std::size_t clause = rel + 3;  // filler, relation, member, "."
  if (s.tokens.size() != bos + kShown * clause + 1 + rel) {
    throw ArgumentError(fmt::format("'{}' does not tokenize one token per filler and member", s.text));
  }
  for (std::size_t i = 0; i < kShown; ++i) {
    const std::size_t p = bos + i * clause + 1 + rel;
    const auto member = tok.single_token_id(lexicon.rendered(start + i));
    if (!member || s.tokens[p] != *member) {
      throw ArgumentError(fmt::format("member '{}' of '{}' is not a single token in place",
                                      lexicon.rendered(start + i), s.text));
    }
    s.member_positions.push_back(static_cast<int>(p));
  }
  s.incorrect_id = s.tokens[static_cast<std::size_t>(s.member_positions.back())];
  const auto answer = tok.single_token_id(lexicon.rendered(start + kShown));
  if (!answer) throw ArgumentError(fmt::format("answer '{}' is not a single token", lexicon.rendered(start + kShown)));
  s.answer_id = *answer;
  return s;
}

TaskDataset generate_clean(const PairScorer& scorer, const Tokenizer& tok, const SequenceLexicon& lexicon,
                           const std::vector<PromptTemplate>& templates, std::size_t n_samples,
                           std::uint64_t seed, const GenerationOptions& options) {
  lexicon.validate(tok);
  if (templates.empty()) throw ArgumentError("generate_clean: no templates");
  for (const auto& t : templates) {
    if (t.fillers.size() < 5) {
      throw ArgumentError(fmt::format("template '{}' needs at least five fillers", t.relation));
    }
  }
  const std::size_t n_starts = lexicon.window_count();
  const std::size_t n_templates = templates.size();
  const double threshold = std::log(options.min_prob_ratio);

  TaskDataset ds;
  ds.task = lexicon.name;
  ds.seed = seed;
  ds.lexicon = lexicon;
  ds.prepend_bos = options.prepend_bos;

  Rng rng = Rng::substream(seed, "dataset");
  std::vector<std::size_t> per_template(n_templates, 0);
  std::vector<std::vector<std::size_t>> per_cell(n_templates, std::vector<std::size_t>(n_starts, 0));
  std::size_t attempted = 0;
  std::size_t accepted = 0;

  for (std::size_t k = 0; k < n_samples; ++k) {
    const std::size_t start = k % n_starts;
    std::size_t t = 0;
    for (std::size_t c = 1; c < n_templates; ++c) {
      if (per_template[c] < per_template[t] ||
          (per_template[c] == per_template[t] && per_cell[c][start] < per_cell[t][start])) {
        t = c;
      }
    }
    const PromptTemplate& tmpl = templates[t];

    bool done = false;
    for (std::size_t attempt = 0; attempt < options.max_attempts_per_sample && !done; ++attempt) {
      std::vector<std::size_t> pool(tmpl.fillers.size());
      for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
      std::vector<std::string> fillers;
      for (std::size_t i = 0; i < 5; ++i) {
        const std::size_t j = i + rng.below(pool.size() - i);
        std::swap(pool[i], pool[j]);
        fillers.push_back(tmpl.fillers[pool[i]]);
      }
      std::vector<PromptSample> variants;
      for (std::size_t s = 0; s < n_starts; ++s) {
        variants.push_back(render_sample(tok, lexicon, tmpl, static_cast<int>(t), fillers, s, options.prepend_bos));
      }
      const std::vector<double> diffs = scorer(variants);
      ++attempted;
      if (std::all_of(diffs.begin(), diffs.end(), [&](double d) { return d >= threshold; })) {
        ++accepted;
        ds.clean.push_back(std::move(variants[start]));
        ++per_template[t];
        ++per_cell[t][start];
        done = true;
      }
    }
    if (!done) {
      const double rate = attempted == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(attempted);
      throw GenerationExhaustedError(
          fmt::format("generation for '{}' exhausted after {} specific templates ({} accepted, "
                      "acceptance rate {:.2f}%); the model does not clear the {}x probability filter",
                      lexicon.name, attempted, accepted, 100.0 * rate, options.min_prob_ratio),
          rate);
    }
  }
  return ds;
}

std::vector<std::size_t> draw_corrupt_members(Rng& rng, std::size_t lexicon_size) {
  if (lexicon_size < 3) throw ArgumentError("corruption needs at least three lexicon members");
  std::vector<std::size_t> idx(4);
  do {
    for (auto& i : idx) i = rng.below(lexicon_size);
  } while (idx[2] + 1 == idx[3]);
  return idx;
}

void corrupt(TaskDataset& dataset, std::uint64_t seed, const Tokenizer& tok) {
  const std::vector<TokenId> ids = dataset.lexicon.member_ids(tok);
  Rng rng = Rng::substream(seed, "corruption");
  dataset.corrupted.clear();
  for (const PromptSample& s : dataset.clean) {
    std::vector<TokenId> c = s.tokens;
    const auto idx = draw_corrupt_members(rng, ids.size());
    for (std::size_t i = 0; i < s.member_positions.size(); ++i) {
      c[static_cast<std::size_t>(s.member_positions[i])] = ids[idx[i]];
    }
    dataset.corrupted.push_back(std::move(c));
  }
}

std::vector<PromptSample> pure_sequence_prompts(const Tokenizer& tok, const SequenceLexicon& lexicon,
                                                std::size_t length, bool prepend_bos) {
  lexicon.validate(tok);
  if (length == 0 || length >= lexicon.size()) {
    throw ArgumentError(fmt::format("member-only prompts of length {} need a longer lexicon", length));
  }
  std::vector<PromptSample> out;
  for (std::size_t start = 0; start + length < lexicon.size(); ++start) {
    PromptSample s;
    s.start_index = static_cast<int>(start) + 1;
    for (std::size_t i = 0; i < length; ++i) {
      s.text += (i == 0 && lexicon.bare_first_in_pure) ? lexicon.members[start] : lexicon.rendered(start + i);
    }
    if (prepend_bos) s.tokens.push_back(tok.eos_id());
    const auto body = tok.encode(s.text);
    if (body.size() != length) {
      throw ArgumentError(fmt::format("'{}' is not {} tokens", s.text, length));
    }
    s.tokens.insert(s.tokens.end(), body.begin(), body.end());
    for (std::size_t i = 0; i < length; ++i) s.member_positions.push_back(static_cast<int>((prepend_bos ? 1 : 0) + i));
    s.incorrect_id = s.tokens.back();
    s.answer_id = *tok.single_token_id(lexicon.rendered(start + length));
    out.push_back(std::move(s));
  }
  return out;
}

void write_jsonl(const TaskDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ArgumentError(fmt::format("cannot write '{}'", path.string()));
  nlohmann::json header = {{"task", ds.task},
                           {"seed", ds.seed},
                           {"lexicon", ds.lexicon.members},
                           {"lexicon_kind", static_cast<int>(ds.lexicon.kind)},
                           {"bare_first_in_pure", ds.lexicon.bare_first_in_pure},
                           {"count", ds.size()},
                           {"prepend_bos", ds.prepend_bos}};
  out << header.dump() << '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const PromptSample& s = ds.clean[i];
    nlohmann::json j = {{"text", s.text},
                        {"tokens", s.tokens},
                        {"member_positions", s.member_positions},
                        {"answer_id", s.answer_id},
                        {"incorrect_id", s.incorrect_id},
                        {"template_id", s.template_id},
                        {"start_index", s.start_index}};
    j["corrupted_tokens"] = ds.corrupted.empty() ? nlohmann::json::array() : nlohmann::json(ds.corrupted[i]);
    out << j.dump() << '\n';
  }
  if (!out) throw ArgumentError(fmt::format("failed writing '{}'", path.string()));
}

TaskDataset read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError(fmt::format("cannot open dataset '{}'", path.string()));
  TaskDataset ds;
  std::string line;
  try {
    if (!std::getline(in, line)) throw ArgumentError("empty dataset file");
    const auto h = nlohmann::json::parse(line);
    ds.task = h.at("task").get<std::string>();
    ds.seed = h.at("seed").get<std::uint64_t>();
    ds.lexicon.name = ds.task;
    ds.lexicon.members = h.at("lexicon").get<std::vector<std::string>>();
    ds.lexicon.kind = static_cast<LexiconKind>(h.value("lexicon_kind", static_cast<int>(LexiconKind::Custom)));
    ds.lexicon.bare_first_in_pure = h.value("bare_first_in_pure", true);
    if (ds.lexicon.kind != LexiconKind::Custom) ds.lexicon.rank_words = SequenceLexicon::numerals().rank_words;
    ds.prepend_bos = h.value("prepend_bos", true);
    const auto count = h.at("count").get<std::size_t>();
    bool any_corrupted = false;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      PromptSample s;
      s.text = j.at("text").get<std::string>();
      s.tokens = j.at("tokens").get<std::vector<TokenId>>();
      s.member_positions = j.at("member_positions").get<std::vector<int>>();
      s.answer_id = j.at("answer_id").get<TokenId>();
      s.incorrect_id = j.at("incorrect_id").get<TokenId>();
      s.template_id = j.at("template_id").get<int>();
      s.start_index = j.at("start_index").get<int>();
      auto c = j.value("corrupted_tokens", std::vector<TokenId>{});
      any_corrupted = any_corrupted || !c.empty();
      ds.clean.push_back(std::move(s));
      ds.corrupted.push_back(std::move(c));
    }
    if (!any_corrupted) ds.corrupted.clear();
    if (ds.size() != count) {
      throw ArgumentError(fmt::format("header announces {} samples, file holds {}", count, ds.size()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(fmt::format("'{}': {}", path.string(), e.what()));
  }
  ds.validate();
  return ds;
}

}  // namespace seqcirc
