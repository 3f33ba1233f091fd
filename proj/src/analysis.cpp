#include "seqcirc/analysis.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include <fmt/format.h>

#include "json.hpp"
#include "seqcirc/errors.hpp"
#include "seqcirc/parallel.hpp"

namespace seqcirc {

namespace {

void check_head(const Model& model, const NodeId& head) {
  const ModelConfig& c = model.config();
  if (!head.is_head() || head.layer < 0 || head.layer >= c.n_layers || head.head < 0 || head.head >= c.n_heads) {
    throw ArgumentError(fmt::format("{} is not an attention head of this model", head.str()));
  }
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ArgumentError(fmt::format("cannot write '{}'", path.string()));
  return out;
}

}  // namespace

std::string csv_field(const std::string& text) {
  const bool quote = text.find_first_of(",\"\n\r") != std::string::npos ||
                     (!text.empty() && (text.front() == ' ' || text.back() == ' '));
  if (!quote) return text;
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::vector<AttentionSummary> attention_summaries(const Model& model,
                                                  const std::vector<std::vector<TokenId>>& prompts,
                                                  const std::vector<NodeId>& heads, const Tokenizer* tok,
                                                  std::size_t workers) {
  if (prompts.empty()) throw ArgumentError("attention summary needs at least one prompt");
  const std::size_t pos = prompts.front().size();
  for (const auto& p : prompts) {
    if (p.size() != pos) {
      throw ArgumentError(fmt::format("attention summary needs equal lengths ({} vs {})", p.size(), pos));
    }
  }
  for (const NodeId& h : heads) check_head(model, h);
  int stop = 0;
  for (const NodeId& h : heads) stop = std::max(stop, h.layer + 1);

  std::vector<std::vector<double>> sums(heads.size(), std::vector<double>(pos * pos, 0.0));
  const std::size_t block = std::max<std::size_t>(1, 2 * resolve_workers(workers));
  std::vector<ActivationCache> caches(block);
  ForwardOptions opt;
  opt.capture_patterns = true;
  opt.logits = LogitsMode::None;
  opt.stop_layer = stop;
  for (std::size_t begin = 0; begin < prompts.size(); begin += block) {
    const std::size_t count = std::min(block, prompts.size() - begin);
    parallel_for(count, workers, [&](std::size_t k) { caches[k] = model.forward(prompts[begin + k], opt); });
    for (std::size_t k = 0; k < count; ++k) {
      for (std::size_t j = 0; j < heads.size(); ++j) {
        const Tensor& a = caches[k].patterns[heads[j].layer][heads[j].head];
        for (std::size_t e = 0; e < pos * pos; ++e) sums[j][e] += a.data()[e];
      }
      caches[k] = ActivationCache{};
    }
  }

  std::vector<std::string> axis;
  if (tok) {
    for (TokenId t : prompts.front()) axis.push_back(tok->decode_one(t));
  }
  std::vector<AttentionSummary> out;
  for (std::size_t j = 0; j < heads.size(); ++j) {
    AttentionSummary s;
    s.head = heads[j];
    s.samples = prompts.size();
    s.axis_tokens = axis;
    s.matrix = Tensor({pos, pos});
    const double n = static_cast<double>(prompts.size());
    for (std::size_t e = 0; e < pos * pos; ++e) s.matrix.data()[e] = static_cast<float>(sums[j][e] / n);
    out.push_back(std::move(s));
  }
  return out;
}

AttentionSummary attention_summary(const Model& model, const std::vector<std::vector<TokenId>>& prompts,
                                   const NodeId& head, const Tokenizer* tok, std::size_t workers) {
  return std::move(attention_summaries(model, prompts, {head}, tok, workers).front());
}

void write_attention_tsv(const AttentionSummary& s, const std::filesystem::path& path) {
  {
    std::ofstream out = open_out(path);
    for (std::size_t r = 0; r < s.matrix.rows(); ++r) {
      for (std::size_t c = 0; c < s.matrix.cols(); ++c) {
        if (c) out << '\t';
        out << fmt::format("{:.6f}", s.matrix.at(r, c));
      }
      out << '\n';
    }
  }
  nlohmann::json j = {{"head", s.head.str()}, {"samples", s.samples}, {"axis_tokens", s.axis_tokens}};
  std::ofstream side = open_out(path.string() + ".json");
  side << j.dump(2) << '\n';
}

DiagonalStats diagonal_stats(const Tensor& a, int offset) {
  if (a.shape().size() != 2 || a.rows() != a.cols()) throw ShapeError("diagonal_stats needs a square pattern");
  if (offset < 0) throw ArgumentError("diagonal offset must be non-negative");
  double diag = 0.0, off = 0.0;
  std::size_t nd = 0, no = 0;
  const auto n = static_cast<int>(a.rows());
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      if (i - j == offset) {
        diag += a.at(i, j);
        ++nd;
      } else {
        off += a.at(i, j);
        ++no;
      }
    }
  }
  return {nd ? diag / static_cast<double>(nd) : 0.0, no ? off / static_cast<double>(no) : 0.0};
}

std::vector<TokenScore> top_k(std::span<const float> logits, std::size_t k) {
  k = std::min(k, logits.size());
  std::vector<TokenId> idx(logits.size());
  std::iota(idx.begin(), idx.end(), 0);
  auto better = [&](TokenId a, TokenId b) {
    const float la = logits[static_cast<std::size_t>(a)], lb = logits[static_cast<std::size_t>(b)];
    return la > lb || (la == lb && a < b);
  };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<long>(k), idx.end(), better);
  std::vector<TokenScore> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back({idx[i], logits[static_cast<std::size_t>(idx[i])]});
  return out;
}

namespace {

// Rows of `resid` [n x d] through one head's OV circuit and the unembedding.
Tensor ov_logits(const Model& model, const NodeId& head, const Tensor& resid) {
  const Tensor wv = model.head_w_v(head.layer, head.head);
  const Tensor wo = model.head_w_o(head.layer, head.head);
  return model.unembed(matmul(matmul(resid, wv), wo));
}

// Residual after layer 0 at the last token of each prompt, stacked [n x d].
Tensor layer0_residuals(const Model& model, const OvPromptSet& set, std::size_t workers) {
  const std::size_t d = static_cast<std::size_t>(model.config().d_model);
  Tensor out({set.prompts.size(), d});
  ForwardOptions opt;
  opt.capture_resid = true;
  opt.logits = LogitsMode::None;
  opt.stop_layer = 1;
  parallel_for(set.prompts.size(), workers, [&](std::size_t i) {
    const ActivationCache c = model.forward(set.prompts[i].tokens, opt);
    const Tensor& r = c.resid_post[0];
    std::copy_n(r.row(r.rows() - 1).data(), d, out.row(i).data());
  });
  return out;
}

}  // namespace

std::vector<TokenScore> ov_project(const Model& model, const NodeId& head, std::span<const float> resid,
                                   std::size_t k) {
  check_head(model, head);
  const std::size_t d = static_cast<std::size_t>(model.config().d_model);
  if (resid.size() != d) throw ShapeError(fmt::format("ov_project: residual has {} entries, expected {}", resid.size(), d));
  const Tensor r({1, d}, std::vector<float>(resid.begin(), resid.end()));
  const Tensor logits = ov_logits(model, head, r);
  return top_k(logits.row(0), k);
}

std::string_view keyword_mode_name(KeywordMode mode) {
  switch (mode) {
    case KeywordMode::Successor: return "successor";
    case KeywordMode::Copy: return "copy";
    case KeywordMode::NextRank: return "next_rank";
  }
  return "?";
}

namespace {

// Context of `members[0..i]`, the first bare when `bare_first`.
OvPromptSet ordered_prompts(const Tokenizer& tok, const std::string& name, const std::vector<std::string>& members,
                            std::size_t first, std::size_t last, bool bare_first, KeywordMode mode,
                            bool prepend_bos) {
  OvPromptSet set;
  set.name = name;
  set.mode = mode;
  for (std::size_t i = first; i <= last && i < members.size(); ++i) {
    OvPrompt p;
    p.label = members[i];
    std::string text;
    for (std::size_t j = 0; j <= i; ++j) text += (j == 0 && bare_first ? "" : " ") + members[j];
    if (prepend_bos) p.tokens.push_back(tok.eos_id());
    const auto body = tok.encode(text);
    p.tokens.insert(p.tokens.end(), body.begin(), body.end());
    const std::size_t target = mode == KeywordMode::Copy ? i : i + 1;
    const auto id = target < members.size() ? tok.single_token_id(" " + members[target]) : std::nullopt;
    if (!id) {
      set.skipped.push_back(p.label);
      continue;
    }
    p.keywords.push_back(*id);
    set.prompts.push_back(std::move(p));
  }
  return set;
}

}  // namespace

OvPromptSet numeral_ov_prompts(const Tokenizer& tok, KeywordMode mode, int first, int last, bool prepend_bos) {
  if (first < 1 || last < first) throw ArgumentError(fmt::format("bad numeral range {}..{}", first, last));
  if (mode == KeywordMode::NextRank) throw ArgumentError("numeral prompts support successor and copy keywords");
  std::vector<std::string> members;
  for (int i = 1; i <= last + 1; ++i) members.push_back(std::to_string(i));
  return ordered_prompts(tok, "numerals", members, static_cast<std::size_t>(first - 1),
                         static_cast<std::size_t>(last - 1), true, mode, prepend_bos);
}

OvPromptSet word_ov_prompts(const Tokenizer& tok, const std::string& name, const std::vector<std::string>& words,
                            KeywordMode mode, bool prepend_bos) {
  if (words.empty()) throw ArgumentError("word prompts need at least one word");
  if (mode == KeywordMode::NextRank) throw ArgumentError("word prompts support successor and copy keywords");
  return ordered_prompts(tok, name, words, 0, words.size() - 1, false, mode, prepend_bos);
}

OvPromptSet month_rank_prompts(const Tokenizer& tok, bool prepend_bos) {
  const SequenceLexicon months = SequenceLexicon::months();
  OvPromptSet set;
  set.name = "months";
  set.mode = KeywordMode::NextRank;
  for (std::size_t i = 0; i < months.size(); ++i) {
    OvPrompt p;
    p.label = months.members[i];
    std::string text;
    for (std::size_t j = 0; j <= i; ++j) text += (j == 0 ? "" : " ") + months.members[j];
    if (prepend_bos) p.tokens.push_back(tok.eos_id());
    const auto body = tok.encode(text);
    p.tokens.insert(p.tokens.end(), body.begin(), body.end());
    const std::optional<TokenId> id =
        i + 1 < months.rank_words.size() ? tok.single_token_id(" " + months.rank_words[i + 1]) : std::nullopt;
    if (!id) {
      set.skipped.push_back(p.label);
      continue;
    }
    p.keywords.push_back(*id);
    set.prompts.push_back(std::move(p));
  }
  return set;
}

std::vector<OvScoreReport> ov_scores(const Model& model, const OvPromptSet& set, const std::vector<NodeId>& heads,
                                     std::size_t k, std::size_t workers) {
  for (const NodeId& h : heads) check_head(model, h);
  if (set.prompts.empty()) throw ArgumentError(fmt::format("prompt set '{}' is empty", set.name));
  const Tensor resid = layer0_residuals(model, set, workers);
  std::vector<OvScoreReport> out(heads.size());
  parallel_for(heads.size(), workers, [&](std::size_t j) {
    OvScoreReport& r = out[j];
    r.head = heads[j];
    r.mode = set.mode;
    const Tensor logits = ov_logits(model, heads[j], resid);
    for (std::size_t i = 0; i < set.prompts.size(); ++i) {
      auto top = top_k(logits.row(i), k);
      for (TokenId kw : set.prompts[i].keywords) {
        ++r.keywords;
        if (std::any_of(top.begin(), top.end(), [&](const TokenScore& t) { return t.id == kw; })) ++r.hits;
      }
      r.top.push_back(std::move(top));
    }
    r.score_pct = r.keywords == 0 ? 0.0 : 100.0 * static_cast<double>(r.hits) / static_cast<double>(r.keywords);
  });
  return out;
}

OvScoreReport ov_score(const Model& model, const OvPromptSet& set, const NodeId& head, std::size_t k) {
  return std::move(ov_scores(model, set, {head}, k, 1).front());
}

void write_ov_csv(const std::vector<OvScoreReport>& reports, const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  out << "head,mode,score_pct,hits,keywords\n";
  for (const auto& r : reports) {
    out << fmt::format("{},{},{:.4f},{},{}\n", r.head.str(), keyword_mode_name(r.mode), r.score_pct, r.hits,
                       r.keywords);
  }
}

LogitLensTable logit_lens(const Model& model, std::span<const TokenId> tokens, std::size_t k) {
  ForwardOptions opt;
  opt.capture_resid = true;
  opt.logits = LogitsMode::None;
  const ActivationCache c = model.forward(tokens, opt);
  const int L = model.config().n_layers;
  const std::size_t d = static_cast<std::size_t>(model.config().d_model);
  Tensor last({static_cast<std::size_t>(L), d});
  for (int l = 0; l < L; ++l) {
    const Tensor& r = c.resid_post[l];
    std::copy_n(r.row(r.rows() - 1).data(), d, last.row(l).data());
  }
  const Tensor logits = model.unembed(last);
  LogitLensTable t;
  t.prompt.assign(tokens.begin(), tokens.end());
  for (int l = 0; l < L; ++l) t.rows.push_back({l, top_k(logits.row(l), k)});
  return t;
}

void write_lens_csv(const LogitLensTable& table, const Tokenizer& tok, const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  out << "layer,rank,token_id,token,logit\n";
  for (const auto& row : table.rows) {
    for (std::size_t r = 0; r < row.top.size(); ++r) {
      out << fmt::format("{},{},{},{},{:.4f}\n", row.layer, r + 1, row.top[r].id,
                         csv_field(tok.decode_one(row.top[r].id)), row.top[r].logit);
    }
  }
}

LensCensus lens_transition_census(const Model& model, const std::vector<PromptSample>& samples, int target_layer,
                                  std::size_t workers) {
  const int L = model.config().n_layers;
  if (target_layer < 0 || target_layer >= L) {
    throw ArgumentError(fmt::format("target layer {} outside 0..{}", target_layer, L - 1));
  }
  LensCensus c;
  c.target_layer = target_layer;
  c.first_layer.assign(samples.size(), -1);
  parallel_for(samples.size(), workers, [&](std::size_t i) {
    const LogitLensTable t = logit_lens(model, samples[i].tokens, 1);
    for (const auto& row : t.rows) {
      if (row.top.front().id == samples[i].answer_id) {
        c.first_layer[i] = row.layer;
        break;
      }
    }
  });
  c.histogram.assign(static_cast<std::size_t>(L) + 1, 0);
  for (int f : c.first_layer) {
    ++c.histogram[f < 0 ? static_cast<std::size_t>(L) : static_cast<std::size_t>(f)];
    if (f == target_layer) ++c.at_target;
  }
  c.fraction = samples.empty() ? 0.0 : static_cast<double>(c.at_target) / static_cast<double>(samples.size());
  return c;
}

void write_census_csv(const LensCensus& census, const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  out << "layer,count\n";
  for (std::size_t l = 0; l < census.histogram.size(); ++l) {
    if (l + 1 == census.histogram.size()) {
      out << fmt::format("never,{}\n", census.histogram[l]);
    } else {
      out << fmt::format("{},{}\n", l, census.histogram[l]);
    }
  }
}

}  // namespace seqcirc
