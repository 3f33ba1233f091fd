#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "seqcirc/dataset.hpp"
#include "seqcirc/model.hpp"
#include "seqcirc/node.hpp"
#include "seqcirc/tokenizer.hpp"

namespace seqcirc {

/// Mean attention pattern of one head over equal-length prompts.
struct AttentionSummary {
  NodeId head;
  Tensor matrix;  // [pos x pos]
  /// Decoded tokens of the first prompt, for labelling the axes.
  std::vector<std::string> axis_tokens;
  std::size_t samples = 0;
};

/// One summary per head, from a single pass over `prompts`. Throws ArgumentError
/// for mixed lengths, an empty prompt list or a non-head node.
std::vector<AttentionSummary> attention_summaries(const Model& model,
                                                  const std::vector<std::vector<TokenId>>& prompts,
                                                  const std::vector<NodeId>& heads, const Tokenizer* tok = nullptr,
                                                  std::size_t workers = 0);
AttentionSummary attention_summary(const Model& model, const std::vector<std::vector<TokenId>>& prompts,
                                   const NodeId& head, const Tokenizer* tok = nullptr, std::size_t workers = 0);

/// Tab-separated matrix at `path` plus `path` + ".json" holding the head, the
/// sample count and the axis tokens.
void write_attention_tsv(const AttentionSummary& summary, const std::filesystem::path& path);

struct DiagonalStats {
  double diagonal_mean = 0.0;      // mean of A[i][i - offset]
  double off_diagonal_mean = 0.0;  // mean of the other causal entries
};
DiagonalStats diagonal_stats(const Tensor& pattern, int offset = 1);

struct TokenScore {
  TokenId id = -1;
  float logit = 0.0f;
};

/// Highest `k` entries, ties broken by lower id.
std::vector<TokenScore> top_k(std::span<const float> logits, std::size_t k);

/// resid x W_V x W_O of `head`, then the final layer norm and the unembedding.
std::vector<TokenScore> ov_project(const Model& model, const NodeId& head, std::span<const float> resid,
                                   std::size_t k);

enum class KeywordMode { Successor, Copy, NextRank };
std::string_view keyword_mode_name(KeywordMode mode);

/// A context prompt and the tokens a head's OV output should rank highly.
struct OvPrompt {
  std::string label;
  std::vector<TokenId> tokens;
  std::vector<TokenId> keywords;
};

struct OvPromptSet {
  std::string name;
  KeywordMode mode = KeywordMode::Successor;
  std::vector<OvPrompt> prompts;
  /// Labels of prompts dropped because a keyword is not a single token.
  std::vector<std::string> skipped;
};

/// Counting contexts "1 2 ... I" for I in [first, last]. Successor keyword " I+1",
/// copy keyword " I".
OvPromptSet numeral_ov_prompts(const Tokenizer& tok, KeywordMode mode, int first = 1, int last = 97,
                               bool prepend_bos = true);
/// Contexts " w1 w2 ... wi" over an ordered word list (e.g. number words).
OvPromptSet word_ov_prompts(const Tokenizer& tok, const std::string& name, const std::vector<std::string>& words,
                            KeywordMode mode, bool prepend_bos = true);
/// Contexts "January ... M" with the rank word of the following month as keyword
/// (" third" for "February").
OvPromptSet month_rank_prompts(const Tokenizer& tok, bool prepend_bos = true);

struct OvScoreReport {
  NodeId head;
  KeywordMode mode = KeywordMode::Successor;
  double score_pct = 0.0;
  std::size_t hits = 0;
  std::size_t keywords = 0;
  std::vector<std::vector<TokenScore>> top;  // per prompt
};

/// Share of keywords found in the top-k of the head's OV projection of the
/// layer-0 residual (after the first MLP) at each prompt's last token.
OvScoreReport ov_score(const Model& model, const OvPromptSet& prompts, const NodeId& head, std::size_t k = 5);
/// Same for several heads, sharing the residual pass.
std::vector<OvScoreReport> ov_scores(const Model& model, const OvPromptSet& prompts,
                                     const std::vector<NodeId>& heads, std::size_t k = 5, std::size_t workers = 0);

/// CSV: head,mode,score_pct,hits,keywords.
void write_ov_csv(const std::vector<OvScoreReport>& reports, const std::filesystem::path& path);

struct LensRow {
  int layer = 0;
  std::vector<TokenScore> top;
};

struct LogitLensTable {
  std::vector<TokenId> prompt;
  std::vector<LensRow> rows;  // one per layer, from resid_post of that layer
};

/// Top-k of unembed(resid_post(l)) at the final position for every layer.
LogitLensTable logit_lens(const Model& model, std::span<const TokenId> tokens, std::size_t k = 3);

/// CSV: layer,rank,token_id,token,logit.
void write_lens_csv(const LogitLensTable& table, const Tokenizer& tok, const std::filesystem::path& path);

struct LensCensus {
  int target_layer = 9;
  /// Per sample, the first layer whose lens argmax is the answer (-1 if none).
  std::vector<int> first_layer;
  /// histogram[l] counts first_layer == l; the last bucket counts "never".
  std::vector<std::size_t> histogram;
  std::size_t at_target = 0;
  double fraction = 0.0;
};

LensCensus lens_transition_census(const Model& model, const std::vector<PromptSample>& samples,
                                  int target_layer = 9, std::size_t workers = 0);

/// CSV: layer,count (layer "never" for the last bucket).
void write_census_csv(const LensCensus& census, const std::filesystem::path& path);

/// Quotes a CSV field when it contains a comma, quote, newline or edge space.
std::string csv_field(const std::string& text);

}  // namespace seqcirc
