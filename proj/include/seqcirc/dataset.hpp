#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "seqcirc/lexicon.hpp"
#include "seqcirc/model.hpp"
#include "seqcirc/rng.hpp"
#include "seqcirc/tokenizer.hpp"

namespace seqcirc {

/// An abstract template: "<filler> born in <member>." repeated, then "<filler> born in".
struct PromptTemplate {
  std::string relation;  // " born in"
  std::string pool_name;  // "names" / "items"
  std::vector<std::string> fillers;
};

/// The three built-in templates over data/names.txt and data/items.txt.
std::vector<PromptTemplate> default_templates(const std::filesystem::path& data_dir);

struct PromptSample {
  std::string text;
  std::vector<TokenId> tokens;
  std::vector<int> member_positions;  // 4 token positions of the shown members
  TokenId answer_id = -1;             // the fifth member
  TokenId incorrect_id = -1;          // the last shown member
  int template_id = -1;               // -1 for member-only prompts
  int start_index = 1;                // ordinal of the first shown member (1-based)
};

struct TaskDataset {
  std::string task;
  std::uint64_t seed = 0;
  SequenceLexicon lexicon;
  bool prepend_bos = true;
  std::vector<PromptSample> clean;
  /// Parallel to `clean`: the same tokens with the member positions randomised.
  std::vector<std::vector<TokenId>> corrupted;

  std::size_t size() const noexcept { return clean.size(); }
  std::size_t seq_len() const { return clean.empty() ? 0 : clean.front().tokens.size(); }

  /// Throws ArgumentError if lengths differ, halves mismatch, or a corrupted
  /// sample differs from its partner outside the member positions.
  void validate() const;
  /// The listed samples, in the listed order.
  TaskDataset subset(const std::vector<std::size_t>& indices) const;
  /// The first `cap` samples (all of them when cap is 0 or large).
  TaskDataset head(std::size_t cap) const;
};

/// Returns logit(answer) - logit(incorrect) at the final position for each prompt.
using PairScorer = std::function<std::vector<double>(const std::vector<PromptSample>&)>;

/// Scores with unpatched forward passes, fanned out over `workers`.
PairScorer model_scorer(const Model& model, std::size_t workers = 0);

struct GenerationOptions {
  bool prepend_bos = true;
  /// Required P(correct) / P(incorrect).
  double min_prob_ratio = 2.0;
  /// Specific templates tried per emitted sample before giving up.
  std::size_t max_attempts_per_sample = 64;
};

/// Renders one prompt. `fillers` holds five words; `start` is 0-based.
PromptSample render_sample(const Tokenizer& tok, const SequenceLexicon& lexicon,
                           const PromptTemplate& tmpl, int template_id,
                           const std::vector<std::string>& fillers, std::size_t start, bool prepend_bos);

/// Clean half. Each emitted sample comes from a specific template (five drawn
/// fillers) that passes the probability-ratio filter at every start index.
/// Start indices cycle 1..S and templates are balanced greedily, so per-template
/// and per-start counts differ by at most one. Throws GenerationExhaustedError.
TaskDataset generate_clean(const PairScorer& scorer, const Tokenizer& tok, const SequenceLexicon& lexicon,
                           const std::vector<PromptTemplate>& templates, std::size_t n_samples,
                           std::uint64_t seed, const GenerationOptions& options = {});

/// Four uniform member indices whose last two are not consecutive.
std::vector<std::size_t> draw_corrupt_members(Rng& rng, std::size_t lexicon_size);

/// Fills `dataset.corrupted` from the "corruption" substream of `seed`.
void corrupt(TaskDataset& dataset, std::uint64_t seed, const Tokenizer& tok);

/// The member-only prompts ("1 2 3 4" ... "8 9 10 11"), one per start index.
std::vector<PromptSample> pure_sequence_prompts(const Tokenizer& tok, const SequenceLexicon& lexicon,
                                                std::size_t length = 4, bool prepend_bos = true);

void write_jsonl(const TaskDataset& dataset, const std::filesystem::path& path);
TaskDataset read_jsonl(const std::filesystem::path& path);

}  // namespace seqcirc
