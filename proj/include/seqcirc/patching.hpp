#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "seqcirc/dataset.hpp"
#include "seqcirc/model.hpp"
#include "seqcirc/node.hpp"

namespace seqcirc {

enum class AblationMode { MeanCorrupted, Zero, ResampleCorrupted };

/// "mean", "zero", "resample". Throws ArgumentError.
AblationMode parse_mode(std::string_view text);
std::string_view mode_name(AblationMode mode);

/// A sender -> receiver-slot interaction.
struct Edge {
  NodeId sender;
  ReceiverSlot receiver;
  auto operator<=>(const Edge&) const = default;
};
using EdgeSet = std::set<Edge>;

/// Per-position mean of every node's output over the corrupted half.
class MeanCache {
 public:
  /// Sums in double, in sample order, so the result does not depend on `workers`.
  static MeanCache build(const Model& model, const TaskDataset& dataset, std::size_t workers = 0);

  const Tensor& at(const NodeId& node) const;
  std::size_t positions() const noexcept { return positions_; }
  const std::map<NodeId, Tensor>& means() const noexcept { return means_; }

 private:
  std::map<NodeId, Tensor> means_;
  std::size_t positions_ = 0;
};

struct EvalResult {
  double clean_logit_diff = 0.0;
  double ablated_logit_diff = 0.0;
  double performance_pct = 0.0;
};

/// logits[answer] - logits[incorrect]. Throws ArgumentError for ids outside the row.
double logit_diff(std::span<const float> logits, TokenId answer_id, TokenId incorrect_id);

/// Scores ablations of one model on one dataset.
///
/// Performance is 100 * mean(ablated diff) / mean(clean diff), with means taken
/// over samples in order. Ablated nodes have their output replaced at every
/// position; removed edges swap only the sender's direct contribution into the
/// receiver slot (see PatchEntry::sender).
///
/// With prefix reuse enabled the evaluator keeps a reference run (residual
/// entering every layer, plus outputs of tracked nodes) and starts each new
/// evaluation at the first layer where its patches differ from the reference.
/// Results are bit-identical to full runs.
class Evaluator {
 public:
  Evaluator(const Model& model, const TaskDataset& dataset, AblationMode mode, std::size_t workers = 0,
            std::shared_ptr<const MeanCache> means = nullptr);

  const Model& model() const noexcept { return model_; }
  const TaskDataset& dataset() const noexcept { return dataset_; }
  AblationMode mode() const noexcept { return mode_; }
  std::size_t workers() const noexcept { return workers_; }
  const std::vector<NodeId>& nodes() const noexcept { return nodes_; }
  std::shared_ptr<const MeanCache> mean_cache() const noexcept { return means_; }

  /// Mean clean logit difference (computed once).
  double clean_logit_diff();
  const std::vector<double>& clean_diffs();

  /// Throws UndefinedScoreError when the clean mean is zero.
  EvalResult evaluate(const std::set<NodeId>& ablate, const EdgeSet& removed = {});
  /// Per-sample ablated logit differences.
  std::vector<double> ablated_diffs(const std::set<NodeId>& ablate, const EdgeSet& removed = {});

  /// Turns on prefix reuse. Outputs of `tracked` nodes are kept so that removed
  /// edges from them can be resumed. Memory use is checked against `budget_bytes`;
  /// reuse stays off when it would not fit.
  bool enable_prefix_reuse(std::vector<NodeId> tracked, std::size_t budget_bytes = std::size_t{1} << 30);
  /// Makes the most recent evaluation the reference run.
  void commit_last();
  bool prefix_reuse() const noexcept { return reuse_; }

  /// Layer evaluations were resumed from in the most recent call (0 = full run).
  int last_resume_layer() const noexcept { return last_resume_layer_; }

  /// Patch plan for sample `i` (values depend on the sample in resample mode).
  PatchPlan plan_for(std::size_t i, const std::set<NodeId>& ablate, const EdgeSet& removed) const;

 private:
  struct SampleState {
    std::vector<Tensor> resid;  // resid[l] enters layer l; resid[L] is the final residual
    std::map<NodeId, Tensor> outputs;
    double diff = 0.0;
    int from_layer = 0;
  };

  std::map<NodeId, Tensor> corrupted_outputs(std::size_t i, const std::set<NodeId>& nodes) const;
  int first_changed_layer(const std::set<NodeId>& ablate, const EdgeSet& removed) const;

  const Model& model_;
  const TaskDataset& dataset_;
  AblationMode mode_;
  std::size_t workers_;
  std::shared_ptr<const MeanCache> means_;
  std::vector<NodeId> nodes_;
  std::optional<std::vector<double>> clean_;

  bool reuse_ = false;
  std::vector<NodeId> tracked_;
  bool have_reference_ = false;
  std::set<NodeId> ref_ablate_, last_ablate_;
  EdgeSet ref_removed_, last_removed_;
  std::vector<SampleState> reference_, pending_;
  int last_resume_layer_ = 0;
};

/// Ablates `ablate`.
EvalResult eval_performance(Evaluator& ev, const std::set<NodeId>& ablate);
/// Ablates every node outside `circuit`.
EvalResult evaluate_circuit(Evaluator& ev, const std::set<NodeId>& circuit);
/// All nodes of the evaluator's model not in `keep`.
std::set<NodeId> complement(const Evaluator& ev, const std::set<NodeId>& keep);

/// Score of `circuit` minus score of `circuit` without `node`, in percentage
/// points. Throws ArgumentError if `node` is not in the circuit.
double node_drop(Evaluator& ev, const std::set<NodeId>& circuit, const NodeId& node);

/// `count` sets of `size` distinct nodes from `universe`, never using `exclude`.
std::vector<std::set<NodeId>> random_component_sets(const std::vector<NodeId>& universe, std::size_t size,
                                                    std::size_t count, const std::set<NodeId>& exclude,
                                                    std::uint64_t seed);

struct ContinuationPrompt {
  std::vector<TokenId> tokens;
  std::vector<TokenId> expected;  // continuation that must prefix the greedy output
  std::string label;
};

struct DestroyResult {
  double destroyed_pct = 0.0;
  std::size_t counted = 0;
  std::size_t destroyed = 0;
  /// Prompts the unablated model already fails; left out of the percentage.
  std::vector<std::string> excluded;
};

/// Zero-ablates `ablate`, greedily generates len(expected) tokens per prompt and
/// reports the share that no longer begin with the expected continuation.
DestroyResult percentage_destroyed(const Model& model, const std::vector<ContinuationPrompt>& prompts,
                                   const std::set<NodeId>& ablate);

struct DropRow {
  std::string node;
  std::string task;
  double drop_pct = 0.0;
};

/// CSV with columns node,task,drop_pct.
void write_drop_csv(const std::vector<DropRow>& rows, const std::filesystem::path& path);

/// JSON array of node labels.
std::set<NodeId> read_node_set(const std::filesystem::path& path);
void write_node_set(const std::set<NodeId>& nodes, const std::filesystem::path& path);

}  // namespace seqcirc
