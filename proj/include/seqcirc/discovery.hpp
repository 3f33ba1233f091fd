#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "seqcirc/patching.hpp"

namespace seqcirc {

struct SearchConfig {
  double t_node = 80.0;  // percent
  double t_edge = 80.0;  // percent
  int max_sweeps = 10;
  AblationMode mode = AblationMode::MeanCorrupted;
  /// Memory allowed for the prefix-reuse reference run.
  std::size_t reuse_budget_bytes = std::size_t{2} << 30;

  /// Throws ArgumentError unless both thresholds lie in (0, 100] and max_sweeps > 0.
  void validate() const;
};

enum class SweepDirection { Backward, Forward };

/// Candidate order of one sweep. Backward: layers from last to first, each
/// layer's MLP then its heads. Forward: layers from first to last, heads then MLP.
std::vector<NodeId> sweep_order(int n_layers, int n_heads, SweepDirection dir);

struct PruneStep {
  int sweep = 0;  // 1-based
  SweepDirection direction = SweepDirection::Backward;
  NodeId node;
  double performance_pct = 0.0;
  bool kept = false;
};

struct NodePruneResult {
  std::set<NodeId> circuit;
  /// Score of `circuit` on the evaluator's dataset.
  EvalResult score;
  int sweeps = 0;
  bool converged = false;
  std::size_t evaluations = 0;
  std::vector<PruneStep> trace;
};

using ProgressFn = std::function<void(const std::string&)>;

/// Iterative node pruning.
///
/// Starts from every node. Sweeps alternate backward and forward; each
/// direction counts as one sweep. A candidate is evaluated with every node
/// outside the current circuit ablated plus itself; it stays when performance
/// falls below t_node and is removed immediately otherwise. Stops after the
/// first sweep that removes nothing, or after max_sweeps (converged = false).
/// Throws DatasetUnfitError when the clean logit difference is not positive.
NodePruneResult prune_nodes(Evaluator& ev, const SearchConfig& config, const ProgressFn& progress = {});

/// Scores the circuit `nodes` (everything else ablated) with `removed` edges and
/// `edge` removed as well: the sender's direct contribution to the receiver
/// slot is replaced by its ablation value while every other path keeps the
/// circuit's activations. Throws ArgumentError for edges that do not point
/// downstream.
EvalResult path_patch_edge(Evaluator& ev, const std::set<NodeId>& nodes, const Edge& edge,
                           const EdgeSet& removed = {});

struct CircuitGraph {
  std::set<NodeId> nodes;
  EdgeSet edges;
  EvalResult score;
  SearchConfig config;
  std::uint64_t seed = 0;
  std::string task;

  /// {nodes, edges: [{from, to, slot}], score, config, seed, task}.
  std::string to_json() const;
  static CircuitGraph from_json(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static CircuitGraph load(const std::filesystem::path& path);
  /// Graphviz digraph with "L.H" / "MLP L" labels and q/k/v edge labels.
  std::string to_dot() const;
};

struct EdgePruneResult {
  CircuitGraph graph;
  /// Every edge that was tested, in order, with its score.
  std::vector<std::pair<Edge, double>> trace;
  EdgeSet removed;
};

/// Receiver order for edge pruning: the final residual, then layers from last
/// to first, each layer's MLP input then the q, k, v slots of its heads.
std::vector<ReceiverSlot> receiver_order(const std::set<NodeId>& nodes, int n_layers);

/// Iterative edge pruning over the circuit `nodes`. Each receiver's upstream
/// senders are tested in backward-sweep order; an edge stays when removing it
/// drops performance below t_edge, otherwise its removal is kept for every
/// later test. Nodes left without edges are dropped.
EdgePruneResult prune_edges(Evaluator& ev, const std::set<NodeId>& nodes, const SearchConfig& config,
                            const ProgressFn& progress = {});

}  // namespace seqcirc
