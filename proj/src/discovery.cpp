#include "seqcirc/discovery.hpp"

#include <fmt/format.h>

#include "seqcirc/errors.hpp"

namespace seqcirc {

void SearchConfig::validate() const {
  auto check = [](double t, const char* name) {
    if (!(t > 0.0 && t <= 100.0)) throw ArgumentError(fmt::format("{} must lie in (0, 100], got {}", name, t));
  };
  check(t_node, "t_node");
  check(t_edge, "t_edge");
  if (max_sweeps <= 0) throw ArgumentError(fmt::format("max_sweeps must be positive, got {}", max_sweeps));
}

std::vector<NodeId> sweep_order(int n_layers, int n_heads, SweepDirection dir) {
  std::vector<NodeId> out;
  if (dir == SweepDirection::Backward) {
    for (int l = n_layers - 1; l >= 0; --l) {
      out.push_back(NodeId::Mlp(l));
      for (int h = 0; h < n_heads; ++h) out.push_back(NodeId::Head(l, h));
    }
  } else {
    for (int l = 0; l < n_layers; ++l) {
      for (int h = 0; h < n_heads; ++h) out.push_back(NodeId::Head(l, h));
      out.push_back(NodeId::Mlp(l));
    }
  }
  return out;
}

namespace {

void require_fit(Evaluator& ev) {
  const double clean = ev.clean_logit_diff();
  if (!(clean > 0.0)) {
    throw DatasetUnfitError(fmt::format("the model does not solve '{}': mean clean logit difference is {:.4f}",
                                        ev.dataset().task, clean));
  }
}

}  // namespace

NodePruneResult prune_nodes(Evaluator& ev, const SearchConfig& config, const ProgressFn& progress) {
  config.validate();
  if (ev.mode() != config.mode) {
    throw ArgumentError(fmt::format("evaluator uses {} ablation but the search asks for {}", mode_name(ev.mode()),
                                    mode_name(config.mode)));
  }
  require_fit(ev);
  const ModelConfig& mc = ev.model().config();

  NodePruneResult res;
  res.circuit = std::set<NodeId>(ev.nodes().begin(), ev.nodes().end());
  std::set<NodeId> ablated;
  ev.enable_prefix_reuse({}, config.reuse_budget_bytes);
  ev.evaluate(ablated);
  ev.commit_last();

  for (int sweep = 1; sweep <= config.max_sweeps; ++sweep) {
    const SweepDirection dir = sweep % 2 == 1 ? SweepDirection::Backward : SweepDirection::Forward;
    std::size_t pruned = 0;
    for (const NodeId& n : sweep_order(mc.n_layers, mc.n_heads, dir)) {
      if (!res.circuit.count(n)) continue;
      ablated.insert(n);
      const double perf = ev.evaluate(ablated).performance_pct;
      ++res.evaluations;
      const bool kept = perf < config.t_node;
      if (kept) {
        ablated.erase(n);
      } else {
        res.circuit.erase(n);
        ev.commit_last();
        ++pruned;
      }
      res.trace.push_back({sweep, dir, n, perf, kept});
    }
    res.sweeps = sweep;
    if (progress) {
      progress(fmt::format("sweep {} ({}): pruned {}, circuit has {} nodes", sweep,
                           dir == SweepDirection::Backward ? "backward" : "forward", pruned, res.circuit.size()));
    }
    if (pruned == 0) {
      res.converged = true;
      break;
    }
  }
  res.score = ev.evaluate(ablated);
  return res;
}

EvalResult path_patch_edge(Evaluator& ev, const std::set<NodeId>& nodes, const Edge& edge, const EdgeSet& removed) {
  if (!can_feed(edge.sender, edge.receiver)) {
    throw ArgumentError(
        fmt::format("edge {} -> {} does not point downstream", edge.sender.str(), edge.receiver.str()));
  }
  EdgeSet all = removed;
  all.insert(edge);
  return ev.evaluate(complement(ev, nodes), all);
}

std::vector<ReceiverSlot> receiver_order(const std::set<NodeId>& nodes, int n_layers) {
  std::vector<ReceiverSlot> out{ReceiverSlot::Final()};
  for (int l = n_layers - 1; l >= 0; --l) {
    if (nodes.count(NodeId::Mlp(l))) out.push_back(ReceiverSlot::MlpIn(l));
    for (const NodeId& n : nodes) {
      if (n.layer != l || !n.is_head()) continue;
      out.push_back(ReceiverSlot::Q(l, n.head));
      out.push_back(ReceiverSlot::K(l, n.head));
      out.push_back(ReceiverSlot::V(l, n.head));
    }
  }
  return out;
}

EdgePruneResult prune_edges(Evaluator& ev, const std::set<NodeId>& nodes, const SearchConfig& config,
                            const ProgressFn& progress) {
  // t_edge = 0 is accepted here as the boundary case that removes every edge.
  if (!(config.t_edge >= 0.0 && config.t_edge <= 100.0)) {
    throw ArgumentError(fmt::format("t_edge must lie in [0, 100], got {}", config.t_edge));
  }
  if (ev.mode() != config.mode) {
    throw ArgumentError(fmt::format("evaluator uses {} ablation but the search asks for {}", mode_name(ev.mode()),
                                    mode_name(config.mode)));
  }
  require_fit(ev);
  const ModelConfig& mc = ev.model().config();
  for (const NodeId& n : nodes) {
    if (n.layer < 0 || n.layer >= mc.n_layers || (n.is_head() && (n.head < 0 || n.head >= mc.n_heads))) {
      throw ArgumentError(fmt::format("node {} does not exist in this model", n.str()));
    }
  }
  const std::set<NodeId> ablate = complement(ev, nodes);
  const std::vector<NodeId> senders_backward = sweep_order(mc.n_layers, mc.n_heads, SweepDirection::Backward);

  EdgePruneResult res;
  EdgeSet kept;
  ev.enable_prefix_reuse(std::vector<NodeId>(nodes.begin(), nodes.end()), config.reuse_budget_bytes);
  ev.evaluate(ablate);
  ev.commit_last();

  for (const ReceiverSlot& receiver : receiver_order(nodes, mc.n_layers)) {
    std::size_t kept_here = 0;
    for (const NodeId& sender : senders_backward) {
      if (!nodes.count(sender) || !can_feed(sender, receiver)) continue;
      const Edge e{sender, receiver};
      EdgeSet trial = res.removed;
      trial.insert(e);
      const double perf = ev.evaluate(ablate, trial).performance_pct;
      res.trace.emplace_back(e, perf);
      if (perf < config.t_edge) {
        kept.insert(e);
        ++kept_here;
      } else {
        res.removed = std::move(trial);
        ev.commit_last();
      }
    }
    if (progress) progress(fmt::format("receiver {}: kept {} edges", receiver.str(), kept_here));
  }

  CircuitGraph& g = res.graph;
  g.edges = kept;
  for (const Edge& e : kept) {
    g.nodes.insert(e.sender);
    if (e.receiver.kind != ReceiverSlot::Kind::ResidPostFinal) g.nodes.insert(e.receiver.owner());
  }
  g.score = ev.evaluate(ablate, res.removed);
  g.config = config;
  g.seed = ev.dataset().seed;
  g.task = ev.dataset().task;
  return res;
}

}  // namespace seqcirc
