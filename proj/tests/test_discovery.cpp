#include <filesystem>
#include <random>

#include "doctest.h"
#include "seqcirc/discovery.hpp"
#include "seqcirc/errors.hpp"

using namespace seqcirc;

namespace {

const Model& tiny() {
  static const Model m = Model::load(std::filesystem::path(SEQCIRC_TEST_DATA) / "tiny_gpt2.safetensors");
  return m;
}

// Random prompts whose answer is the clean top-1 and incorrect the clean bottom-1.
TaskDataset scored(std::size_t n, unsigned seed) {
  std::mt19937 gen(seed);
  std::uniform_int_distribution<int> tok(0, tiny().config().vocab_size - 1);
  TaskDataset ds;
  ds.task = "synthetic";
  ds.seed = seed;
  for (std::size_t i = 0; i < n; ++i) {
    PromptSample s;
    s.tokens.resize(10);
    for (auto& t : s.tokens) t = tok(gen);
    s.member_positions = {1, 4, 7, 9};
    const auto c = tiny().forward(s.tokens);
    const auto row = c.logits.row(c.logits.rows() - 1);
    s.answer_id = static_cast<TokenId>(std::max_element(row.begin(), row.end()) - row.begin());
    s.incorrect_id = static_cast<TokenId>(std::min_element(row.begin(), row.end()) - row.begin());
    std::vector<TokenId> corrupted = s.tokens;
    for (int p : s.member_positions) corrupted[static_cast<std::size_t>(p)] = tok(gen);
    ds.clean.push_back(std::move(s));
    ds.corrupted.push_back(std::move(corrupted));
  }
  return ds;
}

// Straightforward pruning loop without prefix reuse, used as the oracle.
std::set<NodeId> naive_prune(Evaluator& ev, const SearchConfig& cfg, int& sweeps) {
  std::set<NodeId> circuit(ev.nodes().begin(), ev.nodes().end());
  for (sweeps = 1; sweeps <= cfg.max_sweeps; ++sweeps) {
    const auto dir = sweeps % 2 ? SweepDirection::Backward : SweepDirection::Forward;
    bool changed = false;
    for (const NodeId& n : sweep_order(2, 4, dir)) {
      if (!circuit.count(n)) continue;
      std::set<NodeId> ablate = complement(ev, circuit);
      ablate.insert(n);
      if (ev.evaluate(ablate).performance_pct >= cfg.t_node) {
        circuit.erase(n);
        changed = true;
      }
    }
    if (!changed) break;
  }
  return circuit;
}

}  // namespace

TEST_CASE("sweep order") {
  const auto back = sweep_order(2, 2, SweepDirection::Backward);
  const std::vector<NodeId> want_back = {NodeId::Mlp(1), NodeId::Head(1, 0), NodeId::Head(1, 1),
                                         NodeId::Mlp(0), NodeId::Head(0, 0), NodeId::Head(0, 1)};
  CHECK(back == want_back);
  const auto fwd = sweep_order(2, 2, SweepDirection::Forward);
  const std::vector<NodeId> want_fwd = {NodeId::Head(0, 0), NodeId::Head(0, 1), NodeId::Mlp(0),
                                        NodeId::Head(1, 0), NodeId::Head(1, 1), NodeId::Mlp(1)};
  CHECK(fwd == want_fwd);
}

TEST_CASE("search config validation") {
  SearchConfig c;
  CHECK(c.t_node == 80.0);
  CHECK(c.t_edge == 80.0);
  CHECK(c.max_sweeps == 10);
  CHECK_NOTHROW(c.validate());
  c.t_node = 0.0;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c.t_node = 100.5;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c.t_node = 100.0;
  c.max_sweeps = 0;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
}

TEST_CASE("no-op ablations prune every node") {
  TaskDataset ds = scored(4, 1);
  ds.corrupted.clear();
  for (const auto& s : ds.clean) ds.corrupted.push_back(s.tokens);
  ds.clean.resize(1);
  ds.corrupted.resize(1);
  Evaluator ev(tiny(), ds, AblationMode::MeanCorrupted, 1);
  const NodePruneResult r = prune_nodes(ev, SearchConfig{});
  CHECK(r.circuit.empty());
  CHECK(r.converged);
  CHECK(r.sweeps == 2);
  CHECK(r.evaluations == 10);
  CHECK(r.score.performance_pct == doctest::Approx(100.0).epsilon(1e-6));
}

TEST_CASE("node pruning matches the direct loop and is a fixed point") {
  const TaskDataset ds = scored(12, 2);
  for (double t : {50.0, 80.0, 95.0}) {
    SearchConfig cfg;
    cfg.t_node = t;
    Evaluator ev(tiny(), ds, AblationMode::MeanCorrupted, 2);
    const NodePruneResult r = prune_nodes(ev, cfg);

    Evaluator plain(tiny(), ds, AblationMode::MeanCorrupted, 2, ev.mean_cache());
    int sweeps = 0;
    CHECK(naive_prune(plain, cfg, sweeps) == r.circuit);
    CHECK(r.sweeps == sweeps);
    CHECK(r.converged);

    const auto base = complement(plain, r.circuit);
    for (const NodeId& n : r.circuit) {
      auto ablate = base;
      ablate.insert(n);
      CHECK(plain.evaluate(ablate).performance_pct < t);
    }
    CHECK(r.score.performance_pct == plain.evaluate(base).performance_pct);
    CHECK(r.score.performance_pct >= t);

    std::size_t in_sweep = 0;
    int current = 0;
    for (const auto& step : r.trace) {
      if (step.sweep != current) {
        current = step.sweep;
        in_sweep = 0;
      }
      CHECK(++in_sweep <= 10);
    }

    Evaluator again(tiny(), ds, AblationMode::MeanCorrupted, 1);
    const NodePruneResult r2 = prune_nodes(again, cfg);
    CHECK(r2.circuit == r.circuit);
    CHECK(r2.score.performance_pct == r.score.performance_pct);
  }
}

TEST_CASE("non-convergence is reported") {
  const TaskDataset ds = scored(8, 3);
  SearchConfig cfg;
  cfg.max_sweeps = 1;
  Evaluator ev(tiny(), ds, AblationMode::Zero);
  cfg.mode = AblationMode::Zero;
  const NodePruneResult r = prune_nodes(ev, cfg);
  CHECK(r.sweeps == 1);
  if (r.circuit.size() < 10) CHECK_FALSE(r.converged);
}

TEST_CASE("pruning refuses an unfit dataset") {
  TaskDataset ds = scored(4, 4);
  for (auto& s : ds.clean) std::swap(s.answer_id, s.incorrect_id);
  Evaluator ev(tiny(), ds, AblationMode::MeanCorrupted);
  CHECK_THROWS_AS(prune_nodes(ev, SearchConfig{}), DatasetUnfitError);
  CHECK_THROWS_AS(prune_edges(ev, {NodeId::Mlp(0)}, SearchConfig{}), DatasetUnfitError);
  Evaluator zero(tiny(), scored(2, 4), AblationMode::Zero);
  CHECK_THROWS_AS(prune_nodes(zero, SearchConfig{}), ArgumentError);  // mode mismatch
}

TEST_CASE("path patching an edge") {
  const TaskDataset ds = scored(6, 5);
  Evaluator ev(tiny(), ds, AblationMode::MeanCorrupted);
  const std::set<NodeId> nodes = {NodeId::Head(0, 1), NodeId::Mlp(0), NodeId::Head(1, 2), NodeId::Mlp(1)};
  CHECK_THROWS_AS(path_patch_edge(ev, nodes, {NodeId::Head(1, 2), ReceiverSlot::Q(1, 0)}), ArgumentError);

  const Edge e{NodeId::Head(0, 1), ReceiverSlot::V(1, 2)};
  const EvalResult r = path_patch_edge(ev, nodes, e);
  CHECK(r.performance_pct == ev.evaluate(complement(ev, nodes), {e}).performance_pct);

  // With the corrupted half equal to the clean half the replacement is the sender's own value.
  TaskDataset same = scored(1, 6);
  same.corrupted = {same.clean[0].tokens};
  Evaluator self(tiny(), same, AblationMode::MeanCorrupted, 1);
  const double circuit_score = evaluate_circuit(self, nodes).performance_pct;
  for (const Edge& edge : {e, Edge{NodeId::Mlp(0), ReceiverSlot::MlpIn(1)}, Edge{NodeId::Mlp(1), ReceiverSlot::Final()}}) {
    CHECK(path_patch_edge(self, nodes, edge).performance_pct == doctest::Approx(circuit_score).epsilon(1e-5));
  }
}

TEST_CASE("receiver order") {
  const std::set<NodeId> nodes = {NodeId::Head(0, 1), NodeId::Mlp(0), NodeId::Head(1, 2), NodeId::Head(1, 0)};
  const auto order = receiver_order(nodes, 2);
  const std::vector<ReceiverSlot> want = {ReceiverSlot::Final(),   ReceiverSlot::Q(1, 0), ReceiverSlot::K(1, 0),
                                          ReceiverSlot::V(1, 0),   ReceiverSlot::Q(1, 2), ReceiverSlot::K(1, 2),
                                          ReceiverSlot::V(1, 2),   ReceiverSlot::MlpIn(0), ReceiverSlot::Q(0, 1),
                                          ReceiverSlot::K(0, 1),   ReceiverSlot::V(0, 1)};
  CHECK(order == want);
}

TEST_CASE("edge pruning") {
  const TaskDataset ds = scored(10, 7);
  SearchConfig cfg;
  cfg.t_node = 60.0;
  Evaluator ev(tiny(), ds, AblationMode::MeanCorrupted, 2);
  const auto nodes = prune_nodes(ev, cfg).circuit;
  REQUIRE_FALSE(nodes.empty());

  SUBCASE("matches a direct loop") {
    cfg.t_edge = 60.0;
    const EdgePruneResult r = prune_edges(ev, nodes, cfg);
    Evaluator plain(tiny(), ds, AblationMode::MeanCorrupted, 2, ev.mean_cache());
    EdgeSet removed, kept;
    for (const ReceiverSlot& rec : receiver_order(nodes, 2)) {
      for (const NodeId& s : sweep_order(2, 4, SweepDirection::Backward)) {
        if (!nodes.count(s) || !can_feed(s, rec)) continue;
        if (path_patch_edge(plain, nodes, {s, rec}, removed).performance_pct < cfg.t_edge) {
          kept.insert({s, rec});
        } else {
          removed.insert({s, rec});
        }
      }
    }
    CHECK(r.graph.edges == kept);
    CHECK(r.removed == removed);
    for (const NodeId& n : r.graph.nodes) {
      const bool has_edge = std::any_of(r.graph.edges.begin(), r.graph.edges.end(), [&](const Edge& e) {
        return e.sender == n || (e.receiver.kind != ReceiverSlot::Kind::ResidPostFinal && e.receiver.owner() == n);
      });
      CHECK(has_edge);
    }
    for (const Edge& e : r.graph.edges) {
      CHECK(r.graph.nodes.count(e.sender) == 1);
      if (e.receiver.kind != ReceiverSlot::Kind::ResidPostFinal) CHECK(r.graph.nodes.count(e.receiver.owner()) == 1);
    }
    CHECK(r.graph.score.performance_pct == plain.evaluate(complement(plain, nodes), removed).performance_pct);
  }
  SUBCASE("zero threshold removes everything") {
    cfg.t_edge = 0.0;
    const EdgePruneResult r = prune_edges(ev, nodes, cfg);
    CHECK(r.graph.edges.empty());
    CHECK(r.graph.nodes.empty());
    CHECK_FALSE(r.trace.empty());
  }
}

TEST_CASE("circuit graph serialisation") {
  CircuitGraph g;
  g.task = "numerals";
  g.seed = 42;
  g.nodes = {NodeId::Head(4, 4), NodeId::Head(7, 11), NodeId::Head(9, 1), NodeId::Mlp(9)};
  g.edges = {{NodeId::Head(7, 11), ReceiverSlot::V(9, 1)},
             {NodeId::Head(4, 4), ReceiverSlot::Q(9, 1)},
             {NodeId::Head(9, 1), ReceiverSlot::MlpIn(9)},
             {NodeId::Mlp(9), ReceiverSlot::Final()}};
  g.score = {3.5, 2.9, 82.857142857142861};
  g.config.t_node = 80.0;
  g.config.t_edge = 75.5;
  g.config.mode = AblationMode::ResampleCorrupted;

  const CircuitGraph back = CircuitGraph::from_json(g.to_json());
  CHECK(back.task == g.task);
  CHECK(back.seed == g.seed);
  CHECK(back.nodes == g.nodes);
  CHECK(back.edges == g.edges);
  CHECK(back.score.performance_pct == g.score.performance_pct);
  CHECK(back.score.clean_logit_diff == g.score.clean_logit_diff);
  CHECK(back.config.t_edge == 75.5);
  CHECK(back.config.mode == AblationMode::ResampleCorrupted);
  CHECK(back.to_json() == g.to_json());

  const auto path = std::filesystem::temp_directory_path() / "seqcirc_graph.json";
  g.save(path);
  CHECK(CircuitGraph::load(path).to_json() == g.to_json());
  std::filesystem::remove(path);

  const std::string dot = g.to_dot();
  CHECK(dot.find("\"7.11\" -> \"9.1\" [label=\"v\"]") != std::string::npos);
  CHECK(dot.find("label=\"MLP 9\"") != std::string::npos);
  CHECK(dot.find("\"mlp.9\" -> \"resid_post\"") != std::string::npos);

  CHECK_THROWS_AS(CircuitGraph::from_json("{\"nodes\": []"), ArgumentError);
  CHECK_THROWS_AS(CircuitGraph::from_json(R"({"nodes": [], "edges": [{"from": "9.1", "to": "4.4", "slot": "q"}]})"),
                  ArgumentError);
}
