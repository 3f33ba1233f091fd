#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "json.hpp"
#include "seqcirc/discovery.hpp"
#include "seqcirc/errors.hpp"

namespace seqcirc {

namespace {

std::string owner_label(const ReceiverSlot& r) {
  return r.kind == ReceiverSlot::Kind::ResidPostFinal ? "resid_post" : r.owner().str();
}

std::string dot_label(const NodeId& n) {
  return n.is_head() ? n.str() : fmt::format("MLP {}", n.layer);
}

}  // namespace

std::string CircuitGraph::to_json() const {
  nlohmann::json j;
  j["task"] = task;
  j["seed"] = seed;
  nlohmann::json nodes_j = nlohmann::json::array();
  for (const NodeId& n : nodes) nodes_j.push_back(n.str());
  j["nodes"] = std::move(nodes_j);
  nlohmann::json edges_j = nlohmann::json::array();
  for (const Edge& e : edges) {
    edges_j.push_back({{"from", e.sender.str()}, {"to", owner_label(e.receiver)},
                       {"slot", std::string(e.receiver.slot_name())}});
  }
  j["edges"] = std::move(edges_j);
  j["score"] = {{"clean_logit_diff", score.clean_logit_diff},
                {"ablated_logit_diff", score.ablated_logit_diff},
                {"performance_pct", score.performance_pct}};
  j["config"] = {{"t_node", config.t_node},
                 {"t_edge", config.t_edge},
                 {"max_sweeps", config.max_sweeps},
                 {"mode", std::string(mode_name(config.mode))}};
  return j.dump(2);
}

CircuitGraph CircuitGraph::from_json(const std::string& text) {
  CircuitGraph g;
  try {
    const auto j = nlohmann::json::parse(text);
    g.task = j.value("task", std::string{});
    g.seed = j.value("seed", std::uint64_t{0});
    for (const auto& n : j.at("nodes")) g.nodes.insert(NodeId::parse(n.get<std::string>()));
    for (const auto& e : j.at("edges")) {
      const Edge edge{NodeId::parse(e.at("from").get<std::string>()),
                      ReceiverSlot::from_parts(e.at("to").get<std::string>(), e.value("slot", std::string{}))};
      if (!can_feed(edge.sender, edge.receiver)) {
        throw ArgumentError(fmt::format("edge {} -> {} does not point downstream", edge.sender.str(),
                                        edge.receiver.str()));
      }
      g.edges.insert(edge);
    }
    if (j.contains("score")) {
      const auto& s = j["score"];
      g.score.clean_logit_diff = s.value("clean_logit_diff", 0.0);
      g.score.ablated_logit_diff = s.value("ablated_logit_diff", 0.0);
      g.score.performance_pct = s.value("performance_pct", 0.0);
    }
    if (j.contains("config")) {
      const auto& c = j["config"];
      g.config.t_node = c.value("t_node", g.config.t_node);
      g.config.t_edge = c.value("t_edge", g.config.t_edge);
      g.config.max_sweeps = c.value("max_sweeps", g.config.max_sweeps);
      g.config.mode = parse_mode(c.value("mode", std::string("mean")));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(fmt::format("malformed circuit graph: {}", e.what()));
  }
  return g;
}

void CircuitGraph::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ArgumentError(fmt::format("cannot write '{}'", path.string()));
  out << to_json() << '\n';
  if (!out) throw ArgumentError(fmt::format("failed writing '{}'", path.string()));
}

CircuitGraph CircuitGraph::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError(fmt::format("cannot open circuit graph '{}'", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

std::string CircuitGraph::to_dot() const {
  std::string out = "digraph circuit {\n  rankdir=BT;\n  node [shape=box, fontname=\"Helvetica\"];\n";
  bool final_used = false;
  for (const Edge& e : edges) final_used = final_used || e.receiver.kind == ReceiverSlot::Kind::ResidPostFinal;
  for (const NodeId& n : nodes) {
    const char* fill = n.is_head() ? "lightblue" : "lightyellow";
    out += fmt::format("  \"{}\" [label=\"{}\", style=filled, fillcolor={}];\n", n.str(), dot_label(n), fill);
  }
  if (final_used) out += "  \"resid_post\" [label=\"Resid_post\", shape=ellipse];\n";
  for (const Edge& e : edges) {
    const std::string to = owner_label(e.receiver);
    if (e.receiver.is_head_slot()) {
      out += fmt::format("  \"{}\" -> \"{}\" [label=\"{}\"];\n", e.sender.str(), to, e.receiver.slot_name());
    } else {
      out += fmt::format("  \"{}\" -> \"{}\";\n", e.sender.str(), to);
    }
  }
  out += "}\n";
  return out;
}

}  // namespace seqcirc
