#include "seqcirc/patching.hpp"

#include <algorithm>
#include <fstream>

#include <fmt/format.h>

#include "json.hpp"
#include "seqcirc/errors.hpp"
#include "seqcirc/parallel.hpp"
#include "seqcirc/rng.hpp"

namespace seqcirc {

AblationMode parse_mode(std::string_view text) {
  if (text == "mean") return AblationMode::MeanCorrupted;
  if (text == "zero") return AblationMode::Zero;
  if (text == "resample") return AblationMode::ResampleCorrupted;
  throw ArgumentError(fmt::format("unknown ablation mode '{}' (expected mean, zero or resample)", text));
}

std::string_view mode_name(AblationMode mode) {
  switch (mode) {
    case AblationMode::MeanCorrupted: return "mean";
    case AblationMode::Zero: return "zero";
    case AblationMode::ResampleCorrupted: return "resample";
  }
  return "?";
}

MeanCache MeanCache::build(const Model& model, const TaskDataset& dataset, std::size_t workers) {
  if (dataset.corrupted.empty()) throw ArgumentError("mean cache needs a corrupted dataset");
  dataset.validate();
  const ModelConfig& cfg = model.config();
  const std::size_t n = dataset.corrupted.size();
  const std::size_t pos = dataset.seq_len();
  const std::size_t width = pos * static_cast<std::size_t>(cfg.d_model);
  const std::vector<NodeId> nodes = all_nodes(cfg.n_layers, cfg.n_heads);

  std::vector<std::vector<double>> sums(nodes.size(), std::vector<double>(width, 0.0));
  const std::size_t block = std::max<std::size_t>(1, 2 * resolve_workers(workers));
  std::vector<ActivationCache> caches(block);
  ForwardOptions opt;
  opt.capture_head_out = true;
  opt.capture_layer_out = true;
  opt.logits = LogitsMode::None;

  for (std::size_t begin = 0; begin < n; begin += block) {
    const std::size_t count = std::min(block, n - begin);
    parallel_for(count, workers, [&](std::size_t k) { caches[k] = model.forward(dataset.corrupted[begin + k], opt); });
    for (std::size_t k = 0; k < count; ++k) {
      for (std::size_t j = 0; j < nodes.size(); ++j) {
        const NodeId& node = nodes[j];
        const Tensor& t = node.is_head() ? caches[k].head_out[node.layer][node.head] : caches[k].mlp_out[node.layer];
        auto& s = sums[j];
        const float* v = t.ptr();
        for (std::size_t e = 0; e < width; ++e) s[e] += v[e];
      }
      caches[k] = ActivationCache{};
    }
  }

  MeanCache cache;
  cache.positions_ = pos;
  for (std::size_t j = 0; j < nodes.size(); ++j) {
    Tensor m({pos, static_cast<std::size_t>(cfg.d_model)});
    for (std::size_t e = 0; e < width; ++e) m.data()[e] = static_cast<float>(sums[j][e] / static_cast<double>(n));
    cache.means_.emplace(nodes[j], std::move(m));
  }
  return cache;
}

const Tensor& MeanCache::at(const NodeId& node) const {
  auto it = means_.find(node);
  if (it == means_.end()) throw ArgumentError(fmt::format("mean cache has no entry for {}", node.str()));
  return it->second;
}

double logit_diff(std::span<const float> logits, TokenId answer_id, TokenId incorrect_id) {
  const auto n = static_cast<TokenId>(logits.size());
  if (answer_id < 0 || answer_id >= n || incorrect_id < 0 || incorrect_id >= n) {
    throw ArgumentError(fmt::format("logit_diff: ids {} / {} outside a vocabulary of {}", answer_id,
                                    incorrect_id, n));
  }
  return static_cast<double>(logits[static_cast<std::size_t>(answer_id)]) -
         static_cast<double>(logits[static_cast<std::size_t>(incorrect_id)]);
}

EvalResult eval_performance(Evaluator& ev, const std::set<NodeId>& ablate) { return ev.evaluate(ablate); }

std::set<NodeId> complement(const Evaluator& ev, const std::set<NodeId>& keep) {
  std::set<NodeId> out;
  for (const NodeId& n : ev.nodes()) {
    if (!keep.count(n)) out.insert(n);
  }
  return out;
}

EvalResult evaluate_circuit(Evaluator& ev, const std::set<NodeId>& circuit) {
  return ev.evaluate(complement(ev, circuit));
}

double node_drop(Evaluator& ev, const std::set<NodeId>& circuit, const NodeId& node) {
  if (!circuit.count(node)) {
    throw ArgumentError(fmt::format("node {} is not part of the circuit", node.str()));
  }
  std::set<NodeId> without = circuit;
  without.erase(node);
  return evaluate_circuit(ev, circuit).performance_pct - evaluate_circuit(ev, without).performance_pct;
}

std::vector<std::set<NodeId>> random_component_sets(const std::vector<NodeId>& universe, std::size_t size,
                                                    std::size_t count, const std::set<NodeId>& exclude,
                                                    std::uint64_t seed) {
  std::vector<NodeId> pool;
  for (const NodeId& n : universe) {
    if (!exclude.count(n)) pool.push_back(n);
  }
  if (size > pool.size()) {
    throw ArgumentError(fmt::format("cannot draw {} components from the {} available", size, pool.size()));
  }
  Rng rng = Rng::substream(seed, "random-baselines");
  std::vector<std::set<NodeId>> sets;
  for (std::size_t c = 0; c < count; ++c) {
    std::vector<NodeId> p = pool;
    std::set<NodeId> s;
    for (std::size_t i = 0; i < size; ++i) {
      const std::size_t j = i + rng.below(p.size() - i);
      std::swap(p[i], p[j]);
      s.insert(p[i]);
    }
    sets.push_back(std::move(s));
  }
  return sets;
}

DestroyResult percentage_destroyed(const Model& model, const std::vector<ContinuationPrompt>& prompts,
                                   const std::set<NodeId>& ablate) {
  PatchPlan plan;
  for (const NodeId& n : ablate) plan.add({PatchSite::output_of(n), {}, {}, {}});
  auto continues = [](const std::vector<TokenId>& out, const ContinuationPrompt& p) {
    return std::equal(p.expected.begin(), p.expected.end(), out.begin() + static_cast<long>(p.tokens.size()));
  };
  DestroyResult r;
  for (const ContinuationPrompt& p : prompts) {
    const int n_new = static_cast<int>(p.expected.size());
    if (!continues(model.generate(p.tokens, n_new), p)) {
      r.excluded.push_back(p.label);
      continue;
    }
    ++r.counted;
    if (!continues(model.generate(p.tokens, n_new, &plan), p)) ++r.destroyed;
  }
  r.destroyed_pct = r.counted == 0 ? 0.0 : 100.0 * static_cast<double>(r.destroyed) / static_cast<double>(r.counted);
  return r;
}

void write_drop_csv(const std::vector<DropRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ArgumentError(fmt::format("cannot write '{}'", path.string()));
  out << "node,task,drop_pct\n";
  for (const DropRow& r : rows) out << fmt::format("{},{},{:.4f}\n", r.node, r.task, r.drop_pct);
}

std::set<NodeId> read_node_set(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError(fmt::format("cannot open node set '{}'", path.string()));
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(fmt::format("'{}': {}", path.string(), e.what()));
  }
  const nlohmann::json& arr = j.is_object() ? j.at("nodes") : j;
  std::set<NodeId> out;
  for (const auto& v : arr) out.insert(NodeId::parse(v.get<std::string>()));
  return out;
}

void write_node_set(const std::set<NodeId>& nodes, const std::filesystem::path& path) {
  nlohmann::json arr = nlohmann::json::array();
  for (const NodeId& n : nodes) arr.push_back(n.str());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ArgumentError(fmt::format("cannot write '{}'", path.string()));
  out << arr.dump() << '\n';
}

}  // namespace seqcirc
