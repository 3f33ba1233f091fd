// seqcirc: command-line driver for dataset generation, circuit discovery and
// the analysis exports. Every command writes into --out through a staging
// directory and finishes with a <command>.manifest.json.

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "experiment.hpp"
#include "json.hpp"
#include "seqcirc/analysis.hpp"
#include "seqcirc/dataset.hpp"
#include "seqcirc/discovery.hpp"
#include "seqcirc/errors.hpp"
#include "seqcirc/patching.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace seqcirc::cli {
namespace {

struct Overrides {
  std::string config_path;
  std::optional<std::string> model, vocab_dir, data_dir, task, mode, out, dataset;
  std::optional<std::size_t> n, sample_cap, workers, reuse_budget_mb;
  std::optional<std::uint64_t> seed;
  std::optional<double> t_node, t_edge;
  std::optional<int> max_sweeps;
  bool quiet = false;
};

ExperimentConfig resolve(const Overrides& o) {
  ExperimentConfig c;
  if (const char* env = std::getenv("SEQCIRC_MODEL"); env && *env) c.model_path = env;
  if (const char* env = std::getenv("SEQCIRC_VOCAB_DIR"); env && *env) c.vocab_dir = env;
  if (!o.config_path.empty()) {
    std::ifstream in(o.config_path);
    if (!in) throw ConfigError(fmt::format("cannot open config '{}'", o.config_path));
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError(fmt::format("config '{}': {}", o.config_path, e.what()));
    }
    c.merge_json(j);
  }
  auto apply = [](auto& field, const auto& opt) {
    if (opt) field = *opt;
  };
  apply(c.model_path, o.model);
  apply(c.vocab_dir, o.vocab_dir);
  apply(c.data_dir, o.data_dir);
  apply(c.task, o.task);
  apply(c.mode, o.mode);
  apply(c.out_dir, o.out);
  apply(c.dataset_path, o.dataset);
  apply(c.n_samples, o.n);
  apply(c.sample_cap, o.sample_cap);
  apply(c.workers, o.workers);
  apply(c.reuse_budget_mb, o.reuse_budget_mb);
  apply(c.seed, o.seed);
  apply(c.t_node, o.t_node);
  apply(c.t_edge, o.t_edge);
  apply(c.max_sweeps, o.max_sweeps);
  c.validate();
  return c;
}

struct Context {
  ExperimentConfig config;
  bool quiet = false;

  void log(const std::string& line) const {
    if (!quiet) std::cerr << line << '\n';
  }
  ProgressFn progress() const {
    if (quiet) return {};
    return [](const std::string& line) { std::cerr << line << '\n'; };
  }
};

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
  return out;
}

json eval_json(const EvalResult& r) {
  return {{"clean_logit_diff", r.clean_logit_diff},
          {"ablated_logit_diff", r.ablated_logit_diff},
          {"performance_pct", r.performance_pct}};
}

std::vector<std::string> labels(const std::set<NodeId>& nodes) {
  std::vector<std::string> out;
  for (const auto& n : nodes) out.push_back(n.str());
  return out;
}

std::vector<NodeId> parse_heads(const std::vector<std::string>& texts, const ModelConfig& mc) {
  std::vector<NodeId> heads;
  for (const auto& t : texts) {
    NodeId n;
    try {
      n = NodeId::parse(t);
    } catch (const ArgumentError& e) {
      throw ConfigError(e.what());
    }
    if (!n.is_head() || n.layer >= mc.n_layers || n.head >= mc.n_heads) {
      throw ConfigError(fmt::format("'{}' is not an attention head of this model", t));
    }
    heads.push_back(n);
  }
  return heads;
}

std::set<NodeId> load_circuit(const std::string& path, const ModelConfig& mc) {
  if (!fs::exists(path)) throw ConfigError(fmt::format("circuit file '{}' does not exist", path));
  std::set<NodeId> nodes;
  try {
    nodes = read_node_set(path);
  } catch (const ArgumentError& e) {
    throw ConfigError(fmt::format("circuit '{}': {}", path, e.what()));
  }
  for (const auto& n : nodes) {
    if (n.layer >= mc.n_layers || (n.is_head() && n.head >= mc.n_heads)) {
      throw ConfigError(fmt::format("circuit '{}' names {} outside the model", path, n.str()));
    }
  }
  return nodes;
}

// Mean activations always come from the full corrupted half, while the search
// itself may run on the first sample_cap prompts.
struct EvalSetup {
  TaskDataset full;
  TaskDataset subset;
  std::shared_ptr<const MeanCache> means;
};

EvalSetup prepare_eval(const Context& ctx, const Model& model, TaskDataset full) {
  EvalSetup s;
  s.full = std::move(full);
  s.full.validate();
  s.subset = s.full.head(ctx.config.sample_cap);
  if (parse_mode(ctx.config.mode) == AblationMode::MeanCorrupted) {
    ctx.log(fmt::format("mean activations over {} corrupted prompts", s.full.size()));
    s.means = std::make_shared<const MeanCache>(MeanCache::build(model, s.full, ctx.config.workers));
  }
  return s;
}

std::unique_ptr<Tokenizer> try_tokenizer(const ExperimentConfig& c) {
  try {
    return std::make_unique<Tokenizer>(load_tokenizer(c));
  } catch (const LoadError&) {
    return nullptr;
  }
}

TaskDataset dataset_for(const Context& ctx, const Model& model, const Tokenizer* tok) {
  if (ctx.config.dataset_path.empty()) {
    ctx.log(fmt::format("generating {} {} prompts (seed {})", ctx.config.n_samples, ctx.config.task,
                        ctx.config.seed));
  }
  return obtain_dataset(ctx.config, model, tok, ctx.config.task, ctx.config.dataset_path);
}

// ---------------------------------------------------------------------------

void cmd_gen_data(const Context& ctx) {
  ArtifactSet art(ctx.config.out_dir, "gen-data");
  const Model model = load_model(ctx.config);
  const Tokenizer tok = load_tokenizer(ctx.config);
  TaskDataset ds = obtain_dataset(ctx.config, model, &tok, ctx.config.task, "");
  write_jsonl(ds, art.path("dataset.jsonl"));
  std::map<int, std::size_t> per_start, per_template;
  for (const auto& s : ds.clean) {
    ++per_start[s.start_index];
    ++per_template[s.template_id];
  }
  json details = {{"samples", ds.size()}, {"seq_len", ds.seq_len()}};
  for (const auto& [k, v] : per_start) details["per_start"][std::to_string(k)] = v;
  for (const auto& [k, v] : per_template) details["per_template"][std::to_string(k)] = v;
  art.commit(ctx.config, details);
  ctx.log(fmt::format("wrote {} prompts to {}/dataset.jsonl", ds.size(), ctx.config.out_dir));
}

void cmd_baseline(const Context& ctx) {
  ArtifactSet art(ctx.config.out_dir, "baseline");
  const Model model = load_model(ctx.config);
  const auto tok = try_tokenizer(ctx.config);
  const TaskDataset ds = dataset_for(ctx, model, tok.get());
  ds.validate();

  const std::vector<double> diffs = model_scorer(model, ctx.config.workers)(ds.clean);
  double sum = 0.0;
  std::size_t positive = 0;
  for (double d : diffs) {
    sum += d;
    positive += d > 0.0;
  }
  const double mean = diffs.empty() ? 0.0 : sum / static_cast<double>(diffs.size());
  json report = {{"task", ds.task},
                 {"samples", ds.size()},
                 {"clean_logit_diff", mean},
                 {"positive_fraction", diffs.empty() ? 0.0 : double(positive) / double(diffs.size())}};

  if (tok && ds.lexicon.kind != LexiconKind::Custom) {
    std::size_t correct = 0;
    json rows = json::array();
    const auto prompts = pure_sequence_prompts(*tok, ds.lexicon, 4, ds.prepend_bos);
    for (const auto& p : prompts) {
      ForwardOptions fo;
      fo.logits = LogitsMode::Last;
      const Tensor probs = softmax_last(model.forward(p.tokens, fo).logits);
      const auto row = probs.row(0);
      const auto top = static_cast<TokenId>(std::max_element(row.begin(), row.end()) - row.begin());
      correct += top == p.answer_id;
      rows.push_back({{"prompt", p.text},
                      {"answer", tok->decode_one(p.answer_id)},
                      {"top1", tok->decode_one(top)},
                      {"p_answer", row[static_cast<std::size_t>(p.answer_id)]},
                      {"correct", top == p.answer_id}});
    }
    report["pure_prompts"] = rows;
    report["pure_correct"] = correct;
    report["pure_total"] = prompts.size();
  }
  {
    auto out = open_out(art.path("baseline.json"));
    out << report.dump(2) << '\n';
  }
  art.commit(ctx.config);
  ctx.log(fmt::format("clean logit diff {:.4f} over {} prompts", mean, ds.size()));
}

void cmd_prune_nodes(const Context& ctx) {
  ArtifactSet art(ctx.config.out_dir, "prune-nodes");
  const Model model = load_model(ctx.config);
  const auto tok = try_tokenizer(ctx.config);
  EvalSetup setup = prepare_eval(ctx, model, dataset_for(ctx, model, tok.get()));
  const SearchConfig search = ctx.config.search();

  Evaluator ev(model, setup.subset, search.mode, ctx.config.workers, setup.means);
  const NodePruneResult r = prune_nodes(ev, search, ctx.progress());

  Evaluator full(model, setup.full, search.mode, ctx.config.workers, setup.means);
  const EvalResult full_score = evaluate_circuit(full, r.circuit);

  json report = {{"task", setup.full.task},
                 {"nodes", labels(r.circuit)},
                 {"score_search", eval_json(r.score)},
                 {"score_full", eval_json(full_score)},
                 {"search_samples", setup.subset.size()},
                 {"full_samples", setup.full.size()},
                 {"sweeps", r.sweeps},
                 {"converged", r.converged},
                 {"evaluations", r.evaluations}};
  {
    auto out = open_out(art.path("nodes.json"));
    out << report.dump(2) << '\n';
  }
  {
    auto out = open_out(art.path("prune_trace.csv"));
    out << "sweep,direction,node,performance_pct,kept\n";
    for (const auto& s : r.trace) {
      fmt::print(out, "{},{},{},{:.6f},{}\n", s.sweep,
                 s.direction == SweepDirection::Backward ? "backward" : "forward", s.node.str(),
                 s.performance_pct, s.kept ? 1 : 0);
    }
  }
  art.commit(ctx.config, {{"converged", r.converged}, {"circuit_size", r.circuit.size()}});
  if (!r.converged) {
    std::cerr << fmt::format("warning: node pruning did not converge within {} sweeps\n", search.max_sweeps);
  }
  ctx.log(fmt::format("circuit of {} nodes, {:.2f}% on the full dataset", r.circuit.size(),
                      full_score.performance_pct));
}

void cmd_prune_edges(const Context& ctx, const std::string& circuit_arg) {
  const std::string circuit_path =
      circuit_arg.empty() ? (fs::path(ctx.config.out_dir) / "nodes.json").string() : circuit_arg;
  ArtifactSet art(ctx.config.out_dir, "prune-edges");
  const Model model = load_model(ctx.config);
  const std::set<NodeId> nodes = load_circuit(circuit_path, model.config());
  const auto tok = try_tokenizer(ctx.config);
  EvalSetup setup = prepare_eval(ctx, model, dataset_for(ctx, model, tok.get()));
  const SearchConfig search = ctx.config.search();

  Evaluator ev(model, setup.subset, search.mode, ctx.config.workers, setup.means);
  EdgePruneResult r = prune_edges(ev, nodes, search, ctx.progress());

  Evaluator full(model, setup.full, search.mode, ctx.config.workers, setup.means);
  r.graph.score = full.evaluate(complement(full, r.graph.nodes), r.removed);
  r.graph.seed = ctx.config.seed;
  r.graph.task = setup.full.task;

  r.graph.save(art.path("graph.json"));
  {
    auto out = open_out(art.path("graph.dot"));
    out << r.graph.to_dot();
  }
  {
    auto out = open_out(art.path("edge_trace.csv"));
    out << "sender,receiver,slot,performance_pct,kept\n";
    for (const auto& [edge, perf] : r.trace) {
      const std::string receiver =
          edge.receiver.kind == ReceiverSlot::Kind::ResidPostFinal ? "resid_post" : edge.receiver.owner().str();
      fmt::print(out, "{},{},{},{:.6f},{}\n", edge.sender.str(), receiver, edge.receiver.slot_name(), perf,
                 r.graph.edges.count(edge) ? 1 : 0);
    }
  }
  art.commit(ctx.config, {{"circuit", circuit_path},
                          {"nodes", r.graph.nodes.size()},
                          {"edges", r.graph.edges.size()},
                          {"performance_pct", r.graph.score.performance_pct}});
  ctx.log(fmt::format("{} edges over {} nodes, {:.2f}% on the full dataset", r.graph.edges.size(),
                      r.graph.nodes.size(), r.graph.score.performance_pct));
}

void cmd_drop_table(const Context& ctx, const std::string& circuit_arg, const std::vector<std::string>& only) {
  ArtifactSet art(ctx.config.out_dir, "drop-table");
  const Model model = load_model(ctx.config);
  const auto& mc = model.config();
  const std::vector<NodeId> every = all_nodes(mc.n_layers, mc.n_heads);
  const std::set<NodeId> circuit =
      circuit_arg.empty() ? std::set<NodeId>(every.begin(), every.end()) : load_circuit(circuit_arg, mc);
  std::vector<NodeId> targets;
  if (only.empty()) {
    targets.assign(circuit.begin(), circuit.end());
  } else {
    for (const auto& t : only) {
      NodeId n;
      try {
        n = NodeId::parse(t);
      } catch (const ArgumentError& e) {
        throw ConfigError(e.what());
      }
      if (!circuit.count(n)) throw ConfigError(fmt::format("{} is not in the circuit", t));
      targets.push_back(n);
    }
  }
  const auto tok = try_tokenizer(ctx.config);
  EvalSetup setup = prepare_eval(ctx, model, dataset_for(ctx, model, tok.get()));
  Evaluator ev(model, setup.full, parse_mode(ctx.config.mode), ctx.config.workers, setup.means);

  const std::set<NodeId> base_ablate = complement(ev, circuit);
  ev.enable_prefix_reuse({}, ctx.config.reuse_budget_mb << 20);
  const EvalResult base = ev.evaluate(base_ablate);
  if (ev.prefix_reuse()) ev.commit_last();

  std::vector<DropRow> rows;
  for (const auto& n : targets) {
    std::set<NodeId> ablate = base_ablate;
    ablate.insert(n);
    const double drop = base.performance_pct - ev.evaluate(ablate).performance_pct;
    rows.push_back({n.str(), setup.full.task, drop});
    ctx.log(fmt::format("{:>6}  drop {:8.3f}", n.str(), drop));
  }
  write_drop_csv(rows, art.path("drops.csv"));
  art.commit(ctx.config, {{"circuit", circuit_arg.empty() ? "full model" : circuit_arg},
                          {"circuit_performance_pct", base.performance_pct}});
}

std::map<std::string, std::string> parse_pairs(const std::vector<std::string>& items, const char* flag) {
  std::map<std::string, std::string> out;
  for (const auto& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == item.size()) {
      throw ConfigError(fmt::format("{} expects name=path, got '{}'", flag, item));
    }
    out[item.substr(0, eq)] = item.substr(eq + 1);
  }
  return out;
}

void cmd_cross_eval(const Context& ctx, const std::vector<std::string>& circuit_args,
                    const std::vector<std::string>& tasks, const std::vector<std::string>& dataset_args) {
  if (circuit_args.empty()) throw ConfigError("cross-eval needs at least one --circuit name=path");
  const auto circuit_paths = parse_pairs(circuit_args, "--circuit");
  const auto dataset_paths = parse_pairs(dataset_args, "--task-dataset");
  for (const auto& t : tasks) lexicon_for_task(t);

  ArtifactSet art(ctx.config.out_dir, "cross-eval");
  const Model model = load_model(ctx.config);
  std::map<std::string, std::set<NodeId>> circuits;
  for (const auto& [name, path] : circuit_paths) circuits[name] = load_circuit(path, model.config());
  const auto tok = try_tokenizer(ctx.config);
  const AblationMode mode = parse_mode(ctx.config.mode);

  auto out = open_out(art.path("cross_eval.csv"));
  out << "circuit,task,mode,performance_pct,clean_logit_diff,ablated_logit_diff\n";
  for (const auto& task : tasks) {
    const auto it = dataset_paths.find(task);
    const std::string ds_path = it != dataset_paths.end() ? it->second : "";
    if (ds_path.empty()) ctx.log(fmt::format("generating {} {} prompts", ctx.config.n_samples, task));
    EvalSetup setup = prepare_eval(ctx, model, obtain_dataset(ctx.config, model, tok.get(), task, ds_path));
    Evaluator ev(model, setup.full, mode, ctx.config.workers, setup.means);
    for (const auto& [name, nodes] : circuits) {
      const EvalResult r = evaluate_circuit(ev, nodes);
      fmt::print(out, "{},{},{},{:.6f},{:.6f},{:.6f}\n", csv_field(name), task, mode_name(mode), r.performance_pct,
                 r.clean_logit_diff, r.ablated_logit_diff);
      ctx.log(fmt::format("{:>12} on {:<13} {:8.2f}%", name, task, r.performance_pct));
    }
  }
  out.close();
  art.commit(ctx.config);
}

void cmd_attn(const Context& ctx, const std::vector<std::string>& head_args) {
  ArtifactSet art(ctx.config.out_dir, "attn");
  const Model model = load_model(ctx.config);
  const std::vector<NodeId> heads = parse_heads(head_args, model.config());
  const auto tok = try_tokenizer(ctx.config);
  const TaskDataset ds = dataset_for(ctx, model, tok.get());
  ds.validate();
  std::vector<std::vector<TokenId>> prompts;
  for (const auto& s : ds.clean) prompts.push_back(s.tokens);

  const auto summaries = attention_summaries(model, prompts, heads, tok.get(), ctx.config.workers);
  auto csv = open_out(art.path("attn_summary.csv"));
  csv << "head,diagonal_mean,off_diagonal_mean,final_argmax_pos,final_argmax_token\n";
  for (const auto& s : summaries) {
    const std::string name = fmt::format("attn_{}.tsv", s.head.str());
    write_attention_tsv(s, art.path(name));
    art.path(name + ".json");
    const DiagonalStats d = diagonal_stats(s.matrix);
    const auto last = s.matrix.row(s.matrix.rows() - 1);
    const auto arg = static_cast<std::size_t>(std::max_element(last.begin(), last.end()) - last.begin());
    const std::string token = arg < s.axis_tokens.size() ? s.axis_tokens[arg] : "";
    fmt::print(csv, "{},{:.6f},{:.6f},{},{}\n", s.head.str(), d.diagonal_mean, d.off_diagonal_mean, arg,
               csv_field(token));
  }
  csv.close();
  art.commit(ctx.config, {{"samples", prompts.size()}});
}

OvPromptSet ov_prompt_set(const Tokenizer& tok, const std::string& kind, const std::string& lexicon, bool bos) {
  KeywordMode mode;
  if (kind == "successor") mode = KeywordMode::Successor;
  else if (kind == "copy") mode = KeywordMode::Copy;
  else if (kind == "next_rank" || kind == "next-rank") mode = KeywordMode::NextRank;
  else throw ConfigError(fmt::format("unknown --kind '{}' (successor, copy, next_rank)", kind));

  if (mode == KeywordMode::NextRank) {
    if (lexicon != "months") throw ConfigError("next_rank keywords exist only for the months lexicon");
    return month_rank_prompts(tok, bos);
  }
  if (lexicon == "numerals") return numeral_ov_prompts(tok, mode, 1, 97, bos);
  if (lexicon == "number_words" || lexicon == "number-words") {
    return word_ov_prompts(tok, "number_words", number_words_to_twenty(), mode, bos);
  }
  if (lexicon == "months") return word_ov_prompts(tok, "months", SequenceLexicon::months().members, mode, bos);
  throw ConfigError(fmt::format("unknown --lexicon '{}' (numerals, number_words, months)", lexicon));
}

void cmd_ov_scores(const Context& ctx, const std::string& kind, const std::string& lexicon,
                   const std::vector<std::string>& head_args, std::size_t k, const std::string& detail_head,
                   bool no_bos) {
  if (k == 0) throw ConfigError("--top-k must be positive");
  ArtifactSet art(ctx.config.out_dir, "ov-scores");
  const Model model = load_model(ctx.config);
  const Tokenizer tok = load_tokenizer(ctx.config);
  const auto& mc = model.config();
  std::vector<NodeId> heads;
  if (head_args.empty()) {
    for (const auto& n : all_nodes(mc.n_layers, mc.n_heads)) {
      if (n.is_head()) heads.push_back(n);
    }
  } else {
    heads = parse_heads(head_args, mc);
  }
  const OvPromptSet set = ov_prompt_set(tok, kind, lexicon, !no_bos);
  if (set.prompts.empty()) throw ConfigError("no prompt survives the single-token keyword check");
  const auto reports = ov_scores(model, set, heads, k, ctx.config.workers);
  const std::string stem = fmt::format("ov_{}_{}", keyword_mode_name(set.mode), set.name);
  write_ov_csv(reports, art.path(stem + ".csv"));

  if (!detail_head.empty()) {
    const NodeId want = parse_heads({detail_head}, mc).front();
    const auto it = std::find_if(reports.begin(), reports.end(), [&](const auto& r) { return r.head == want; });
    if (it == reports.end()) throw ConfigError(fmt::format("--detail-head {} is not among --heads", detail_head));
    auto out = open_out(art.path(fmt::format("{}_{}.csv", stem, want.str())));
    out << "prompt,rank,token_id,token,logit,keyword\n";
    for (std::size_t p = 0; p < set.prompts.size(); ++p) {
      const auto& prompt = set.prompts[p];
      for (std::size_t r = 0; r < it->top[p].size(); ++r) {
        const auto& ts = it->top[p][r];
        const bool is_kw = std::find(prompt.keywords.begin(), prompt.keywords.end(), ts.id) != prompt.keywords.end();
        fmt::print(out, "{},{},{},{},{:.6f},{}\n", csv_field(prompt.label), r + 1, ts.id,
                   csv_field(tok.decode_one(ts.id)), ts.logit, is_kw ? 1 : 0);
      }
    }
  }
  art.commit(ctx.config, {{"prompts", set.prompts.size()}, {"skipped", set.skipped}, {"top_k", k}});
  for (const auto& r : reports) {
    if (reports.size() <= 12 || r.score_pct > 0.0) {
      ctx.log(fmt::format("{:>6} {:7.2f}% ({}/{})", r.head.str(), r.score_pct, r.hits, r.keywords));
    }
  }
}

void cmd_logit_lens(const Context& ctx, const std::vector<std::string>& prompts, std::size_t k, bool no_bos) {
  if (prompts.empty()) throw ConfigError("logit-lens needs at least one --prompt");
  if (k == 0) throw ConfigError("--k must be positive");
  ArtifactSet art(ctx.config.out_dir, "logit-lens");
  const Model model = load_model(ctx.config);
  const Tokenizer tok = load_tokenizer(ctx.config);
  json index = json::array();
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    std::vector<TokenId> tokens;
    if (!no_bos) tokens.push_back(tok.eos_id());
    const auto body = tok.encode(prompts[i]);
    tokens.insert(tokens.end(), body.begin(), body.end());
    if (tokens.empty()) throw ConfigError("empty prompt");
    const LogitLensTable table = logit_lens(model, tokens, k);
    const std::string name = fmt::format("lens_{}.csv", i);
    write_lens_csv(table, tok, art.path(name));
    index.push_back({{"file", name}, {"prompt", prompts[i]}});
  }
  art.commit(ctx.config, {{"prompts", index}});
}

void cmd_lens_census(const Context& ctx, int target_layer) {
  ArtifactSet art(ctx.config.out_dir, "lens-census");
  const Model model = load_model(ctx.config);
  if (target_layer < 0 || target_layer >= model.config().n_layers) {
    throw ConfigError(fmt::format("--target-layer must lie in [0, {})", model.config().n_layers));
  }
  const auto tok = try_tokenizer(ctx.config);
  const TaskDataset ds = dataset_for(ctx, model, tok.get());
  const LensCensus c = lens_transition_census(model, ds.clean, target_layer, ctx.config.workers);
  write_census_csv(c, art.path("census.csv"));
  {
    auto out = open_out(art.path("census.json"));
    out << json{{"target_layer", c.target_layer},
                {"samples", c.first_layer.size()},
                {"at_target", c.at_target},
                {"fraction", c.fraction},
                {"histogram", c.histogram}}
               .dump(2)
        << '\n';
  }
  art.commit(ctx.config);
  ctx.log(fmt::format("{}/{} prompts first predict the answer at layer {} ({:.2f}%)", c.at_target,
                      c.first_layer.size(), target_layer, 100.0 * c.fraction));
}

// Ablates the nodes shared by every given circuit and compares against random
// head sets of the same size drawn from outside that intersection.
void cmd_destroy(const Context& ctx, const std::vector<std::string>& circuit_args, std::size_t random_count,
                 std::optional<std::size_t> random_size, int n_new) {
  if (circuit_args.empty()) throw ConfigError("destroy needs --circuit");
  if (n_new <= 0) throw ConfigError("--n-new must be positive");
  ArtifactSet art(ctx.config.out_dir, "destroy");
  const Model model = load_model(ctx.config);
  const auto& mc = model.config();
  std::set<NodeId> circuit = load_circuit(circuit_args.front(), mc);
  for (std::size_t i = 1; i < circuit_args.size(); ++i) {
    const std::set<NodeId> other = load_circuit(circuit_args[i], mc);
    std::erase_if(circuit, [&](const NodeId& n) { return !other.count(n); });
  }
  if (circuit.empty()) throw ConfigError("the circuits share no node");
  const Tokenizer tok = load_tokenizer(ctx.config);
  const SequenceLexicon lex = ctx.config.lexicon();
  lex.validate(tok);
  const auto ids = lex.member_ids(tok);

  std::vector<ContinuationPrompt> prompts;
  for (const auto& p : pure_sequence_prompts(tok, lex, 4, true)) {
    const auto first = static_cast<std::size_t>(p.start_index - 1) + 4;
    if (first + static_cast<std::size_t>(n_new) > ids.size()) continue;
    ContinuationPrompt cp{p.tokens, {ids.begin() + long(first), ids.begin() + long(first) + n_new}, p.text};
    prompts.push_back(std::move(cp));
  }
  if (prompts.empty()) throw ConfigError("no member-only prompt has room for the requested continuation");

  std::vector<NodeId> heads;
  for (const auto& n : all_nodes(mc.n_layers, mc.n_heads)) {
    if (n.is_head()) heads.push_back(n);
  }
  std::size_t circuit_heads = 0;
  for (const auto& n : circuit) circuit_heads += n.is_head();
  const std::size_t size = random_size.value_or(circuit_heads);
  if (size == 0 || size + circuit_heads > heads.size()) {
    throw ConfigError(fmt::format("--random-size {} does not fit outside the circuit", size));
  }

  auto out = open_out(art.path("destroy.csv"));
  out << "set,kind,size,destroyed_pct,destroyed,counted,excluded\n";
  auto row = [&](const std::string& name, const char* kind, const std::set<NodeId>& ablate) {
    const DestroyResult r = percentage_destroyed(model, prompts, ablate);
    fmt::print(out, "{},{},{},{:.6f},{},{},{}\n", name, kind, ablate.size(), r.destroyed_pct, r.destroyed, r.counted,
               r.excluded.size());
    ctx.log(fmt::format("{:>10} {:7.2f}% destroyed", name, r.destroyed_pct));
  };
  row(circuit_args.size() > 1 ? "intersection" : "circuit", "circuit", circuit);
  const auto random_sets = random_component_sets(heads, size, random_count, circuit, ctx.config.seed);
  for (std::size_t i = 0; i < random_sets.size(); ++i) row(fmt::format("random_{}", i), "random", random_sets[i]);
  out.close();
  art.commit(ctx.config, {{"circuits", circuit_args},
                          {"ablated", labels(circuit)},
                          {"prompts", prompts.size()},
                          {"n_new", n_new}});
}

}  // namespace
}  // namespace seqcirc::cli

int main(int argc, char** argv) {
  using namespace seqcirc;
  using namespace seqcirc::cli;

  CLI::App app{"Hooked GPT-2 engine and circuit discovery for sequence continuation"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string("seqcirc ") + git_revision());

  Overrides o;
  app.add_option("--config", o.config_path, "JSON file with experiment settings (flags override it)");
  app.add_option("--model", o.model, "GPT-2 safetensors file (default: $SEQCIRC_MODEL)");
  app.add_option("--vocab-dir", o.vocab_dir, "directory with vocab.json and merges.txt");
  app.add_option("--data-dir", o.data_dir, "directory with names.txt and items.txt");
  app.add_option("--task", o.task, "numerals, number_words, months or custom:<word list>");
  app.add_option("--n", o.n, "prompts to generate");
  app.add_option("--seed", o.seed, "seed for generation, corruption and random sets");
  app.add_option("--t-node", o.t_node, "node pruning threshold in percent");
  app.add_option("--t-edge", o.t_edge, "edge pruning threshold in percent");
  app.add_option("--mode", o.mode, "ablation: mean, zero or resample");
  app.add_option("--sample-cap", o.sample_cap, "prompts used during the searches (0 = all)");
  app.add_option("--max-sweeps", o.max_sweeps, "node pruning sweep limit");
  app.add_option("--out", o.out, "output directory");
  app.add_option("--workers", o.workers, "worker threads (0 = hardware concurrency)");
  app.add_option("--dataset", o.dataset, "read prompts from a JSONL file instead of generating them");
  app.add_option("--reuse-budget-mb", o.reuse_budget_mb, "memory for prefix reuse during searches");
  app.add_flag("-q,--quiet", o.quiet, "no progress output");

  auto* gen = app.add_subcommand("gen-data", "generate and corrupt a prompt dataset");
  auto* base = app.add_subcommand("baseline", "clean logit difference and member-only prompt accuracy");
  auto* pn = app.add_subcommand("prune-nodes", "iterative node pruning");
  auto* pe = app.add_subcommand("prune-edges", "iterative edge pruning over a node circuit");
  std::string pe_circuit;
  pe->add_option("--circuit", pe_circuit, "node set (default: <out>/nodes.json)");

  auto* dt = app.add_subcommand("drop-table", "performance drop when removing each circuit node");
  std::string dt_circuit;
  std::vector<std::string> dt_nodes;
  dt->add_option("--circuit", dt_circuit, "node set (default: the full model)");
  dt->add_option("--nodes", dt_nodes, "only report these nodes")->delimiter(',');

  auto* ce = app.add_subcommand("cross-eval", "score circuits on several tasks");
  std::vector<std::string> ce_circuits, ce_datasets;
  std::vector<std::string> ce_tasks{"numerals", "number_words", "months"};
  ce->add_option("--circuit", ce_circuits, "name=path, repeatable");
  ce->add_option("--tasks", ce_tasks, "tasks to evaluate")->delimiter(',')->capture_default_str();
  ce->add_option("--task-dataset", ce_datasets, "task=path JSONL to use for a task, repeatable");

  auto* at = app.add_subcommand("attn", "mean attention patterns over the dataset");
  std::vector<std::string> at_heads{"9.1", "7.11", "4.4", "0.1"};
  at->add_option("--heads", at_heads, "heads as L.H")->delimiter(',')->capture_default_str();

  auto* ov = app.add_subcommand("ov-scores", "OV-circuit keyword scores");
  std::string ov_kind = "successor", ov_lexicon = "numerals", ov_detail;
  std::vector<std::string> ov_heads;
  std::size_t ov_k = 5;
  bool ov_no_bos = false;
  ov->add_option("--kind", ov_kind, "successor, copy or next_rank")->capture_default_str();
  ov->add_option("--lexicon", ov_lexicon, "numerals, number_words or months")->capture_default_str();
  ov->add_option("--heads", ov_heads, "heads as L.H (default: all)")->delimiter(',');
  ov->add_option("--top-k", ov_k, "tokens checked per prompt")->capture_default_str();
  ov->add_option("--detail-head", ov_detail, "also export per-prompt top tokens of this head");
  ov->add_flag("--no-bos", ov_no_bos, "do not prepend <|endoftext|>");

  auto* ll = app.add_subcommand("logit-lens", "top tokens of every layer's residual stream");
  std::vector<std::string> ll_prompts;
  std::size_t ll_k = 3;
  bool ll_no_bos = false;
  ll->add_option("--prompt", ll_prompts, "prompt text, repeatable")->required();
  ll->add_option("--k", ll_k, "tokens per layer")->capture_default_str();
  ll->add_flag("--no-bos", ll_no_bos, "do not prepend <|endoftext|>");

  auto* lc = app.add_subcommand("lens-census", "first layer at which the lens predicts the answer");
  int lc_target = 9;
  lc->add_option("--target-layer", lc_target, "layer whose share is reported")->capture_default_str();

  auto* ds = app.add_subcommand("destroy", "continuation failures after zero-ablating shared circuit nodes and random head sets");
  std::vector<std::string> ds_circuits;
  std::size_t ds_count = 20;
  std::optional<std::size_t> ds_size;
  int ds_new = 1;
  ds->add_option("--circuit", ds_circuits, "node set, repeatable; their intersection is ablated")->required();
  ds->add_option("--random-count", ds_count, "random head sets")->capture_default_str();
  ds->add_option("--random-size", ds_size, "heads per random set (default: circuit heads)");
  ds->add_option("--n-new", ds_new, "continuation tokens that must match")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  try {
    Context ctx{resolve(o), o.quiet};
    if (gen->parsed()) cmd_gen_data(ctx);
    else if (base->parsed()) cmd_baseline(ctx);
    else if (pn->parsed()) cmd_prune_nodes(ctx);
    else if (pe->parsed()) cmd_prune_edges(ctx, pe_circuit);
    else if (dt->parsed()) cmd_drop_table(ctx, dt_circuit, dt_nodes);
    else if (ce->parsed()) cmd_cross_eval(ctx, ce_circuits, ce_tasks, ce_datasets);
    else if (at->parsed()) cmd_attn(ctx, at_heads);
    else if (ov->parsed()) cmd_ov_scores(ctx, ov_kind, ov_lexicon, ov_heads, ov_k, ov_detail, ov_no_bos);
    else if (ll->parsed()) cmd_logit_lens(ctx, ll_prompts, ll_k, ll_no_bos);
    else if (lc->parsed()) cmd_lens_census(ctx, lc_target);
    else if (ds->parsed()) cmd_destroy(ctx, ds_circuits, ds_count, ds_size, ds_new);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const LoadError& e) {
    std::cerr << "error: model load failed: " << e.what() << '\n';
    return 3;
  } catch (const DatasetUnfitError& e) {
    std::cerr << "error: dataset unfit: " << e.what() << '\n';
    return 4;
  } catch (const GenerationExhaustedError& e) {
    std::cerr << fmt::format("error: dataset generation exhausted (acceptance rate {:.4f}): {}\n",
                             e.acceptance_rate(), e.what());
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
